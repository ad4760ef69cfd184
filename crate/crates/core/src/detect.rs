//! Initial change detection: depth differencing per viewpoint, thresholding,
//! and back-projection of changed pixels to 3D.

use crate::error::{Error, Result};
use crate::geom::{Point3, TriangleMesh};
use crate::render::{backproject, combine_depths, render_depth, CameraPose, DepthMap};

/// Per-viewpoint binary mask; true marks a changed pixel.
#[derive(Debug, Clone)]
pub struct ChangeMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl ChangeMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
}

/// Union of 3D points labeled as changed over all viewpoints.
#[derive(Debug, Clone, Default)]
pub struct ChangePoints {
    pub points: Vec<Point3>,
}

/// Pixel is changed iff both depths are observed and differ by more than tau.
pub fn diff_mask(d_s: &DepthMap, d_r: &DepthMap, tau: f64) -> Result<ChangeMask> {
    assert!(tau > 0.0, "tau must be positive");
    if d_s.width != d_r.width || d_s.height != d_r.height {
        return Err(Error::DimensionMismatch(
            d_s.width, d_s.height, d_r.width, d_r.height,
        ));
    }
    let bits = d_s
        .values
        .iter()
        .zip(&d_r.values)
        .map(|(&a, &b)| a != 0.0 && b != 0.0 && (a - b).abs() > tau)
        .collect();
    Ok(ChangeMask {
        width: d_s.width,
        height: d_s.height,
        bits,
    })
}

/// Renders both scans from every pose, thresholds depth differences, and
/// back-projects changed pixels at the smaller observed depth.
pub fn detect_changes(
    scan_s: &TriangleMesh,
    scan_r: &TriangleMesh,
    poses: &[CameraPose],
    tau: f64,
) -> Result<ChangePoints> {
    let mut points = Vec::new();
    for pose in poses {
        let (mask, combined) = detect_view(scan_s, scan_r, pose, tau)?;
        collect_view_points(&mask, &combined, pose, &mut points)?;
    }
    Ok(ChangePoints { points })
}

/// One viewpoint's mask plus the combined (min) depth map.
pub fn detect_view(
    scan_s: &TriangleMesh,
    scan_r: &TriangleMesh,
    pose: &CameraPose,
    tau: f64,
) -> Result<(ChangeMask, DepthMap)> {
    let d_s = render_depth(scan_s, pose);
    let d_r = render_depth(scan_r, pose);
    let mask = diff_mask(&d_s, &d_r, tau)?;
    let combined = combine_depths(&d_s, &d_r)?;
    Ok((mask, combined))
}

fn collect_view_points(
    mask: &ChangeMask,
    combined: &DepthMap,
    pose: &CameraPose,
    out: &mut Vec<Point3>,
) -> Result<()> {
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                let d = combined.get(x, y);
                debug_assert!(d > 0.0);
                out.push(backproject((x as f64, y as f64), d, pose)?);
            }
        }
    }
    Ok(())
}
