//! Handcrafted FPFH descriptors, cross-scan feature matching, and the
//! static-match filter that feeds motion estimation.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, VoxelKey};
use crate::kdtree::KdTree;

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// A 33-bin FPFH descriptor (11 bins each for the alpha, phi, theta angles).
/// Each sub-histogram is normalized to sum to 1 (or is all-zero for isolated
/// points), so descriptors compare on shape rather than neighbor count.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: [f64; FPFH_DIM],
}

impl Descriptor {
    pub fn zero() -> Descriptor {
        Descriptor {
            values: [0.0; FPFH_DIM],
        }
    }

    pub fn dist_sq(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// A nearest-neighbor match from a rescan point to a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub index_s: u32,
    pub index_r: u32,
    pub distance_feature: f64,
}

/// The Darboux-frame pair angles (alpha, phi, theta) for an ordered point
/// pair, with the source chosen as the endpoint whose normal deviates less
/// from the connecting line. Returns None for degenerate geometry
/// (coincident points or a normal parallel to the line).
fn pair_angles(
    p1: Vector3<f64>,
    n1: Vector3<f64>,
    p2: Vector3<f64>,
    n2: Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let diff = p2 - p1;
    let dist = diff.norm();
    if dist < 1e-12 {
        return None;
    }
    let mut d = diff / dist;
    let (ns, nt) = if (n1.dot(&d)).abs() >= (n2.dot(&d)).abs() {
        (n1, n2)
    } else {
        d = -d;
        (n2, n1)
    };
    let u = ns;
    let v_raw = d.cross(&u);
    let v_norm = v_raw.norm();
    if v_norm < 1e-12 {
        return None;
    }
    let v = v_raw / v_norm;
    let w = u.cross(&v);
    let alpha = v.dot(&nt);
    let phi = u.dot(&d);
    let theta = w.dot(&nt).atan2(u.dot(&nt));
    Some((alpha, phi, theta))
}

fn bin_index(value: f64, lo: f64, hi: f64) -> usize {
    let t = (value - lo) / (hi - lo);
    ((t * FPFH_BINS as f64) as usize).min(FPFH_BINS - 1)
}

/// Accumulates one pair's angles into a raw 33-bin histogram.
fn accumulate(hist: &mut [f64; FPFH_DIM], angles: (f64, f64, f64)) {
    let (alpha, phi, theta) = angles;
    hist[bin_index(alpha, -1.0, 1.0)] += 1.0;
    hist[FPFH_BINS + bin_index(phi, -1.0, 1.0)] += 1.0;
    hist[2 * FPFH_BINS + bin_index(theta, -std::f64::consts::PI, std::f64::consts::PI)] += 1.0;
}

/// Normalizes each 11-bin sub-histogram to sum to 1 in place.
fn normalize_sub(hist: &mut [f64; FPFH_DIM]) {
    for s in 0..3 {
        let range = s * FPFH_BINS..(s + 1) * FPFH_BINS;
        let sum: f64 = hist[range.clone()].iter().sum();
        if sum > 0.0 {
            for v in &mut hist[range] {
                *v /= sum;
            }
        }
    }
}

/// Two-pass FPFH over all points: per-point SPFH histograms from the pair
/// angles against every radius neighbor, then distance-weighted aggregation
/// FPFH(p) = SPFH(p) + (1/k) sum_k (1/dist_k) SPFH(p_k). Points with fewer
/// than two neighbors get a zero descriptor.
pub fn compute_fpfh(cloud: &PointCloud, radius: f64) -> Result<Vec<Descriptor>> {
    assert!(radius > 0.0, "radius must be positive");
    let normals = cloud.normals.as_ref().ok_or(Error::MissingNormals)?;
    let tree = KdTree::build(&cloud.points);

    let neighbors: Vec<Vec<usize>> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            tree.within_radius(p, radius)
                .into_iter()
                .filter(|&j| j != i)
                .collect()
        })
        .collect();

    let spfh: Vec<[f64; FPFH_DIM]> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut hist = [0.0; FPFH_DIM];
            for &j in &neighbors[i] {
                if let Some(angles) = pair_angles(
                    p.to_vec(),
                    normals[i],
                    cloud.points[j].to_vec(),
                    normals[j],
                ) {
                    accumulate(&mut hist, angles);
                }
            }
            normalize_sub(&mut hist);
            hist
        })
        .collect();

    Ok(cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if neighbors[i].len() < 2 {
                return Descriptor::zero();
            }
            let mut values = spfh[i];
            let k = neighbors[i].len() as f64;
            for &j in &neighbors[i] {
                let d = p.dist(cloud.points[j]);
                if d < 1e-12 {
                    continue;
                }
                let w = 1.0 / (k * d);
                for (out, s) in values.iter_mut().zip(&spfh[j]) {
                    *out += w * s;
                }
            }
            normalize_sub(&mut values);
            Descriptor { values }
        })
        .collect())
}

/// For every rescan descriptor, its nearest reference descriptor in feature
/// space (ties broken by lowest reference index).
pub fn match_features(desc_s: &[Descriptor], desc_r: &[Descriptor]) -> Vec<Correspondence> {
    assert!(!desc_s.is_empty() && !desc_r.is_empty());
    desc_r
        .iter()
        .enumerate()
        .map(|(ir, dr)| {
            let mut best = (0usize, f64::INFINITY);
            for (is, ds) in desc_s.iter().enumerate() {
                let d2 = ds.dist_sq(dr);
                if d2 < best.1 {
                    best = (is, d2);
                }
            }
            Correspondence {
                index_s: best.0 as u32,
                index_r: ir as u32,
                distance_feature: best.1.sqrt(),
            }
        })
        .collect()
}

/// Drops correspondences whose endpoints lie closer than `delta_static` in
/// 3D; since the scans are pre-aligned those are static background.
pub fn filter_static(
    corrs: &[Correspondence],
    cloud_s: &PointCloud,
    cloud_r: &PointCloud,
    delta_static: f64,
) -> Vec<Correspondence> {
    assert!(delta_static > 0.0);
    corrs
        .iter()
        .filter(|c| {
            cloud_s.points[c.index_s as usize].dist(cloud_r.points[c.index_r as usize])
                >= delta_static
        })
        .copied()
        .collect()
}

/// Uniform grid downsampling keeping, per occupied cell, the point nearest
/// the cell center. Returns the reduced cloud plus the kept original indices.
pub fn downsample_grid(cloud: &PointCloud, cell_size: f64) -> (PointCloud, Vec<u32>) {
    assert!(cell_size > 0.0);
    use std::collections::BTreeMap;
    let mut best: BTreeMap<VoxelKey, (f64, u32)> = BTreeMap::new();
    for (i, &p) in cloud.points.iter().enumerate() {
        let key = VoxelKey::from_point(p, cell_size);
        let center = crate::geom::Point3::new(
            (key.ix as f64 + 0.5) * cell_size,
            (key.iy as f64 + 0.5) * cell_size,
            (key.iz as f64 + 0.5) * cell_size,
        );
        let d = p.dist(center);
        let entry = best.entry(key).or_insert((f64::INFINITY, 0));
        if d < entry.0 {
            *entry = (d, i as u32);
        }
    }
    let indices: Vec<u32> = best.values().map(|&(_, i)| i).collect();
    let reduced = PointCloud {
        points: indices
            .iter()
            .map(|&i| cloud.points[i as usize])
            .collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|n| indices.iter().map(|&i| n[i as usize]).collect()),
        colors: cloud
            .colors
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i as usize]).collect()),
    };
    (reduced, indices)
}
