//! Software depth rendering: pinhole projection, z-buffer rasterization,
//! back-projection, and per-pixel depth combination.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{Point3, TriangleMesh};

/// Pinhole camera with world-to-camera extrinsics.
///
/// Projection is `K * (R * X + Tr)`; camera axes are x right, y down,
/// z forward.
#[derive(Debug, Clone)]
pub struct CameraPose {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::DegenerateInput("nonpositive focal length".into()));
        }
        if self.cx <= 0.0
            || self.cx >= self.width as f64
            || self.cy <= 0.0
            || self.cy >= self.height as f64
        {
            return Err(Error::DegenerateInput(
                "principal point outside image".into(),
            ));
        }
        let t = crate::geom::RigidTransform::new(self.rotation, self.translation);
        if !t.is_rotation(1e-6) {
            return Err(Error::DegenerateInput("extrinsics not a rotation".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    fn to_camera(&self, p: Point3) -> Vector3<f64> {
        self.rotation * p.to_vec() + self.translation
    }

    /// Projects a world point to continuous image coordinates and camera-space
    /// depth. Returns None for points at or behind the camera plane.
    pub fn project(&self, p: Point3) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * c.x / c.z + self.cx,
            self.fy * c.y / c.z + self.cy,
            c.z,
        ))
    }
}

/// A range image; 0 marks pixels with no observed surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }
}

const NEAR_PLANE: f64 = 1e-6;

/// Clips a camera-space triangle against z = NEAR_PLANE.
/// Returns up to 2 triangles as vertex triples.
fn clip_near(tri: [Vector3<f64>; 3]) -> Vec<[Vector3<f64>; 3]> {
    let inside: Vec<bool> = tri.iter().map(|v| v.z > NEAR_PLANE).collect();
    let n_in = inside.iter().filter(|&&b| b).count();
    if n_in == 3 {
        return vec![tri];
    }
    if n_in == 0 {
        return vec![];
    }
    // Sutherland-Hodgman against the single plane.
    let mut poly: Vec<Vector3<f64>> = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ia, ib) = (inside[i], inside[(i + 1) % 3]);
        if ia {
            poly.push(a);
        }
        if ia != ib {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            poly.push(a + (b - a) * t);
        }
    }
    match poly.len() {
        3 => vec![[poly[0], poly[1], poly[2]]],
        4 => vec![[poly[0], poly[1], poly[2]], [poly[0], poly[2], poly[3]]],
        _ => vec![],
    }
}

/// Renders the camera-space z-depth of the nearest surface per pixel.
///
/// Perspective-correct via screen-space interpolation of 1/z; no backface
/// culling; pixels covered by no triangle stay 0.
pub fn render_depth(mesh: &TriangleMesh, pose: &CameraPose) -> DepthMap {
    let mut depth = DepthMap::zeros(pose.width, pose.height);
    let cam: Vec<Vector3<f64>> = mesh
        .vertices
        .iter()
        .map(|&v| pose.rotation * v.to_vec() + pose.translation)
        .collect();

    for face in &mesh.faces {
        let tri = [
            cam[face[0] as usize],
            cam[face[1] as usize],
            cam[face[2] as usize],
        ];
        for t in clip_near(tri) {
            rasterize(&mut depth, pose, t);
        }
    }
    depth
}

fn rasterize(depth: &mut DepthMap, pose: &CameraPose, tri: [Vector3<f64>; 3]) {
    // Screen coordinates (continuous, pixel centers at x+0.5).
    let sx = |v: &Vector3<f64>| pose.fx * v.x / v.z + pose.cx;
    let sy = |v: &Vector3<f64>| pose.fy * v.y / v.z + pose.cy;
    let p: [(f64, f64, f64); 3] = [
        (sx(&tri[0]), sy(&tri[0]), 1.0 / tri[0].z),
        (sx(&tri[1]), sy(&tri[1]), 1.0 / tri[1].z),
        (sx(&tri[2]), sy(&tri[2]), 1.0 / tri[2].z),
    ];

    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
    if area.abs() < 1e-12 {
        return;
    }

    let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);

    let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let x1 = ((max_x - 0.5).floor() as i64).min(depth.width as i64 - 1);
    let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let y1 = ((max_y - 0.5).floor() as i64).min(depth.height as i64 - 1);
    if x1 < x0 as i64 || y1 < y0 as i64 {
        return;
    }

    let inv_area = 1.0 / area;
    for py in y0..=(y1 as usize) {
        let cy = py as f64 + 0.5;
        for px in x0..=(x1 as usize) {
            let cx = px as f64 + 0.5;
            // Barycentric weights, sign-normalized so both windings rasterize.
            let w0 = ((p[1].0 - cx) * (p[2].1 - cy) - (p[1].1 - cy) * (p[2].0 - cx)) * inv_area;
            let w1 = ((p[2].0 - cx) * (p[0].1 - cy) - (p[2].1 - cy) * (p[0].0 - cx)) * inv_area;
            let w2 = 1.0 - w0 - w1;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let inv_z = w0 * p[0].2 + w1 * p[1].2 + w2 * p[2].2;
            if inv_z <= 0.0 {
                continue;
            }
            let z = 1.0 / inv_z;
            let cur = depth.get(px, py);
            if cur == 0.0 || z < cur {
                depth.set(px, py, z);
            }
        }
    }
}

/// Lifts a pixel with known depth to a world point:
/// `R^T * (K^{-1} * [x+0.5, y+0.5, 1]^T * depth - Tr)`.
pub fn backproject(pixel: (f64, f64), depth: f64, pose: &CameraPose) -> Result<Point3> {
    if depth <= 0.0 {
        return Err(Error::InvalidDepth(depth));
    }
    let x = pixel.0 + 0.5;
    let y = pixel.1 + 0.5;
    let ray = Vector3::new((x - pose.cx) / pose.fx, (y - pose.cy) / pose.fy, 1.0);
    let cam = ray * depth;
    let world = pose.rotation.transpose() * (cam - pose.translation);
    Ok(Point3::from_vec(world))
}

/// Per-pixel combination of two depth maps: 0 if either is unobserved,
/// otherwise the smaller depth (the surface closer to the camera).
pub fn combine_depths(d_s: &DepthMap, d_r: &DepthMap) -> Result<DepthMap> {
    if d_s.width != d_r.width || d_s.height != d_r.height {
        return Err(Error::DimensionMismatch(
            d_s.width, d_s.height, d_r.width, d_r.height,
        ));
    }
    let mut out = DepthMap::zeros(d_s.width, d_s.height);
    for (i, v) in out.values.iter_mut().enumerate() {
        let a = d_s.values[i];
        let b = d_r.values[i];
        *v = if a == 0.0 || b == 0.0 { 0.0 } else { a.min(b) };
    }
    Ok(out)
}
