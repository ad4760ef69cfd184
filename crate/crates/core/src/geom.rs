//! Core geometric types shared by all pipeline stages: points, clouds,
//! meshes, rigid transforms, and voxel binning.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// A 3D point in world coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_vec(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vec(v: Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }

    pub fn sub(self, other: Point3) -> Vector3<f64> {
        self.to_vec() - other.to_vec()
    }

    pub fn add(self, v: Vector3<f64>) -> Point3 {
        Point3::from_vec(self.to_vec() + v)
    }

    pub fn dist(self, other: Point3) -> f64 {
        self.sub(other).norm()
    }

    pub fn dist_sq(self, other: Point3) -> f64 {
        self.sub(other).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coord(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// A point set with optional per-point unit normals and RGB colors in [0,1].
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            normals: None,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks parallel-array lengths and normal unit norms (1 +/- 1e-4).
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.normals {
            if n.len() != self.points.len() {
                return Err(Error::DegenerateInput(format!(
                    "{} normals for {} points",
                    n.len(),
                    self.points.len()
                )));
            }
            for v in n {
                if (v.norm() - 1.0).abs() > 1e-4 {
                    return Err(Error::DegenerateInput(format!(
                        "normal with norm {}",
                        v.norm()
                    )));
                }
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::DegenerateInput(format!(
                    "{} colors for {} points",
                    c.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }
}

/// An indexed triangle mesh, optionally with per-vertex normals and colors.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Option<Vec<Vector3<f64>>>,
    pub vertex_colors: Option<Vec<[f64; 3]>>,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for f in &self.faces {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::DegenerateInput(format!(
                    "face index out of range: {:?} with {} vertices",
                    f, n
                )));
            }
        }
        Ok(())
    }

    /// The mesh vertices as a point cloud, with stored normals if present or
    /// area-weighted face normals otherwise.
    pub fn as_point_cloud(&self) -> PointCloud {
        let normals = match &self.vertex_normals {
            Some(n) => Some(n.clone()),
            None => self.computed_vertex_normals(),
        };
        PointCloud {
            points: self.vertices.clone(),
            normals,
            colors: self.vertex_colors.clone(),
        }
    }

    fn computed_vertex_normals(&self) -> Option<Vec<Vector3<f64>>> {
        if self.faces.is_empty() {
            return None;
        }
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let a = self.vertices[f[0] as usize];
            let b = self.vertices[f[1] as usize];
            let c = self.vertices[f[2] as usize];
            let n = b.sub(a).cross(&c.sub(a)); // area-weighted
            for &i in f {
                acc[i as usize] += n;
            }
        }
        Some(
            acc.into_iter()
                .map(|v| {
                    let n = v.norm();
                    if n > 1e-12 {
                        v / n
                    } else {
                        Vector3::new(0.0, 0.0, 1.0)
                    }
                })
                .collect(),
        )
    }
}

/// A rigid motion: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Rotation about `axis` by `angle` radians around point `center`,
    /// plus an extra translation `shift`.
    pub fn about_point(
        axis: Vector3<f64>,
        angle: f64,
        center: Point3,
        shift: Vector3<f64>,
    ) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        )
        .into_inner();
        let c = center.to_vec();
        RigidTransform {
            rotation: r,
            translation: c - r * c + shift,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        Point3::from_vec(self.rotation * p.to_vec() + self.translation)
    }

    pub fn apply_normal(&self, n: Vector3<f64>) -> Vector3<f64> {
        self.rotation * n
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        // self after other: x -> self(other(x))
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in [0, pi].
    pub fn rotation_angle(&self) -> f64 {
        let tr = self.rotation.trace();
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Angle of the relative rotation between two transforms, radians.
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let tr = rel.trace();
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_error(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        let should_be_i = self.rotation.transpose() * self.rotation;
        let dev = (should_be_i - Matrix3::identity()).abs().max();
        dev <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn rotation_rows(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn from_rows(rows: [[f64; 3]; 3], t: [f64; 3]) -> Self {
        RigidTransform {
            rotation: Matrix3::new(
                rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2],
                rows[2][0], rows[2][1], rows[2][2],
            ),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }
}

/// Integer cell index of a voxel grid anchored at the world origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub fn from_point(p: Point3, cell_size: f64) -> Self {
        VoxelKey {
            ix: (p.x / cell_size).floor() as i64,
            iy: (p.y / cell_size).floor() as i64,
            iz: (p.z / cell_size).floor() as i64,
        }
    }
}

/// Least-squares rigid transform from `source` onto `target`
/// (orthogonal Procrustes without scale, reflection suppressed).
pub fn fit_rigid(source: &[Point3], target: &[Point3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::DegenerateInput(format!(
            "point count mismatch: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need >= 3 correspondences, got {}",
            source.len()
        )));
    }
    let n = source.len() as f64;
    let mut mu_s = Vector3::zeros();
    let mut mu_t = Vector3::zeros();
    for (s, t) in source.iter().zip(target) {
        mu_s += s.to_vec();
        mu_t += t.to_vec();
    }
    mu_s /= n;
    mu_t /= n;

    // Cross-covariance H = sum (t - mu_t)(s - mu_s)^T
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let sc = s.to_vec() - mu_s;
        let tc = t.to_vec() - mu_t;
        h += tc * sc.transpose();
    }

    let svd = nalgebra::SVD::new(h, true, true);
    let u = svd.u.ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;

    // Rank of the centered source covariance: collinear sets have rank < 2.
    let sv = svd.singular_values;
    let tol = sv[0].max(1e-12) * 1e-9;
    if sv[1] <= tol {
        return Err(Error::DegenerateInput(
            "source points are collinear or coincident".into(),
        ));
    }

    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the axis of the smallest singular value.
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * v_t;
    }
    let t = mu_t - r * mu_s;
    Ok(RigidTransform {
        rotation: r,
        translation: t,
    })
}

/// Applies a rigid transform to a point (R*p + t).
pub fn apply_transform(t: &RigidTransform, p: Point3) -> Point3 {
    t.apply(p)
}

/// Occupied voxel keys of a point set at the given cell size.
pub fn voxelize(points: &[Point3], cell_size: f64) -> std::collections::BTreeSet<VoxelKey> {
    assert!(cell_size > 0.0, "cell_size must be positive");
    points
        .iter()
        .map(|&p| VoxelKey::from_point(p, cell_size))
        .collect()
}
