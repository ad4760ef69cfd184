//! Deterministic synthetic scene-pair generator: a room shell with
//! axis-aligned boxes, box edits (move / add / remove), a viewpoint ring,
//! and exact ground truth. Used by the end-to-end tests and the CLI.

use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::discover::{connected_components, DetectedObject};
use crate::error::{Error, Result};
use crate::geom::{Point3, RigidTransform, TriangleMesh};
use crate::render::CameraPose;

/// Fraction of the lattice pitch used for in-plane vertex jitter.
const JITTER_IN_PLANE: f64 = 0.3;
/// Out-of-plane jitter amplitude, meters. Keeps every local neighborhood
/// (and so every descriptor) unique while staying far below the depth
/// difference threshold.
const JITTER_OUT_OF_PLANE: f64 = 0.006;

/// An axis-aligned box defined by its center and full side lengths.
#[derive(Debug, Clone, Copy)]
pub struct BoxSpec {
    pub center: Point3,
    pub size: [f64; 3],
}

#[derive(Debug, Clone)]
pub enum EditKind {
    /// The box exists in both scans; the rescan shows it transformed.
    Move(RigidTransform),
    /// The box exists only in the rescan.
    Add,
    /// The box exists only in the reference scan.
    Remove,
}

#[derive(Debug, Clone)]
pub struct Edit {
    pub object: usize,
    pub kind: EditKind,
}

/// Full description of a synthetic scene pair.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    /// Room interior extents (width x, depth y, height z), meters; the room
    /// occupies [0, w] x [0, d] x [0, h].
    pub room: [f64; 3],
    pub objects: Vec<BoxSpec>,
    pub edits: Vec<Edit>,
    /// Optional global misalignment applied to the whole rescan, modeling
    /// imperfect scan registration.
    pub misalignment: Option<RigidTransform>,
}

/// Exact ground truth for the edits of a scene pair.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Surface points of edited objects at their reference-scan poses.
    pub changed_ref: Vec<Point3>,
    /// Surface points of edited objects at their rescan poses.
    pub changed_rescan: Vec<Point3>,
    /// One transform per move edit, in edit order.
    pub transforms: Vec<RigidTransform>,
    /// Connected components of the changed points at the 0.1 m grid.
    pub objects: Vec<DetectedObject>,
}

impl GroundTruth {
    /// Union of changed points over both scans.
    pub fn changed_points(&self) -> Vec<Point3> {
        let mut pts = self.changed_ref.clone();
        pts.extend(self.changed_rescan.iter().copied());
        pts
    }

    /// Rebuilds the component list from a changed-point union.
    pub fn from_points(
        changed_ref: Vec<Point3>,
        changed_rescan: Vec<Point3>,
        transforms: Vec<RigidTransform>,
    ) -> GroundTruth {
        let mut union = changed_ref.clone();
        union.extend(changed_rescan.iter().copied());
        let objects = connected_components(&union, 0.1);
        GroundTruth {
            changed_ref,
            changed_rescan,
            transforms,
            objects,
        }
    }
}

/// Appends a jittered tessellation of one rectangle to the mesh.
/// `origin + s*u_dir + t*v_dir` spans the face; `normal` fixes the outward
/// winding. Corner and edge lattice vertices stay on the boundary so shared
/// box edges remain crack-free.
#[allow(clippy::too_many_arguments)]
fn tessellate_rect(
    mesh: &mut TriangleMesh,
    origin: Point3,
    u_dir: Vector3<f64>,
    v_dir: Vector3<f64>,
    len_u: f64,
    len_v: f64,
    normal: Vector3<f64>,
    density: f64,
    color: [f64; 3],
    rng: &mut ChaCha8Rng,
) {
    let pitch = 1.0 / density.sqrt();
    let nu = ((len_u / pitch).round() as usize).max(1);
    let nv = ((len_v / pitch).round() as usize).max(1);
    let du = len_u / nu as f64;
    let dv = len_v / nv as f64;
    let base = mesh.vertices.len() as u32;
    for i in 0..=nu {
        for j in 0..=nv {
            let mut su = i as f64 * du;
            let mut sv = j as f64 * dv;
            let mut sn = 0.0;
            let edge_u = i == 0 || i == nu;
            let edge_v = j == 0 || j == nv;
            if !edge_u {
                su += rng.gen_range(-JITTER_IN_PLANE..JITTER_IN_PLANE) * du;
            }
            if !edge_v {
                sv += rng.gen_range(-JITTER_IN_PLANE..JITTER_IN_PLANE) * dv;
            }
            if !edge_u && !edge_v {
                sn = rng.gen_range(-JITTER_OUT_OF_PLANE..JITTER_OUT_OF_PLANE);
            }
            mesh.vertices
                .push(origin.add(u_dir * su + v_dir * sv + normal * sn));
        }
    }
    let idx = |i: usize, j: usize| base + (i * (nv + 1) + j) as u32;
    let flip = u_dir.cross(&v_dir).dot(&normal) < 0.0;
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if flip {
                mesh.faces.push([a, c, b]);
                mesh.faces.push([a, d, c]);
            } else {
                mesh.faces.push([a, b, c]);
                mesh.faces.push([a, c, d]);
            }
        }
    }
    if let Some(colors) = mesh.vertex_colors.as_mut() {
        colors.resize(mesh.vertices.len(), color);
    }
}

fn empty_mesh() -> TriangleMesh {
    TriangleMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
        vertex_normals: None,
        vertex_colors: Some(Vec::new()),
    }
}

/// Tessellated box: 6 outward faces. The RNG fixes the jitter, so calling
/// this twice with equally seeded RNGs reproduces the identical mesh.
fn box_mesh(spec: &BoxSpec, density: f64, color: [f64; 3], rng: &mut ChaCha8Rng) -> TriangleMesh {
    let mut mesh = empty_mesh();
    let [sx, sy, sz] = spec.size;
    let lo = spec.center.add(Vector3::new(-sx / 2.0, -sy / 2.0, -sz / 2.0));
    let hi = spec.center.add(Vector3::new(sx / 2.0, sy / 2.0, sz / 2.0));
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    // -z, +z, -y, +y, -x, +x faces.
    tessellate_rect(&mut mesh, lo, x, y, sx, sy, -z, density, color, rng);
    let top = Point3::new(lo.x, lo.y, hi.z);
    tessellate_rect(&mut mesh, top, x, y, sx, sy, z, density, color, rng);
    tessellate_rect(&mut mesh, lo, x, z, sx, sz, -y, density, color, rng);
    let back = Point3::new(lo.x, hi.y, lo.z);
    tessellate_rect(&mut mesh, back, x, z, sx, sz, y, density, color, rng);
    tessellate_rect(&mut mesh, lo, y, z, sy, sz, -x, density, color, rng);
    let right = Point3::new(hi.x, lo.y, lo.z);
    tessellate_rect(&mut mesh, right, y, z, sy, sz, x, density, color, rng);
    mesh
}

/// Room shell: floor plus four walls (no ceiling), inward-facing.
fn room_mesh(room: [f64; 3], density: f64, rng: &mut ChaCha8Rng) -> TriangleMesh {
    let [w, d, h] = room;
    let gray = [0.7, 0.7, 0.7];
    let mut mesh = empty_mesh();
    let o = Point3::new(0.0, 0.0, 0.0);
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    tessellate_rect(&mut mesh, o, x, y, w, d, z, density, gray, rng); // floor
    tessellate_rect(&mut mesh, o, x, z, w, h, y, density, gray, rng); // y = 0 wall
    let far = Point3::new(0.0, d, 0.0);
    tessellate_rect(&mut mesh, far, x, z, w, h, -y, density, gray, rng);
    tessellate_rect(&mut mesh, o, y, z, d, h, x, density, gray, rng); // x = 0 wall
    let right = Point3::new(w, 0.0, 0.0);
    tessellate_rect(&mut mesh, right, y, z, d, h, -x, density, gray, rng);
    mesh
}

fn append(dst: &mut TriangleMesh, src: &TriangleMesh) {
    let base = dst.vertices.len() as u32;
    dst.vertices.extend(src.vertices.iter().copied());
    dst.faces
        .extend(src.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    if let (Some(dc), Some(sc)) = (dst.vertex_colors.as_mut(), src.vertex_colors.as_ref()) {
        dc.extend(sc.iter().copied());
    }
}

fn transformed(mesh: &TriangleMesh, t: &RigidTransform) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|&p| t.apply(p)).collect(),
        faces: mesh.faces.clone(),
        vertex_normals: None,
        vertex_colors: mesh.vertex_colors.clone(),
    }
}

fn box_inside_room(b: &BoxSpec, t: Option<&RigidTransform>, room: [f64; 3]) -> bool {
    let [sx, sy, sz] = b.size;
    for &dx in &[-sx / 2.0, sx / 2.0] {
        for &dy in &[-sy / 2.0, sy / 2.0] {
            for &dz in &[-sz / 2.0, sz / 2.0] {
                let mut p = b.center.add(Vector3::new(dx, dy, dz));
                if let Some(t) = t {
                    p = t.apply(p);
                }
                if p.x < 0.0
                    || p.y < 0.0
                    || p.z < 0.0
                    || p.x > room[0]
                    || p.y > room[1]
                    || p.z > room[2]
                {
                    return false;
                }
            }
        }
    }
    true
}

fn palette(i: usize) -> [f64; 3] {
    const COLORS: [[f64; 3]; 6] = [
        [0.9, 0.2, 0.2],
        [0.2, 0.7, 0.3],
        [0.2, 0.3, 0.9],
        [0.9, 0.8, 0.2],
        [0.8, 0.3, 0.8],
        [0.3, 0.8, 0.8],
    ];
    COLORS[i % COLORS.len()]
}

/// Ring of cameras inside the room, all looking at a point above the room
/// center. Intrinsics: 60 degree horizontal FOV at 320 x 240.
pub fn ring_poses(room: [f64; 3], n_viewpoints: usize) -> Vec<CameraPose> {
    assert!(n_viewpoints >= 1);
    let (width, height) = (320usize, 240usize);
    let fx = width as f64 / 2.0 / (30f64.to_radians().tan());
    let center = Vector3::new(room[0] / 2.0, room[1] / 2.0, 0.8);
    let radius = 0.35 * room[0].min(room[1]);
    (0..n_viewpoints)
        .map(|i| {
            let theta = i as f64 / n_viewpoints as f64 * std::f64::consts::TAU;
            let eye = Vector3::new(
                room[0] / 2.0 + radius * theta.cos(),
                room[1] / 2.0 + radius * theta.sin(),
                1.5,
            );
            let forward = (center - eye).normalize();
            let right = forward.cross(&Vector3::z()).normalize();
            let down = forward.cross(&right);
            let rotation = Matrix3::from_rows(&[
                right.transpose(),
                down.transpose(),
                forward.transpose(),
            ]);
            CameraPose {
                fx,
                fy: fx,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
                width,
                height,
                rotation,
                translation: -rotation * eye,
            }
        })
        .collect()
}

/// Builds the scene pair: reference mesh, rescan mesh (edits applied),
/// camera poses, and exact ground truth. Fully deterministic in the spec.
pub fn generate(
    spec: &SceneSpec,
    sample_density: f64,
    n_viewpoints: usize,
) -> Result<(TriangleMesh, TriangleMesh, Vec<CameraPose>, GroundTruth)> {
    assert!(sample_density > 0.0 && n_viewpoints >= 1);
    let mut edited = vec![None::<&EditKind>; spec.objects.len()];
    for e in &spec.edits {
        if e.object >= spec.objects.len() {
            return Err(Error::SpecViolation(format!(
                "edit references object {} of {}",
                e.object,
                spec.objects.len()
            )));
        }
        if edited[e.object].is_some() {
            return Err(Error::SpecViolation(format!(
                "object {} edited twice",
                e.object
            )));
        }
        edited[e.object] = Some(&e.kind);
    }
    for (i, b) in spec.objects.iter().enumerate() {
        if !box_inside_room(b, None, spec.room) {
            return Err(Error::SpecViolation(format!("box {i} outside the room")));
        }
        if let Some(EditKind::Move(t)) = edited[i] {
            if !box_inside_room(b, Some(t), spec.room) {
                return Err(Error::SpecViolation(format!(
                    "box {i} leaves the room when moved"
                )));
            }
        }
    }

    let mut reference = room_mesh(spec.room, sample_density, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut rescan = room_mesh(spec.room, sample_density, &mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut changed_ref = Vec::new();
    let mut changed_rescan = Vec::new();
    let mut transforms = Vec::new();
    for (i, b) in spec.objects.iter().enumerate() {
        // One RNG stream per object so its tessellation is identical in
        // both scans regardless of other objects.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1 + i as u64));
        let mesh = box_mesh(b, sample_density, palette(i), &mut rng);
        match edited[i] {
            None => {
                append(&mut reference, &mesh);
                append(&mut rescan, &mesh);
            }
            Some(EditKind::Move(t)) => {
                let moved = transformed(&mesh, t);
                changed_ref.extend(mesh.vertices.iter().copied());
                changed_rescan.extend(moved.vertices.iter().copied());
                transforms.push(*t);
                append(&mut reference, &mesh);
                append(&mut rescan, &moved);
            }
            Some(EditKind::Add) => {
                changed_rescan.extend(mesh.vertices.iter().copied());
                append(&mut rescan, &mesh);
            }
            Some(EditKind::Remove) => {
                changed_ref.extend(mesh.vertices.iter().copied());
                append(&mut reference, &mesh);
            }
        }
    }
    if let Some(m) = &spec.misalignment {
        rescan = transformed(&rescan, m);
        changed_rescan = changed_rescan.iter().map(|&p| m.apply(p)).collect();
    }
    let poses = ring_poses(spec.room, n_viewpoints);
    let gt = GroundTruth::from_points(changed_ref, changed_rescan, transforms);
    Ok((reference, rescan, poses, gt))
}

/// Default sampling density, points per square meter of surface.
pub const DEFAULT_DENSITY: f64 = 330.0;
/// Default number of ring viewpoints.
pub const DEFAULT_VIEWPOINTS: usize = 12;

fn base_room() -> [f64; 3] {
    [4.0, 4.0, 2.5]
}

fn translation(v: Vector3<f64>) -> RigidTransform {
    RigidTransform {
        rotation: Matrix3::identity(),
        translation: v,
    }
}

/// One floating 0.6 m cube translated 0.5 m sideways.
pub fn scene_single_move(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        room: base_room(),
        objects: vec![BoxSpec {
            center: Point3::new(1.5, 2.0, 1.0),
            size: [0.6, 0.6, 0.6],
        }],
        edits: vec![Edit {
            object: 0,
            kind: EditKind::Move(translation(Vector3::new(0.5, 0.0, 0.0))),
        }],
        misalignment: None,
    }
}

/// Three boxes: one moved (translation + 30 degree yaw), one added, one
/// removed.
pub fn scene_multi_edit(seed: u64) -> SceneSpec {
    let moved = BoxSpec {
        center: Point3::new(1.4, 1.5, 1.0),
        size: [0.6, 0.4, 0.5],
    };
    let motion = RigidTransform::about_point(
        Vector3::z(),
        30f64.to_radians(),
        moved.center,
        Vector3::new(0.55, 0.35, 0.0),
    );
    SceneSpec {
        seed,
        room: base_room(),
        objects: vec![
            moved,
            BoxSpec {
                center: Point3::new(2.7, 2.6, 0.9),
                size: [0.5, 0.5, 0.5],
            },
            BoxSpec {
                center: Point3::new(1.5, 2.8, 1.1),
                size: [0.45, 0.45, 0.45],
            },
        ],
        edits: vec![
            Edit {
                object: 0,
                kind: EditKind::Move(motion),
            },
            Edit {
                object: 1,
                kind: EditKind::Add,
            },
            Edit {
                object: 2,
                kind: EditKind::Remove,
            },
        ],
        misalignment: None,
    }
}

/// A long box slid 0.3 m along its own major axis: depth differences appear
/// only near its ends.
pub fn scene_slide(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        room: base_room(),
        objects: vec![BoxSpec {
            center: Point3::new(1.7, 2.0, 1.0),
            size: [1.6, 0.4, 0.4],
        }],
        edits: vec![Edit {
            object: 0,
            kind: EditKind::Move(translation(Vector3::new(0.3, 0.0, 0.0))),
        }],
        misalignment: None,
    }
}

/// Two boxes moved by different transforms.
pub fn scene_two_moves(seed: u64) -> SceneSpec {
    let second = BoxSpec {
        center: Point3::new(2.6, 2.7, 0.9),
        size: [0.5, 0.5, 0.5],
    };
    SceneSpec {
        seed,
        room: base_room(),
        objects: vec![
            BoxSpec {
                center: Point3::new(1.4, 1.4, 1.0),
                size: [0.6, 0.6, 0.6],
            },
            second,
        ],
        edits: vec![
            Edit {
                object: 0,
                kind: EditKind::Move(translation(Vector3::new(0.5, 0.2, 0.0))),
            },
            Edit {
                object: 1,
                kind: EditKind::Move(RigidTransform::about_point(
                    Vector3::z(),
                    25f64.to_radians(),
                    second.center,
                    Vector3::new(-0.3, 0.45, 0.0),
                )),
            },
        ],
        misalignment: None,
    }
}

/// A static scene: no edits at all.
pub fn scene_no_change(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        room: base_room(),
        objects: vec![BoxSpec {
            center: Point3::new(1.6, 2.2, 1.0),
            size: [0.6, 0.6, 0.6],
        }],
        edits: vec![],
        misalignment: None,
    }
}

/// Named presets for the CLI.
pub fn preset(name: &str, seed: u64) -> Option<SceneSpec> {
    match name {
        "single-move" => Some(scene_single_move(seed)),
        "multi-edit" => Some(scene_multi_edit(seed)),
        "slide" => Some(scene_slide(seed)),
        "two-moves" => Some(scene_two_moves(seed)),
        "no-change" => Some(scene_no_change(seed)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_edit_scene_is_identical() {
        let spec = scene_no_change(3);
        let (r, s, poses, gt) = generate(&spec, 120.0, 4).unwrap();
        assert_eq!(r.vertices, s.vertices);
        assert_eq!(r.faces, s.faces);
        assert_eq!(poses.len(), 4);
        assert!(gt.changed_points().is_empty());
        assert!(gt.transforms.is_empty());
        assert!(gt.objects.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = scene_single_move(5);
        let (r1, s1, _, gt1) = generate(&spec, 120.0, 4).unwrap();
        let (r2, s2, _, gt2) = generate(&spec, 120.0, 4).unwrap();
        assert_eq!(r1.vertices, r2.vertices);
        assert_eq!(s1.vertices, s2.vertices);
        assert_eq!(gt1.changed_ref, gt2.changed_ref);
    }

    #[test]
    fn move_edit_ground_truth_is_exact() {
        let spec = scene_single_move(7);
        let (_, _, _, gt) = generate(&spec, 150.0, 4).unwrap();
        assert_eq!(gt.transforms.len(), 1);
        let t = gt.transforms[0];
        assert_eq!(gt.changed_ref.len(), gt.changed_rescan.len());
        for (a, b) in gt.changed_ref.iter().zip(&gt.changed_rescan) {
            assert!(t.apply(*a).dist(*b) < 1e-12);
        }
        // 0.5 m move of a 0.6 m box: old and new footprints overlap at the
        // 0.1 m grid, so the gt forms one component.
        assert!(!gt.objects.is_empty());
    }

    #[test]
    fn remove_edit_has_no_transform() {
        let mut spec = scene_no_change(1);
        spec.edits.push(Edit {
            object: 0,
            kind: EditKind::Remove,
        });
        let (r, s, _, gt) = generate(&spec, 120.0, 4).unwrap();
        assert!(gt.transforms.is_empty());
        assert!(!gt.changed_ref.is_empty());
        assert!(gt.changed_rescan.is_empty());
        assert!(r.vertices.len() > s.vertices.len());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = scene_single_move(1);
        spec.objects[0].center = Point3::new(10.0, 2.0, 1.0);
        assert!(matches!(
            generate(&spec, 100.0, 2),
            Err(Error::SpecViolation(_))
        ));

        let mut spec = scene_single_move(1);
        spec.edits[0].kind = EditKind::Move(translation(Vector3::new(5.0, 0.0, 0.0)));
        assert!(matches!(
            generate(&spec, 100.0, 2),
            Err(Error::SpecViolation(_))
        ));

        let mut spec = scene_single_move(1);
        spec.edits.push(Edit {
            object: 1,
            kind: EditKind::Add,
        });
        assert!(matches!(
            generate(&spec, 100.0, 2),
            Err(Error::SpecViolation(_))
        ));
    }

    #[test]
    fn changed_points_lie_on_edited_surfaces() {
        let spec = scene_single_move(9);
        let (_, _, _, gt) = generate(&spec, 150.0, 4).unwrap();
        let b = spec.objects[0];
        for p in &gt.changed_ref {
            let dx = (p.x - b.center.x).abs() - b.size[0] / 2.0;
            let dy = (p.y - b.center.y).abs() - b.size[1] / 2.0;
            let dz = (p.z - b.center.z).abs() - b.size[2] / 2.0;
            // Signed distance beyond the box along the largest axis must sit
            // within the out-of-plane jitter band around the surface.
            let m = dx.max(dy).max(dz);
            assert!(
                m.abs() <= JITTER_OUT_OF_PLANE + 1e-9,
                "point {p:?} off the box surface (deviation {m})"
            );
        }
    }

    #[test]
    fn poses_look_at_scene_center() {
        let poses = ring_poses([4.0, 4.0, 2.5], 12);
        for pose in &poses {
            pose.validate().unwrap();
            // The look-at target projects to the image center.
            let (x, y, depth) = pose.project(Point3::new(2.0, 2.0, 0.8)).unwrap();
            assert!((x - 160.0).abs() < 1e-6);
            assert!((y - 120.0).abs() < 1e-6);
            assert!(depth > 0.5);
        }
    }

    #[test]
    fn meshes_are_valid_and_renderable() {
        let spec = scene_multi_edit(2);
        let (r, s, poses, _) = generate(&spec, 100.0, 3).unwrap();
        r.validate().unwrap();
        s.validate().unwrap();
        let d = crate::render::render_depth(&r, &poses[0]);
        let observed = d.values.iter().filter(|&&v| v > 0.0).count();
        // Nearly every pixel should see the room.
        assert!(observed as f64 > 0.95 * (d.width * d.height) as f64);
        let _ = s;
    }
}
