//! Object extraction: 26-connected components of changed voxels at the
//! evaluation grid resolution.

use std::collections::{BTreeMap, BTreeSet};

use crate::geom::{Point3, VoxelKey};

/// Components smaller than this many voxels are dropped as speckle noise.
pub const MIN_COMPONENT_VOXELS: usize = 3;

/// One discovered object: a 26-connected set of occupied voxels, its member
/// points, and (when attributable) the motion hypothesis that explains it.
#[derive(Debug, Clone)]
pub struct DetectedObject {
    pub id: usize,
    pub voxels: BTreeSet<VoxelKey>,
    pub points: Vec<Point3>,
    pub transform_id: Option<usize>,
}

impl DetectedObject {
    /// Axis-aligned bounding box over member points, (min, max).
    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }
}

/// Groups changed points into objects: voxelize at `cell_size`, flood-fill
/// 26-connected components, drop tiny ones, sort by descending voxel count
/// (ties by smallest voxel key). transform_id is left unset here.
pub fn connected_components(changed_points: &[Point3], cell_size: f64) -> Vec<DetectedObject> {
    connected_components_filtered(changed_points, cell_size, MIN_COMPONENT_VOXELS)
}

/// As `connected_components` but with an explicit minimum component size
/// (in voxels); `min_voxels` = 1 keeps everything.
pub fn connected_components_filtered(
    changed_points: &[Point3],
    cell_size: f64,
    min_voxels: usize,
) -> Vec<DetectedObject> {
    assert!(cell_size > 0.0);
    let mut members: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
    for (i, &p) in changed_points.iter().enumerate() {
        members
            .entry(VoxelKey::from_point(p, cell_size))
            .or_default()
            .push(i);
    }
    let occupied: BTreeSet<VoxelKey> = members.keys().copied().collect();
    let mut visited: BTreeSet<VoxelKey> = BTreeSet::new();
    let mut components: Vec<BTreeSet<VoxelKey>> = Vec::new();
    for &start in &occupied {
        if visited.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        visited.insert(start);
        while let Some(key) = stack.pop() {
            comp.insert(key);
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let nk = VoxelKey {
                            ix: key.ix + dx,
                            iy: key.iy + dy,
                            iz: key.iz + dz,
                        };
                        if occupied.contains(&nk) && visited.insert(nk) {
                            stack.push(nk);
                        }
                    }
                }
            }
        }
        components.push(comp);
    }
    components.retain(|c| c.len() >= min_voxels);
    // Largest first; ties resolved by the smallest contained voxel key so
    // ordering never depends on traversal order.
    components.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.iter().next().cmp(&b.iter().next()))
    });
    components
        .into_iter()
        .enumerate()
        .map(|(id, voxels)| {
            let points = voxels
                .iter()
                .flat_map(|k| members[k].iter().map(|&i| changed_points[i]))
                .collect();
            DetectedObject {
                id,
                voxels,
                points,
                transform_id: None,
            }
        })
        .collect()
}
