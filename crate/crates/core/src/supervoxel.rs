//! VCCS-style supervoxel clustering over a voxel occupancy grid, plus the
//! adjacency graph and soft change priors used by the optimization stage.

use std::collections::BTreeMap;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, VoxelKey};
use crate::kdtree::KdTree;

#[derive(Debug, Clone)]
pub struct SupervoxelParams {
    pub voxel_size: f64,
    pub seed_spacing: f64,
    pub w_spatial: f64,
    pub w_normal: f64,
    pub w_color: f64,
}

impl Default for SupervoxelParams {
    fn default() -> Self {
        SupervoxelParams {
            voxel_size: 0.05,
            seed_spacing: 0.3,
            w_spatial: 0.4,
            w_normal: 1.0,
            w_color: 0.2,
        }
    }
}

/// One cluster of scene points with coherent position and normal.
#[derive(Debug, Clone)]
pub struct Supervoxel {
    pub id: usize,
    pub member_indices: Vec<u32>,
    pub centroid: Point3,
    pub mean_normal: Vector3<f64>,
}

/// The clustered scene: nodes, undirected adjacency, and optional priors.
///
/// Priors are per-node (rho(v, l=1), rho(v, l=0)) pairs; they are either
/// (0.8, 0.2) for supervoxels containing initially detected change points or
/// (0.5, 0.5) otherwise.
#[derive(Debug, Clone)]
pub struct SupervoxelGraph {
    pub nodes: Vec<Supervoxel>,
    /// Unordered pairs (a, b) with a < b, sorted, deduplicated.
    pub edges: Vec<(u32, u32)>,
    pub priors: Option<Vec<(f64, f64)>>,
    /// Diagnostic only: fraction of each node's members near a change point.
    pub change_fraction: Option<Vec<f64>>,
}

impl SupervoxelGraph {
    pub fn neighbor_lists(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }
}

#[derive(Debug, Clone)]
struct ClusterFeature {
    centroid: Point3,
    normal: Vector3<f64>,
    color: Option<[f64; 3]>,
}

struct QueueEntry {
    dist: f64,
    cluster: u32,
    voxel: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on (dist, cluster, voxel) for deterministic pops.
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.cluster.cmp(&self.cluster))
            .then(other.voxel.cmp(&self.voxel))
    }
}

/// Clusters a cloud into supervoxels and builds their adjacency graph.
/// Priors are left unset.
pub fn segment(cloud: &PointCloud, params: &SupervoxelParams) -> Result<SupervoxelGraph> {
    assert!(params.voxel_size > 0.0 && params.seed_spacing > params.voxel_size);
    if cloud.is_empty() {
        return Err(Error::EmptyScene);
    }
    let normals = cloud.normals.as_ref().ok_or(Error::MissingNormals)?;
    let colors = cloud.colors.as_deref();

    // Occupancy grid: voxel key -> member point indices (deterministic order).
    let mut occ: BTreeMap<VoxelKey, Vec<u32>> = BTreeMap::new();
    for (i, &p) in cloud.points.iter().enumerate() {
        occ.entry(VoxelKey::from_point(p, params.voxel_size))
            .or_default()
            .push(i as u32);
    }
    let voxel_keys: Vec<VoxelKey> = occ.keys().copied().collect();
    let voxel_points: Vec<Vec<u32>> = occ.values().cloned().collect();
    let voxel_index: BTreeMap<VoxelKey, u32> = voxel_keys
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i as u32))
        .collect();

    // Per-voxel mean features.
    let voxel_feature: Vec<ClusterFeature> = voxel_points
        .iter()
        .map(|members| mean_feature(members, cloud, normals, colors))
        .collect();

    // Seeds: one per occupied seed cell, the point closest to the cell center.
    let mut seed_cells: BTreeMap<VoxelKey, (f64, u32)> = BTreeMap::new();
    for (i, &p) in cloud.points.iter().enumerate() {
        let cell = VoxelKey::from_point(p, params.seed_spacing);
        let center = Point3::new(
            (cell.ix as f64 + 0.5) * params.seed_spacing,
            (cell.iy as f64 + 0.5) * params.seed_spacing,
            (cell.iz as f64 + 0.5) * params.seed_spacing,
        );
        let d = p.dist(center);
        let entry = seed_cells.entry(cell).or_insert((f64::INFINITY, 0));
        if d < entry.0 {
            *entry = (d, i as u32);
        }
    }
    let seed_points: Vec<u32> = seed_cells.values().map(|&(_, i)| i).collect();

    let mut clusters: Vec<ClusterFeature> = seed_points
        .iter()
        .map(|&i| ClusterFeature {
            centroid: cloud.points[i as usize],
            normal: normals[i as usize],
            color: colors.map(|c| c[i as usize]),
        })
        .collect();

    let dist = |c: &ClusterFeature, v: &ClusterFeature| -> f64 {
        let mut d = params.w_spatial * c.centroid.dist(v.centroid) / params.seed_spacing
            + params.w_normal * (1.0 - c.normal.dot(&v.normal).abs());
        if let (Some(cc), Some(vc)) = (&c.color, &v.color) {
            let dc = ((cc[0] - vc[0]).powi(2) + (cc[1] - vc[1]).powi(2)
                + (cc[2] - vc[2]).powi(2))
            .sqrt();
            d += params.w_color * dc;
        }
        d
    };

    // Per-cluster growth origin in the occupancy grid; refreshed between
    // iterations (a refreshed centroid may fall in an unoccupied voxel, so
    // track the best member voxel instead).
    let mut seed_voxels: Vec<u32> = seed_points
        .iter()
        .map(|&i| voxel_index[&VoxelKey::from_point(cloud.points[i as usize], params.voxel_size)])
        .collect();

    let mut assignment: Vec<i32> = Vec::new();
    for _iter in 0..2 {
        assignment = vec![-1; voxel_keys.len()];
        let mut heap = BinaryHeap::new();
        for (ci, c) in clusters.iter().enumerate() {
            let seed_voxel = seed_voxels[ci];
            heap.push(QueueEntry {
                dist: dist(c, &voxel_feature[seed_voxel as usize]),
                cluster: ci as u32,
                voxel: seed_voxel,
            });
        }
        while let Some(e) = heap.pop() {
            if assignment[e.voxel as usize] >= 0 {
                continue;
            }
            assignment[e.voxel as usize] = e.cluster as i32;
            let key = voxel_keys[e.voxel as usize];
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
                        if let Some(&nv) = voxel_index.get(&nk) {
                            if assignment[nv as usize] < 0 {
                                heap.push(QueueEntry {
                                    dist: dist(
                                        &clusters[e.cluster as usize],
                                        &voxel_feature[nv as usize],
                                    ),
                                    cluster: e.cluster,
                                    voxel: nv,
                                });
                            }
                        }
                    }
                }
            }
        }
        // Voxels not reachable through the occupancy grid: nearest cluster
        // by the same distance measure.
        for (vi, a) in assignment.iter_mut().enumerate() {
            if *a < 0 {
                let mut best = (f64::INFINITY, 0u32);
                for (ci, c) in clusters.iter().enumerate() {
                    let d = dist(c, &voxel_feature[vi]);
                    if d < best.0 {
                        best = (d, ci as u32);
                    }
                }
                *a = best.1 as i32;
            }
        }
        // Refresh cluster features from their assigned points.
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); clusters.len()];
        for (vi, &a) in assignment.iter().enumerate() {
            members[a as usize].extend_from_slice(&voxel_points[vi]);
        }
        for (ci, m) in members.iter().enumerate() {
            if !m.is_empty() {
                clusters[ci] = mean_feature(m, cloud, normals, colors);
            }
        }
        // New growth origin: the assigned voxel best matching the refreshed
        // feature (ties by lowest voxel index).
        let mut best: Vec<(f64, u32)> = vec![(f64::INFINITY, 0); clusters.len()];
        for (vi, &a) in assignment.iter().enumerate() {
            let d = dist(&clusters[a as usize], &voxel_feature[vi]);
            if d < best[a as usize].0 {
                best[a as usize] = (d, vi as u32);
            }
        }
        for (ci, &(d, vi)) in best.iter().enumerate() {
            if d.is_finite() {
                seed_voxels[ci] = vi;
            }
        }
    }

    // Materialize nodes, dropping empty clusters.
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); clusters.len()];
    for (vi, &a) in assignment.iter().enumerate() {
        members[a as usize].extend_from_slice(&voxel_points[vi]);
    }
    let mut remap: Vec<i32> = vec![-1; clusters.len()];
    let mut nodes = Vec::new();
    for (ci, m) in members.into_iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        let feat = mean_feature(&m, cloud, normals, colors);
        remap[ci] = nodes.len() as i32;
        nodes.push(Supervoxel {
            id: nodes.len(),
            member_indices: m,
            centroid: feat.centroid,
            mean_normal: feat.normal,
        });
    }

    // Adjacency: clusters owning 26-neighbor voxels.
    let mut edges = Vec::new();
    for (vi, key) in voxel_keys.iter().enumerate() {
        let a = remap[assignment[vi] as usize] as u32;
        // Positive-direction half of the 26-neighborhood avoids duplicates.
        for &(dx, dy, dz) in HALF_NEIGHBORS.iter() {
            let nk = VoxelKey {
                ix: key.ix + dx,
                iy: key.iy + dy,
                iz: key.iz + dz,
            };
            if let Some(&nv) = voxel_index.get(&nk) {
                let b = remap[assignment[nv as usize] as usize] as u32;
                if a != b {
                    edges.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    Ok(SupervoxelGraph {
        nodes,
        edges,
        priors: None,
        change_fraction: None,
    })
}

/// The 13 positive-direction offsets of the 26-neighborhood.
const HALF_NEIGHBORS: [(i64, i64, i64); 13] = [
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
];

fn mean_feature(
    members: &[u32],
    cloud: &PointCloud,
    normals: &[Vector3<f64>],
    colors: Option<&[[f64; 3]]>,
) -> ClusterFeature {
    let n = members.len() as f64;
    let mut c = Vector3::zeros();
    let mut nn = Vector3::zeros();
    let mut col = [0.0; 3];
    // Orient normals against the first member before averaging so opposite
    // orientations of the same surface do not cancel.
    let reference = normals[members[0] as usize];
    for &i in members {
        c += cloud.points[i as usize].to_vec();
        let ni = normals[i as usize];
        nn += if ni.dot(&reference) < 0.0 { -ni } else { ni };
        if let Some(cs) = colors {
            for k in 0..3 {
                col[k] += cs[i as usize][k];
            }
        }
    }
    let norm = nn.norm();
    ClusterFeature {
        centroid: Point3::from_vec(c / n),
        normal: if norm > 1e-12 {
            nn / norm
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        },
        color: colors.map(|_| [col[0] / n, col[1] / n, col[2] / n]),
    }
}

/// Marks supervoxels containing initial change points with the (0.8, 0.2)
/// prior; all others get (0.5, 0.5). Containment means at least one change
/// point within `radius` of a member point. The member-change fraction is
/// recorded as a diagnostic but does not influence the prior.
pub fn assign_priors(
    mut graph: SupervoxelGraph,
    cloud: &PointCloud,
    changes: &crate::detect::ChangePoints,
    radius: f64,
) -> SupervoxelGraph {
    let n = graph.nodes.len();
    let mut priors = Vec::with_capacity(n);
    let mut fractions = Vec::with_capacity(n);
    if changes.points.is_empty() {
        priors.resize(n, (0.5, 0.5));
        fractions.resize(n, 0.0);
    } else {
        let tree = KdTree::build(&changes.points);
        for sv in &graph.nodes {
            let mut near = 0usize;
            for &i in &sv.member_indices {
                if tree.any_within(cloud.points[i as usize], radius) {
                    near += 1;
                }
            }
            priors.push(if near > 0 { (0.8, 0.2) } else { (0.5, 0.5) });
            fractions.push(near as f64 / sv.member_indices.len() as f64);
        }
    }
    graph.priors = Some(priors);
    graph.change_fraction = Some(fractions);
    graph
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::ChangePoints;

    /// Axis-aligned rectangle sampled on a grid with a constant normal.
    fn sampled_plane(
        origin: Point3,
        u: Vector3<f64>,
        v: Vector3<f64>,
        nu: usize,
        nv: usize,
        step: f64,
        normal: Vector3<f64>,
        out: &mut PointCloud,
    ) {
        let normals = out.normals.get_or_insert_with(Vec::new);
        for i in 0..nu {
            for j in 0..nv {
                out.points
                    .push(origin.add(u * (i as f64 * step) + v * (j as f64 * step)));
                normals.push(normal);
            }
        }
    }

    fn horizontal_plane(z: f64, n: usize, step: f64) -> PointCloud {
        let mut cloud = PointCloud::default();
        sampled_plane(
            Point3::new(0.0, 0.0, z),
            Vector3::x(),
            Vector3::y(),
            n,
            n,
            step,
            Vector3::z(),
            &mut cloud,
        );
        cloud
    }

    #[test]
    fn requires_normals() {
        let cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, 0.0)]);
        assert!(matches!(
            segment(&cloud, &SupervoxelParams::default()),
            Err(Error::MissingNormals)
        ));
    }

    #[test]
    fn parallel_planes_are_disconnected() {
        let mut cloud = horizontal_plane(0.0, 30, 0.04);
        let other = horizontal_plane(1.0, 30, 0.04);
        cloud.points.extend(other.points.iter().copied());
        cloud
            .normals
            .as_mut()
            .unwrap()
            .extend(other.normals.unwrap());
        let graph = segment(&cloud, &SupervoxelParams::default()).unwrap();
        for &(a, b) in &graph.edges {
            let za = graph.nodes[a as usize].centroid.z;
            let zb = graph.nodes[b as usize].centroid.z;
            assert!(
                (za - zb).abs() < 0.5,
                "edge spans the 1 m gap: z {za} vs {zb}"
            );
        }
    }

    #[test]
    fn flat_plane_normals_are_uniform() {
        let cloud = horizontal_plane(0.0, 40, 0.04);
        let graph = segment(&cloud, &SupervoxelParams::default()).unwrap();
        assert!(graph.nodes.len() > 2);
        for sv in &graph.nodes {
            assert!((sv.mean_normal.dot(&Vector3::z()).abs() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn corner_clusters_do_not_mix_normals() {
        // Wall + floor meeting in a crease; normal weight dominates.
        let mut cloud = PointCloud::default();
        sampled_plane(
            Point3::new(0.0, 0.0, 0.0),
            Vector3::x(),
            Vector3::y(),
            30,
            30,
            0.04,
            Vector3::z(),
            &mut cloud,
        );
        sampled_plane(
            Point3::new(0.0, 0.0, 0.0),
            Vector3::z(),
            Vector3::y(),
            30,
            30,
            0.04,
            Vector3::x(),
            &mut cloud,
        );
        let normals = cloud.normals.clone().unwrap();
        let params = SupervoxelParams::default();
        let graph = segment(&cloud, &params).unwrap();
        for sv in &graph.nodes {
            for &i in &sv.member_indices {
                // Voxels straddling the crease legitimately mix both planes;
                // only points clearly on one surface must agree with their
                // cluster's mean normal.
                let p = cloud.points[i as usize];
                if p.x < 2.0 * params.voxel_size && p.z < 2.0 * params.voxel_size {
                    continue;
                }
                let angle = normals[i as usize].dot(&sv.mean_normal).abs().min(1.0).acos();
                assert!(
                    angle < 45f64.to_radians(),
                    "member normal deviates {} deg from cluster mean",
                    angle.to_degrees()
                );
            }
        }
    }

    #[test]
    fn partition_and_symmetry_properties() {
        let cloud = horizontal_plane(0.0, 35, 0.045);
        let graph = segment(&cloud, &SupervoxelParams::default()).unwrap();
        let total: usize = graph.nodes.iter().map(|s| s.member_indices.len()).sum();
        assert_eq!(total, cloud.len());
        let mut seen = vec![false; cloud.len()];
        for sv in &graph.nodes {
            assert!(!sv.member_indices.is_empty());
            for &i in &sv.member_indices {
                assert!(!seen[i as usize], "point {} in two supervoxels", i);
                seen[i as usize] = true;
            }
        }
        for &(a, b) in &graph.edges {
            assert!(a < b);
            assert!((b as usize) < graph.nodes.len());
        }
    }

    #[test]
    fn segmentation_is_deterministic() {
        let cloud = horizontal_plane(0.3, 25, 0.05);
        let g1 = segment(&cloud, &SupervoxelParams::default()).unwrap();
        let g2 = segment(&cloud, &SupervoxelParams::default()).unwrap();
        assert_eq!(g1.nodes.len(), g2.nodes.len());
        assert_eq!(g1.edges, g2.edges);
        for (a, b) in g1.nodes.iter().zip(&g2.nodes) {
            assert_eq!(a.member_indices, b.member_indices);
        }
    }

    #[test]
    fn prior_values_are_fixed() {
        let cloud = horizontal_plane(0.0, 25, 0.05);
        let graph = segment(&cloud, &SupervoxelParams::default()).unwrap();

        // Change point coincident with a member point.
        let changes = ChangePoints {
            points: vec![cloud.points[0]],
        };
        let g = assign_priors(graph.clone(), &cloud, &changes, 0.05);
        let priors = g.priors.as_ref().unwrap();
        assert!(priors.contains(&(0.8, 0.2)));
        for p in priors {
            assert!(*p == (0.8, 0.2) || *p == (0.5, 0.5));
        }

        // No change points at all.
        let g = assign_priors(graph.clone(), &cloud, &ChangePoints::default(), 0.05);
        assert!(g.priors.unwrap().iter().all(|&p| p == (0.5, 0.5)));

        // Change point far from every member.
        let far = ChangePoints {
            points: vec![Point3::new(50.0, 50.0, 50.0)],
        };
        let g = assign_priors(graph, &cloud, &far, 0.05);
        assert!(g.priors.unwrap().iter().all(|&p| p == (0.5, 0.5)));
    }
}
