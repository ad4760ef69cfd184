//! Exact kd-tree over 3D points. Built once, then queried read-only.

use crate::error::{Error, Result};
use crate::geom::Point3;

#[derive(Debug, Clone)]
struct Node {
    /// Index into the original point slice.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// A balanced kd-tree storing indices into the point slice it was built from.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> KdTree {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        let root = tree.build_rec(&mut indices, 0);
        tree.root = root;
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_rec(&mut self, indices: &mut [u32], depth: usize) -> i32 {
        if indices.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = indices.len() / 2;
        // Median split; ties broken by index for determinism.
        indices.select_nth_unstable_by(mid, |&a, &b| {
            let ca = self.points[a as usize].coord(axis as usize);
            let cb = self.points[b as usize].coord(axis as usize);
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        let point = indices[mid];
        let (lo, hi) = indices.split_at_mut(mid);
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(&mut hi[1..], depth + 1);
        self.nodes.push(Node {
            point,
            axis,
            left,
            right,
        });
        (self.nodes.len() - 1) as i32
    }

    /// Exact nearest neighbor; ties broken by lowest point index.
    pub fn nearest(&self, query: Point3) -> Result<(usize, f64)> {
        if self.points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(self.root, query, &mut best);
        Ok((best.0, best.1.sqrt()))
    }

    fn nearest_rec(&self, node: i32, query: Point3, best: &mut (usize, f64)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let d2 = self.points[idx].dist_sq(query);
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let split = self.points[idx].coord(n.axis as usize);
        let diff = query.coord(n.axis as usize) - split;
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, query, best);
        if diff * diff <= best.1 {
            self.nearest_rec(far, query, best);
        }
    }

    /// Distance to the nearest neighbor, or infinity on an empty index.
    pub fn nearest_dist(&self, query: Point3) -> f64 {
        match self.nearest(query) {
            Ok((_, d)) => d,
            Err(_) => f64::INFINITY,
        }
    }

    /// All point indices within `radius` of the query, ascending.
    pub fn within_radius(&self, query: Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(self.root, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    /// True if any point lies within `radius` of the query. Unlike
    /// `nearest`, the pruning ball is fixed at `radius`, so queries far from
    /// the point set return quickly.
    pub fn any_within(&self, query: Point3, radius: f64) -> bool {
        self.any_rec(self.root, query, radius * radius)
    }

    fn any_rec(&self, node: i32, query: Point3, r2: f64) -> bool {
        if node < 0 {
            return false;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        if self.points[idx].dist_sq(query) <= r2 {
            return true;
        }
        let split = self.points[idx].coord(n.axis as usize);
        let diff = query.coord(n.axis as usize) - split;
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.any_rec(near, query, r2) || (diff * diff <= r2 && self.any_rec(far, query, r2))
    }

    fn radius_rec(&self, node: i32, query: Point3, r2: f64, out: &mut Vec<usize>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        if self.points[idx].dist_sq(query) <= r2 {
            out.push(idx);
        }
        let split = self.points[idx].coord(n.axis as usize);
        let diff = query.coord(n.axis as usize) - split;
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.radius_rec(near, query, r2, out);
        if diff * diff <= r2 {
            self.radius_rec(far, query, r2, out);
        }
    }
}

/// Convenience wrapper matching the exact-nearest-neighbor contract.
pub fn nearest_neighbor(index: &KdTree, query: Point3) -> Result<(usize, f64)> {
    index.nearest(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(points: &[Point3], q: Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = p.dist(q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn two_point_case() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let tree = KdTree::build(&pts);
        let (i, d) = tree.nearest(Point3::new(0.2, 0.0, 0.0)).unwrap();
        assert_eq!(i, 0);
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exact_hit() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(-1.0, 0.5, 0.0),
        ];
        let tree = KdTree::build(&pts);
        let (i, d) = tree.nearest(Point3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(i, 1);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn empty_index_errors() {
        let tree = KdTree::build(&[]);
        assert!(matches!(
            tree.nearest(Point3::new(0.0, 0.0, 0.0)),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn agrees_with_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..100 {
            let q = Point3::new(
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            );
            let (i, d) = tree.nearest(q).unwrap();
            let (oi, od) = linear_scan(&pts, q);
            assert_eq!(i, oi);
            assert!((d - od).abs() < 1e-12);
        }
    }

    #[test]
    fn any_within_matches_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..200 {
            let q = Point3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let r = rng.gen_range(0.01..1.0);
            let (_, d) = tree.nearest(q).unwrap();
            assert_eq!(tree.any_within(q, r), d <= r);
        }
    }

    #[test]
    fn radius_query_matches_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..50 {
            let q = Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let r = rng.gen_range(0.05..0.5);
            let got = tree.within_radius(q, r);
            let want: Vec<usize> = pts
                .iter()
                .enumerate()
                .filter(|(_, p)| p.dist(q) <= r)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(got, want);
        }
    }
}
