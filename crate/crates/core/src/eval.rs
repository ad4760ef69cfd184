//! Quantitative evaluation: voxel recall, per-object IoU with the 20%
//! discovery rule, point-level accuracy/completeness, and transform
//! recall / rotation / translation errors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::discover::DetectedObject;
use crate::error::{Error, Result};
use crate::geom::{Point3, RigidTransform, VoxelKey};
use crate::kdtree::KdTree;

/// All scene-level metrics; optional fields are None when undefined (e.g.
/// no ground-truth transforms).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// None when the scene has no ground-truth changes.
    pub voxel_recall: Option<f64>,
    pub object_ious: Vec<(usize, f64)>,
    pub mean_iou: f64,
    pub discovered_count: usize,
    pub gt_object_count: usize,
    pub accuracy: f64,
    pub completeness: f64,
    pub transform_recall_10: Option<f64>,
    pub transform_recall_20: Option<f64>,
    pub mre_deg: Option<f64>,
    pub mte_m: Option<f64>,
    pub mean_re_deg: Option<f64>,
    pub mean_te_m: Option<f64>,
}

/// Fraction of ground-truth changed voxels also predicted changed.
pub fn voxel_recall(
    predicted: &BTreeSet<VoxelKey>,
    ground_truth: &BTreeSet<VoxelKey>,
) -> Result<f64> {
    if ground_truth.is_empty() {
        if predicted.is_empty() {
            return Ok(1.0);
        }
        return Err(Error::EmptyGroundTruth);
    }
    let hit = ground_truth.intersection(predicted).count();
    Ok(hit as f64 / ground_truth.len() as f64)
}

fn iou(a: &BTreeSet<VoxelKey>, b: &BTreeSet<VoxelKey>) -> f64 {
    let inter = a.intersection(b).count();
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy one-to-one matching of predictions to ground-truth objects by
/// descending voxel IoU (ties by lower gt id, then lower prediction id).
/// Returns per-gt-object best IoU (0 when unmatched), the mean over all gt
/// objects, and how many exceed the discovery threshold.
pub fn object_iou(
    predicted: &[DetectedObject],
    gt_objects: &[DetectedObject],
    threshold: f64,
) -> (Vec<(usize, f64)>, f64, usize) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt_objects.iter().enumerate() {
        for (pi, p) in predicted.iter().enumerate() {
            let v = iou(&p.voxels, &g.voxels);
            if v > 0.0 {
                pairs.push((v, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut gt_used = vec![false; gt_objects.len()];
    let mut pred_used = vec![false; predicted.len()];
    let mut scores = vec![0.0; gt_objects.len()];
    for (v, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            scores[gi] = v;
        }
    }
    let mean = if gt_objects.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / gt_objects.len() as f64
    };
    let discovered = scores.iter().filter(|&&s| s > threshold).count();
    let ious = gt_objects
        .iter()
        .enumerate()
        .map(|(gi, g)| (g.id, scores[gi]))
        .collect();
    (ious, mean, discovered)
}

/// accuracy = fraction of predicted points within `dist` of some gt point;
/// completeness = fraction of gt points within `dist` of some prediction.
pub fn accuracy_completeness(
    predicted_points: &[Point3],
    gt_points: &[Point3],
    dist: f64,
) -> (f64, f64) {
    assert!(dist > 0.0);
    let frac_near = |from: &[Point3], to: &[Point3]| -> f64 {
        if from.is_empty() {
            return 1.0;
        }
        if to.is_empty() {
            return 0.0;
        }
        let tree = KdTree::build(to);
        let near = from.iter().filter(|p| tree.nearest_dist(**p) <= dist).count();
        near as f64 / from.len() as f64
    };
    (
        frac_near(predicted_points, gt_points),
        frac_near(gt_points, predicted_points),
    )
}

/// Transform recall at the 10 cm / 10 degree and 20 cm / 20 degree bands,
/// plus median (and mean) rotation / translation errors over the matches
/// correct at the looser band. Matching is greedy by rotation error,
/// one-to-one. Returns None-equivalent empty stats via (recalls, errors)
/// when gt is empty.
pub struct TransformMetrics {
    pub recall_10: f64,
    pub recall_20: f64,
    pub mre_deg: Option<f64>,
    pub mte_m: Option<f64>,
    pub mean_re_deg: Option<f64>,
    pub mean_te_m: Option<f64>,
}

pub fn transform_metrics(predicted: &[RigidTransform], gt: &[RigidTransform]) -> TransformMetrics {
    if gt.is_empty() {
        return TransformMetrics {
            recall_10: 1.0,
            recall_20: 1.0,
            mre_deg: None,
            mte_m: None,
            mean_re_deg: None,
            mean_te_m: None,
        };
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in predicted.iter().enumerate() {
            pairs.push((p.rotation_error(g), gi, pi));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; predicted.len()];
    let mut matches: Vec<(usize, usize)> = Vec::new();
    for (_, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            matches.push((gi, pi));
        }
    }
    let mut n10 = 0usize;
    let mut n20 = 0usize;
    let mut errs: Vec<(f64, f64)> = Vec::new();
    for &(gi, pi) in &matches {
        let re = predicted[pi].rotation_error(&gt[gi]).to_degrees();
        let te = predicted[pi].translation_error(&gt[gi]);
        if re < 10.0 && te < 0.10 {
            n10 += 1;
        }
        if re < 20.0 && te < 0.20 {
            n20 += 1;
            errs.push((re, te));
        }
    }
    let median = |mut v: Vec<f64>| -> Option<f64> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        })
    };
    let mean = |v: &[f64]| -> Option<f64> {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let res: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let tes: Vec<f64> = errs.iter().map(|e| e.1).collect();
    TransformMetrics {
        recall_10: n10 as f64 / gt.len() as f64,
        recall_20: n20 as f64 / gt.len() as f64,
        mre_deg: median(res.clone()),
        mte_m: median(tes.clone()),
        mean_re_deg: mean(&res),
        mean_te_m: mean(&tes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discover::connected_components_filtered;
    use nalgebra::{Matrix3, Vector3};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn keys(list: &[(i64, i64, i64)]) -> BTreeSet<VoxelKey> {
        list.iter()
            .map(|&(ix, iy, iz)| VoxelKey { ix, iy, iz })
            .collect()
    }

    #[test]
    fn recall_basics() {
        let gt = keys(&[(0, 0, 0), (1, 0, 0)]);
        assert_eq!(voxel_recall(&gt, &gt).unwrap(), 1.0);
        let miss = keys(&[(5, 5, 5)]);
        assert_eq!(voxel_recall(&miss, &gt).unwrap(), 0.0);
        assert_eq!(voxel_recall(&BTreeSet::new(), &BTreeSet::new()).unwrap(), 1.0);
        assert!(matches!(
            voxel_recall(&miss, &BTreeSet::new()),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn recall_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt: BTreeSet<VoxelKey> = (0..100)
            .map(|i| VoxelKey {
                ix: i,
                iy: 0,
                iz: 0,
            })
            .collect();
        let mut covered: Vec<VoxelKey> = gt.iter().copied().collect();
        covered.shuffle(&mut rng);
        let predicted: BTreeSet<VoxelKey> = covered.into_iter().take(76).collect();
        assert!((voxel_recall(&predicted, &gt).unwrap() - 0.76).abs() < 1e-12);
    }

    fn obj(id: usize, voxels: &[(i64, i64, i64)]) -> DetectedObject {
        DetectedObject {
            id,
            voxels: keys(voxels),
            points: Vec::new(),
            transform_id: None,
        }
    }

    #[test]
    fn iou_perfect_and_partial() {
        let gt = vec![obj(0, &[(0, 0, 0), (1, 0, 0)])];
        let (ious, mean, found) = object_iou(&gt, &gt, 0.2);
        assert_eq!(ious, vec![(0, 1.0)]);
        assert_eq!(mean, 1.0);
        assert_eq!(found, 1);

        // Half overlap with equal sizes: IoU = 1/3.
        let pred = vec![obj(0, &[(1, 0, 0), (2, 0, 0)])];
        let (_, mean, _) = object_iou(&pred, &gt, 0.2);
        assert!((mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_counting_over_three_objects() {
        let gt = vec![
            obj(0, &[(0, 0, 0)]),
            obj(1, &[(10, 0, 0)]),
            obj(2, &[(20, 0, 0)]),
        ];
        let pred = vec![obj(0, &[(0, 0, 0)]), obj(1, &[(20, 0, 0)])];
        let (ious, mean, found) = object_iou(&pred, &gt, 0.2);
        assert!((mean - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(found, 2);
        assert_eq!(ious[1], (1, 0.0));
    }

    #[test]
    fn iou_order_invariant() {
        let gt = vec![obj(0, &[(0, 0, 0), (1, 0, 0)]), obj(1, &[(9, 0, 0)])];
        let pred_a = vec![obj(0, &[(0, 0, 0)]), obj(1, &[(9, 0, 0)])];
        let pred_b = vec![obj(0, &[(9, 0, 0)]), obj(1, &[(0, 0, 0)])];
        let (_, mean_a, found_a) = object_iou(&pred_a, &gt, 0.2);
        let (_, mean_b, found_b) = object_iou(&pred_b, &gt, 0.2);
        assert!((mean_a - mean_b).abs() < 1e-12);
        assert_eq!(found_a, found_b);
    }

    #[test]
    fn accuracy_completeness_cases() {
        let gt: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let (a, c) = accuracy_completeness(&gt, &gt, 0.05);
        assert_eq!((a, c), (1.0, 1.0));

        // Predictions = gt plus an equal count of far points: accuracy 0.5,
        // completeness 1.0.
        let mut pred = gt.clone();
        pred.extend((0..10).map(|i| Point3::new(i as f64, 100.0, 0.0)));
        let (a, c) = accuracy_completeness(&pred, &gt, 0.05);
        assert!((a - 0.5).abs() < 1e-12);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn accuracy_completeness_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mk = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Point3> {
                (0..n)
                    .map(|_| {
                        Point3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect()
            };
            let pred = mk(&mut rng, 40);
            let gt = mk(&mut rng, 30);
            let dist = rng.gen_range(0.1..0.8);
            let (a, c) = accuracy_completeness(&pred, &gt, dist);
            let near = |from: &[Point3], to: &[Point3]| -> f64 {
                from.iter()
                    .filter(|p| to.iter().any(|q| p.dist(*q) <= dist))
                    .count() as f64
                    / from.len() as f64
            };
            assert!((a - near(&pred, &gt)).abs() < 1e-12);
            assert!((c - near(&gt, &pred)).abs() < 1e-12);
        }
    }

    fn rot_z(deg: f64, t: Vector3<f64>) -> RigidTransform {
        let a = deg.to_radians();
        RigidTransform {
            rotation: Matrix3::new(
                a.cos(),
                -a.sin(),
                0.0,
                a.sin(),
                a.cos(),
                0.0,
                0.0,
                0.0,
                1.0,
            ),
            translation: t,
        }
    }

    #[test]
    fn transform_metrics_bands() {
        let gt = vec![rot_z(90.0, Vector3::new(1.0, 0.0, 0.0))];
        let m = transform_metrics(&gt, &gt);
        assert_eq!((m.recall_10, m.recall_20), (1.0, 1.0));
        assert_eq!(m.mre_deg, Some(0.0));
        assert_eq!(m.mte_m, Some(0.0));

        // 15 degrees extra rotation: misses the 10-degree band only.
        let pred = vec![rot_z(105.0, Vector3::new(1.0, 0.0, 0.0))];
        let m = transform_metrics(&pred, &gt);
        assert_eq!(m.recall_10, 0.0);
        assert_eq!(m.recall_20, 1.0);
        assert!((m.mre_deg.unwrap() - 15.0).abs() < 1e-9);

        // Closed-form relative errors: 92 vs 90 degrees, translation offset
        // 0.05 m.
        let pred = vec![rot_z(92.0, Vector3::new(1.05, 0.0, 0.0))];
        let m = transform_metrics(&pred, &gt);
        assert!((m.mre_deg.unwrap() - 2.0).abs() < 1e-9);
        assert!((m.mte_m.unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(m.recall_10, 1.0);
    }

    #[test]
    fn recall_bands_are_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let gt: Vec<RigidTransform> = (0..rng.gen_range(1..4))
                .map(|_| {
                    rot_z(
                        rng.gen_range(-90.0..90.0),
                        Vector3::new(rng.gen_range(-1.0..1.0), 0.0, 0.0),
                    )
                })
                .collect();
            let pred: Vec<RigidTransform> = (0..rng.gen_range(0..4))
                .map(|_| {
                    rot_z(
                        rng.gen_range(-90.0..90.0),
                        Vector3::new(rng.gen_range(-1.0..1.0), 0.0, 0.0),
                    )
                })
                .collect();
            let m = transform_metrics(&pred, &gt);
            assert!(m.recall_10 <= m.recall_20 + 1e-12);
        }
    }

    #[test]
    fn components_roundtrip_through_metrics() {
        // Build gt objects via the discover module, compare against a
        // shifted copy of themselves.
        let pts: Vec<Point3> = (0..50)
            .map(|i| Point3::new((i % 10) as f64 * 0.05, (i / 10) as f64 * 0.05, 0.0))
            .collect();
        let gt = connected_components_filtered(&pts, 0.1, 1);
        let (_, mean, found) = object_iou(&gt, &gt, 0.2);
        assert_eq!(mean, 1.0);
        assert_eq!(found, gt.len());
    }
}
