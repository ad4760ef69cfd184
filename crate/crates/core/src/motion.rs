//! Dominant rigid-motion estimation from filtered correspondences via
//! seeded RANSAC, applied sequentially with inlier removal.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::features::Correspondence;
use crate::geom::{fit_rigid, PointCloud, RigidTransform};

/// One rigid motion supported by a set of correspondence inliers.
#[derive(Debug, Clone)]
pub struct MotionHypothesis {
    pub transform: RigidTransform,
    pub inliers: Vec<Correspondence>,
    pub inlier_count: usize,
}

/// Residual of a correspondence under a hypothesized transform.
fn residual(
    t: &RigidTransform,
    c: &Correspondence,
    cloud_s: &PointCloud,
    cloud_r: &PointCloud,
) -> f64 {
    t.apply(cloud_s.points[c.index_s as usize])
        .dist(cloud_r.points[c.index_r as usize])
}

fn inliers_of(
    t: &RigidTransform,
    corrs: &[Correspondence],
    cloud_s: &PointCloud,
    cloud_r: &PointCloud,
    threshold: f64,
) -> Vec<Correspondence> {
    corrs
        .iter()
        .filter(|c| residual(t, c, cloud_s, cloud_r) <= threshold)
        .copied()
        .collect()
}

/// Single-model RANSAC: samples minimal triples, fits a rigid transform,
/// keeps the hypothesis with most inliers (ties by earliest iteration), and
/// refits on the full inlier set. Returns None when no model with at least
/// three inliers exists.
pub fn ransac_transform(
    corrs: &[Correspondence],
    cloud_s: &PointCloud,
    cloud_r: &PointCloud,
    t: f64,
    max_iters: usize,
    seed: u64,
) -> Option<MotionHypothesis> {
    assert!(t > 0.0 && max_iters >= 1);
    if corrs.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, RigidTransform)> = None;
    for _ in 0..max_iters {
        let sample: Vec<&Correspondence> = corrs.choose_multiple(&mut rng, 3).collect();
        let src: Vec<_> = sample
            .iter()
            .map(|c| cloud_s.points[c.index_s as usize])
            .collect();
        let dst: Vec<_> = sample
            .iter()
            .map(|c| cloud_r.points[c.index_r as usize])
            .collect();
        let Ok(model) = fit_rigid(&src, &dst) else {
            continue;
        };
        let count = corrs
            .iter()
            .filter(|c| residual(&model, c, cloud_s, cloud_r) <= t)
            .count();
        if best.as_ref().map_or(true, |(bc, _)| count > *bc) {
            best = Some((count, model));
        }
    }
    let (count, model) = best?;
    if count < 3 {
        return None;
    }
    // Refit on the consensus set; keep whichever model classifies more
    // inliers (a refit on noiseless data is a strict improvement, but on
    // adversarial sets it can regress).
    let consensus = inliers_of(&model, corrs, cloud_s, cloud_r, t);
    let src: Vec<_> = consensus
        .iter()
        .map(|c| cloud_s.points[c.index_s as usize])
        .collect();
    let dst: Vec<_> = consensus
        .iter()
        .map(|c| cloud_r.points[c.index_r as usize])
        .collect();
    let refit = fit_rigid(&src, &dst).unwrap_or(model);
    let refit_inliers = inliers_of(&refit, corrs, cloud_s, cloud_r, t);
    let (final_t, final_inliers) = if refit_inliers.len() >= consensus.len() {
        (refit, refit_inliers)
    } else {
        (model, consensus)
    };
    Some(MotionHypothesis {
        inlier_count: final_inliers.len(),
        transform: final_t,
        inliers: final_inliers,
    })
}

/// Knobs for sequential RANSAC motion extraction.
#[derive(Debug, Clone)]
pub struct RansacParams {
    /// Inlier residual threshold, meters.
    pub t: f64,
    /// Maximum number of motions to return.
    pub k: usize,
    /// Hypothesis samples per RANSAC round.
    pub max_iters: usize,
    /// Near-identity rejection bound on the translation norm, meters.
    pub delta_static: f64,
    /// Minimum inlier support for a motion to be kept; weaker models are
    /// discarded (their inliers still removed) as match noise.
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            t: 0.05,
            k: 5,
            max_iters: 2000,
            delta_static: 0.1,
            min_inliers: 10,
            seed: 0,
        }
    }
}

/// Sequential RANSAC: extract up to `k` motions, removing each hypothesis'
/// inliers before the next round. Near-identity models (rotation < 2 deg and
/// translation < `delta_static`) and under-supported models are discarded as
/// residual static background / match noise, but their inliers are still
/// removed so rounds always make progress.
pub fn dominant_transforms(
    corrs: &[Correspondence],
    cloud_s: &PointCloud,
    cloud_r: &PointCloud,
    params: &RansacParams,
) -> Vec<MotionHypothesis> {
    assert!(params.k >= 1);
    let near_identity_angle = 2f64.to_radians();
    let mut remaining: Vec<Correspondence> = corrs.to_vec();
    let mut out: Vec<MotionHypothesis> = Vec::new();
    let mut round = 0u64;
    while out.len() < params.k && remaining.len() >= 3 {
        let Some(hyp) = ransac_transform(
            &remaining,
            cloud_s,
            cloud_r,
            params.t,
            params.max_iters,
            params.seed.wrapping_add(round),
        ) else {
            break;
        };
        round += 1;
        let inlier_set: std::collections::BTreeSet<(u32, u32)> = hyp
            .inliers
            .iter()
            .map(|c| (c.index_s, c.index_r))
            .collect();
        remaining.retain(|c| !inlier_set.contains(&(c.index_s, c.index_r)));
        let near_identity = hyp.transform.rotation_angle() < near_identity_angle
            && hyp.transform.translation.norm() < params.delta_static;
        if !near_identity && hyp.inlier_count >= params.min_inliers.max(3) {
            out.push(hyp);
        }
    }
    out.sort_by(|a, b| b.inlier_count.cmp(&a.inlier_count));
    out
}
