//! End-to-end orchestration: configuration, dataset I/O, the staged
//! pipeline (detect, cluster, match, estimate motions, optimize, discover,
//! evaluate), and the deterministic JSON report.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detect::{detect_changes, ChangePoints};
use crate::discover::{connected_components, DetectedObject};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_completeness, object_iou, transform_metrics, voxel_recall, EvalReport,
};
use crate::features::{compute_fpfh, downsample_grid, filter_static, match_features};
use crate::geom::{voxelize, Point3, PointCloud, RigidTransform, TriangleMesh, VoxelKey};
use crate::kdtree::KdTree;
use crate::motion::{dominant_transforms, MotionHypothesis, RansacParams};
use crate::optimize::{
    base_labeling, consistent_under, fuse_labelings, solve_with_weights, taneja_binary, Labeling,
};
use crate::ply;
use crate::supervoxel::{assign_priors, segment, SupervoxelGraph, SupervoxelParams};
use crate::synth::GroundTruth;

/// Which variant of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Full pipeline: motions + consistency graph cuts + fusion.
    #[serde(rename = "full")]
    Full,
    /// Stop after initial change detection (depth differencing only).
    #[serde(rename = "before-optim")]
    BeforeOptim,
    /// Color-consistency baseline edge weights instead of transformation
    /// consistency.
    #[serde(rename = "taneja")]
    Taneja,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "full" => Ok(Mode::Full),
            "before-optim" => Ok(Mode::BeforeOptim),
            "taneja" => Ok(Mode::Taneja),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown mode '{other}'"),
            }),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::BeforeOptim => "before-optim",
            Mode::Taneja => "taneja",
        })
    }
}

/// All tunable parameters of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Depth difference threshold, meters.
    pub tau: f64,
    pub voxel_size: f64,
    pub seed_spacing: f64,
    pub w_spatial: f64,
    pub w_normal: f64,
    pub w_color: f64,
    /// Radius for the change-prior containment test, meters.
    pub prior_radius: f64,
    /// FPFH neighborhood radius, meters.
    pub feature_radius: f64,
    /// Grid cell for descriptor downsampling, meters.
    pub downsample_cell: f64,
    /// Only points within this distance of a detected change participate in
    /// feature matching, meters.
    pub match_region_radius: f64,
    /// Correspondences with larger descriptor distance are dropped.
    pub max_feature_dist: f64,
    /// Matches closer than this in 3D are static background, meters.
    pub delta_static: f64,
    pub ransac_t: f64,
    pub ransac_k: usize,
    pub ransac_iters: usize,
    pub min_inliers: usize,
    pub seed: u64,
    /// Potts regularization strength.
    pub lambda: f64,
    /// Transformation-consistency residual bound, meters.
    pub epsilon_t: f64,
    /// Color-consistency baseline strength.
    pub gamma: f64,
    /// Connected-component grid cell, meters.
    pub cell_size: f64,
    /// Distance for point-level accuracy/completeness, meters.
    pub accuracy_dist: f64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sv = SupervoxelParams::default();
        let rs = RansacParams::default();
        PipelineConfig {
            tau: 0.05,
            voxel_size: sv.voxel_size,
            seed_spacing: sv.seed_spacing,
            w_spatial: sv.w_spatial,
            w_normal: sv.w_normal,
            w_color: sv.w_color,
            prior_radius: sv.voxel_size,
            feature_radius: 0.15,
            downsample_cell: 0.05,
            match_region_radius: 0.3,
            max_feature_dist: 0.01,
            delta_static: rs.delta_static,
            ransac_t: rs.t,
            ransac_k: rs.k,
            ransac_iters: rs.max_iters,
            min_inliers: rs.min_inliers,
            seed: rs.seed,
            lambda: 0.5,
            epsilon_t: 0.05,
            gamma: 1.0,
            cell_size: 0.1,
            accuracy_dist: 0.1,
            mode: Mode::Full,
        }
    }
}

impl PipelineConfig {
    pub fn supervoxel_params(&self) -> SupervoxelParams {
        SupervoxelParams {
            voxel_size: self.voxel_size,
            seed_spacing: self.seed_spacing,
            w_spatial: self.w_spatial,
            w_normal: self.w_normal,
            w_color: self.w_color,
        }
    }

    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            t: self.ransac_t,
            k: self.ransac_k,
            max_iters: self.ransac_iters,
            delta_static: self.delta_static,
            min_inliers: self.min_inliers,
            seed: self.seed,
        }
    }

    /// Parses a flat TOML key = value file; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        let mut cfg = PipelineConfig::default();
        for (key, value) in table {
            let num = |v: &toml::Value| -> Result<f64> {
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::Parse {
                        line: 0,
                        msg: format!("key '{key}' must be a number"),
                    })
            };
            match key.as_str() {
                "tau" => cfg.tau = num(&value)?,
                "voxel_size" => cfg.voxel_size = num(&value)?,
                "seed_spacing" => cfg.seed_spacing = num(&value)?,
                "w_spatial" => cfg.w_spatial = num(&value)?,
                "w_normal" => cfg.w_normal = num(&value)?,
                "w_color" => cfg.w_color = num(&value)?,
                "prior_radius" => cfg.prior_radius = num(&value)?,
                "feature_radius" => cfg.feature_radius = num(&value)?,
                "downsample_cell" => cfg.downsample_cell = num(&value)?,
                "match_region_radius" => cfg.match_region_radius = num(&value)?,
                "max_feature_dist" => cfg.max_feature_dist = num(&value)?,
                "delta_static" => cfg.delta_static = num(&value)?,
                "ransac_t" => cfg.ransac_t = num(&value)?,
                "ransac_k" => cfg.ransac_k = num(&value)? as usize,
                "ransac_iters" => cfg.ransac_iters = num(&value)? as usize,
                "min_inliers" => cfg.min_inliers = num(&value)? as usize,
                "seed" => cfg.seed = num(&value)? as u64,
                "lambda" => cfg.lambda = num(&value)?,
                "epsilon_t" => cfg.epsilon_t = num(&value)?,
                "gamma" => cfg.gamma = num(&value)?,
                "cell_size" => cfg.cell_size = num(&value)?,
                "accuracy_dist" => cfg.accuracy_dist = num(&value)?,
                "mode" => {
                    cfg.mode = value
                        .as_str()
                        .ok_or_else(|| Error::Parse {
                            line: 0,
                            msg: "mode must be a string".into(),
                        })?
                        .parse()?
                }
                other => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("unknown config key '{other}'"),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

/// One motion hypothesis in report form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub inlier_count: usize,
}

/// One discovered object in report form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectReport {
    pub id: usize,
    pub voxel_count: usize,
    pub point_count: usize,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub transform_id: Option<usize>,
}

/// The full run output written to report.json. Stage timings live in a
/// separate file so the report stays byte-identical across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub hypotheses: Vec<HypothesisReport>,
    pub objects: Vec<ObjectReport>,
    pub eval: Option<EvalReport>,
}

/// In-memory result of a run.
pub struct RunOutput {
    pub report: RunReport,
    pub changed_points: Vec<Point3>,
    pub objects: Vec<DetectedObject>,
    pub hypotheses: Vec<MotionHypothesis>,
    /// (stage name, seconds), in execution order.
    pub timings: Vec<(String, f64)>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs the pipeline on in-memory scans. `gt` enables the evaluation block.
pub fn run_in_memory(
    reference: &TriangleMesh,
    rescan: &TriangleMesh,
    poses: &[crate::render::CameraPose],
    gt: Option<&GroundTruth>,
    cfg: &PipelineConfig,
) -> Result<RunOutput> {
    if reference.faces.is_empty() || rescan.faces.is_empty() {
        return Err(Error::EmptyScene);
    }
    stage("validate", reference.validate())?;
    stage("validate", rescan.validate())?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();

    // Stage 1: initial change detection by depth differencing.
    let changes = stage("detect", detect_changes(reference, rescan, poses, cfg.tau))?;
    timings.push(("detect".into(), clock.elapsed().as_secs_f64()));
    clock = Instant::now();

    let ref_cloud = reference.as_point_cloud();
    let rescan_cloud = rescan.as_point_cloud();

    let (changed_points, changed_sv, hypotheses, _graph, labelings, node_consistent) =
        if cfg.mode == Mode::BeforeOptim {
            (changes.points.clone(), None, Vec::new(), None, Vec::new(), Vec::new())
        } else {
            run_optimized(&changes, &ref_cloud, &rescan_cloud, cfg, &mut timings, &mut clock)?
        };

    // Discovery: connected components of the changed points.
    let mut objects = connected_components(&changed_points, cfg.cell_size);
    if let Some(sv_of) = &changed_sv {
        attribute_transforms(
            &mut objects,
            &changed_points,
            sv_of,
            &labelings,
            &node_consistent,
            cfg.cell_size,
        );
    }
    timings.push(("discover".into(), clock.elapsed().as_secs_f64()));
    clock = Instant::now();

    let eval = match gt {
        Some(gt) => Some(evaluate(&changed_points, &objects, &hypotheses, gt, cfg)?),
        None => None,
    };
    timings.push(("evaluate".into(), clock.elapsed().as_secs_f64()));

    let report = RunReport {
        config: cfg.clone(),
        hypotheses: hypotheses
            .iter()
            .map(|h| HypothesisReport {
                rotation: h.transform.rotation_rows(),
                translation: [
                    h.transform.translation.x,
                    h.transform.translation.y,
                    h.transform.translation.z,
                ],
                inlier_count: h.inlier_count,
            })
            .collect(),
        objects: objects
            .iter()
            .map(|o| {
                let (lo, hi) = o.bounding_box();
                ObjectReport {
                    id: o.id,
                    voxel_count: o.voxels.len(),
                    point_count: o.points.len(),
                    bbox_min: [lo.x, lo.y, lo.z],
                    bbox_max: [hi.x, hi.y, hi.z],
                    transform_id: o.transform_id,
                }
            })
            .collect(),
        eval,
    };
    Ok(RunOutput {
        report,
        changed_points,
        objects,
        hypotheses,
        timings,
    })
}

type OptimizedOutput = (
    Vec<Point3>,
    Option<Vec<u32>>,
    Vec<MotionHypothesis>,
    Option<SupervoxelGraph>,
    Vec<Labeling>,
    Vec<Vec<bool>>,
);

/// Stages 2-4 of the full pipeline (also used by the baseline mode):
/// clustering + priors, matching + motion estimation, graph optimization.
fn run_optimized(
    changes: &ChangePoints,
    ref_cloud: &PointCloud,
    rescan_cloud: &PointCloud,
    cfg: &PipelineConfig,
    timings: &mut Vec<(String, f64)>,
    clock: &mut Instant,
) -> Result<OptimizedOutput> {
    // Combined scene cloud: supervoxels span both scans so removed and added
    // geometry is labeled alike.
    let mut combined = ref_cloud.clone();
    combined.points.extend(rescan_cloud.points.iter().copied());
    if let (Some(a), Some(b)) = (combined.normals.as_mut(), rescan_cloud.normals.as_ref()) {
        a.extend(b.iter().copied());
    }
    if let (Some(a), Some(b)) = (combined.colors.as_mut(), rescan_cloud.colors.as_ref()) {
        a.extend(b.iter().copied());
    }

    let graph = stage("supervoxel", segment(&combined, &cfg.supervoxel_params()))?;
    let graph = assign_priors(graph, &combined, changes, cfg.prior_radius);
    timings.push(("supervoxel".into(), clock.elapsed().as_secs_f64()));
    *clock = Instant::now();

    // Feature matching restricted to points near detected changes; static
    // geometry far from any change cannot support a motion.
    let hypotheses = if changes.points.is_empty() {
        Vec::new()
    } else {
        let change_tree = KdTree::build(&changes.points);
        let near = |cloud: &PointCloud| -> PointCloud {
            let keep: Vec<usize> = cloud
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| change_tree.any_within(**p, cfg.match_region_radius))
                .map(|(i, _)| i)
                .collect();
            PointCloud {
                points: keep.iter().map(|&i| cloud.points[i]).collect(),
                normals: cloud
                    .normals
                    .as_ref()
                    .map(|n| keep.iter().map(|&i| n[i]).collect()),
                colors: cloud
                    .colors
                    .as_ref()
                    .map(|c| keep.iter().map(|&i| c[i]).collect()),
            }
        };
        let (region_s, _) = downsample_grid(&near(ref_cloud), cfg.downsample_cell);
        let (region_r, _) = downsample_grid(&near(rescan_cloud), cfg.downsample_cell);
        if region_s.is_empty() || region_r.is_empty() {
            Vec::new()
        } else {
            let desc_s = stage("features", compute_fpfh(&region_s, cfg.feature_radius))?;
            let desc_r = stage("features", compute_fpfh(&region_r, cfg.feature_radius))?;
            let mut corrs = match_features(&desc_s, &desc_r);
            corrs.retain(|c| c.distance_feature <= cfg.max_feature_dist);
            let corrs = filter_static(&corrs, &region_s, &region_r, cfg.delta_static);
            timings.push(("features".into(), clock.elapsed().as_secs_f64()));
            *clock = Instant::now();
            dominant_transforms(&corrs, &region_s, &region_r, &cfg.ransac_params())
        }
    };
    timings.push(("motion".into(), clock.elapsed().as_secs_f64()));
    *clock = Instant::now();

    // Optimization: per-transform cuts (full) or one color-weighted cut
    // (baseline), fused with the unary-only labeling.
    let rescan_tree = KdTree::build(&rescan_cloud.points);
    let base = stage("optimize", base_labeling(&graph))?;
    let mut labelings = Vec::new();
    let mut node_consistent = Vec::new();
    match cfg.mode {
        Mode::Full => {
            for h in &hypotheses {
                let ok: Vec<bool> = graph
                    .nodes
                    .iter()
                    .map(|sv| {
                        consistent_under(sv, &h.transform, &combined, &rescan_tree, cfg.epsilon_t)
                    })
                    .collect();
                let weights: Vec<f64> = graph
                    .edges
                    .iter()
                    .map(|&(a, b)| {
                        if ok[a as usize] && ok[b as usize] {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                labelings.push(stage(
                    "optimize",
                    solve_with_weights(&graph, &weights, cfg.lambda),
                )?);
                node_consistent.push(ok);
            }
        }
        Mode::Taneja => {
            let colors = combined.colors.as_ref().ok_or(Error::MissingColors)?;
            let node_colors: Vec<[f64; 3]> = graph
                .nodes
                .iter()
                .map(|sv| {
                    let mut acc = [0.0; 3];
                    for &i in &sv.member_indices {
                        for (a, c) in acc.iter_mut().zip(&colors[i as usize]) {
                            *a += c;
                        }
                    }
                    let n = sv.member_indices.len() as f64;
                    [acc[0] / n, acc[1] / n, acc[2] / n]
                })
                .collect();
            let weights = stage("optimize", taneja_binary(&graph, &node_colors, cfg.gamma))?;
            labelings.push(stage(
                "optimize",
                solve_with_weights(&graph, &weights, cfg.lambda),
            )?);
        }
        Mode::BeforeOptim => unreachable!("handled by the caller"),
    }
    let fused = stage("optimize", fuse_labelings(&labelings, &base))?;
    timings.push(("optimize".into(), clock.elapsed().as_secs_f64()));
    *clock = Instant::now();

    let mut changed_points = Vec::new();
    let mut changed_sv = Vec::new();
    for (sv, &on) in graph.nodes.iter().zip(&fused.labels) {
        if on {
            for &i in &sv.member_indices {
                changed_points.push(combined.points[i as usize]);
                changed_sv.push(sv.id as u32);
            }
        }
    }
    Ok((
        changed_points,
        Some(changed_sv),
        hypotheses,
        Some(graph),
        labelings,
        node_consistent,
    ))
}

/// Attaches to each object the motion that explains the majority of its
/// points: a point votes for transform j when its supervoxel was labeled
/// changing in solve j and is consistent under that transform. Objects with
/// no votes (added / removed geometry) keep transform_id = None.
fn attribute_transforms(
    objects: &mut [DetectedObject],
    changed_points: &[Point3],
    changed_sv: &[u32],
    labelings: &[Labeling],
    node_consistent: &[Vec<bool>],
    cell_size: f64,
) {
    if labelings.is_empty() || node_consistent.len() != labelings.len() {
        return;
    }
    let mut voxel_to_object: std::collections::BTreeMap<VoxelKey, usize> =
        std::collections::BTreeMap::new();
    for (oi, o) in objects.iter().enumerate() {
        for &k in &o.voxels {
            voxel_to_object.insert(k, oi);
        }
    }
    let mut votes = vec![vec![0usize; labelings.len()]; objects.len()];
    for (&p, &sv) in changed_points.iter().zip(changed_sv) {
        let Some(&oi) = voxel_to_object.get(&VoxelKey::from_point(p, cell_size)) else {
            continue;
        };
        for (j, (labeling, consistent)) in labelings.iter().zip(node_consistent).enumerate() {
            if labeling.labels[sv as usize] && consistent[sv as usize] {
                votes[oi][j] += 1;
            }
        }
    }
    for (o, v) in objects.iter_mut().zip(&votes) {
        let best = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .filter(|(_, &c)| c * 4 > o.points.len())
            .map(|(j, _)| j);
        o.transform_id = best;
    }
}

fn evaluate(
    changed_points: &[Point3],
    objects: &[DetectedObject],
    hypotheses: &[MotionHypothesis],
    gt: &GroundTruth,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let gt_points = gt.changed_points();
    let predicted_voxels = voxelize(changed_points, cfg.cell_size);
    let gt_voxels = voxelize(&gt_points, cfg.cell_size);
    let recall = if gt_voxels.is_empty() {
        None
    } else {
        Some(stage("evaluate", voxel_recall(&predicted_voxels, &gt_voxels))?)
    };
    let (ious, mean_iou, discovered) = object_iou(objects, &gt.objects, 0.2);
    let (accuracy, completeness) =
        accuracy_completeness(changed_points, &gt_points, cfg.accuracy_dist);
    let predicted_transforms: Vec<RigidTransform> =
        hypotheses.iter().map(|h| h.transform).collect();
    let tm = transform_metrics(&predicted_transforms, &gt.transforms);
    Ok(EvalReport {
        voxel_recall: recall,
        object_ious: ious,
        mean_iou,
        discovered_count: discovered,
        gt_object_count: gt.objects.len(),
        accuracy,
        completeness,
        transform_recall_10: Some(tm.recall_10),
        transform_recall_20: Some(tm.recall_20),
        mre_deg: tm.mre_deg,
        mte_m: tm.mte_m,
        mean_re_deg: tm.mean_re_deg,
        mean_te_m: tm.mean_te_m,
    })
}

/// Parses the pose file: per camera, a line "fx fy cx cy width height"
/// followed by three rows of the 3x4 [R | t] matrix; cameras separated by
/// blank lines. Validates each rotation.
pub fn load_poses(path: impl AsRef<Path>) -> Result<Vec<crate::render::CameraPose>> {
    let file = fs::File::open(path)?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        lines.push((i + 1, line?));
    }
    parse_poses(&lines)
}

fn parse_poses(lines: &[(usize, String)]) -> Result<Vec<crate::render::CameraPose>> {
    let mut poses = Vec::new();
    let mut block: Vec<(usize, Vec<f64>)> = Vec::new();
    let parse_row = |line_no: usize, text: &str| -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid number '{tok}'"),
                })
            })
            .collect()
    };
    let mut flush = |block: &mut Vec<(usize, Vec<f64>)>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        if block.len() != 4 {
            return Err(Error::Parse {
                line: block[0].0,
                msg: format!("pose block has {} lines, expected 4", block.len()),
            });
        }
        let (l0, header) = (&block[0].0, &block[0].1);
        if header.len() != 6 {
            return Err(Error::Parse {
                line: *l0,
                msg: format!("header has {} fields, expected 6", header.len()),
            });
        }
        let mut rows = [[0.0; 3]; 3];
        let mut t = [0.0; 3];
        for r in 0..3 {
            let (ln, vals) = (&block[r + 1].0, &block[r + 1].1);
            if vals.len() != 4 {
                return Err(Error::Parse {
                    line: *ln,
                    msg: format!("matrix row has {} fields, expected 4", vals.len()),
                });
            }
            rows[r] = [vals[0], vals[1], vals[2]];
            t[r] = vals[3];
        }
        let rt = RigidTransform::from_rows(rows, t);
        if !rt.is_rotation(1e-6) {
            return Err(Error::InvalidRotation(block[1].0));
        }
        let pose = crate::render::CameraPose {
            fx: header[0],
            fy: header[1],
            cx: header[2],
            cy: header[3],
            width: header[4] as usize,
            height: header[5] as usize,
            rotation: rt.rotation,
            translation: rt.translation,
        };
        pose.validate()?;
        poses.push(pose);
        block.clear();
        Ok(())
    };
    for (line_no, text) in lines {
        if text.trim().is_empty() {
            flush(&mut block)?;
        } else {
            block.push((*line_no, parse_row(*line_no, text)?));
        }
    }
    flush(&mut block)?;
    Ok(poses)
}

/// Writes poses in the load_poses format with full float precision.
pub fn save_poses(path: impl AsRef<Path>, poses: &[crate::render::CameraPose]) -> Result<()> {
    let mut out = String::new();
    for pose in poses {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            pose.fx, pose.fy, pose.cx, pose.cy, pose.width, pose.height
        ));
        for r in 0..3 {
            out.push_str(&format!(
                "{} {} {} {}\n",
                pose.rotation[(r, 0)],
                pose.rotation[(r, 1)],
                pose.rotation[(r, 2)],
                pose.translation[r]
            ));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Rounds every float in a JSON tree to 6 significant digits so the report
/// is stable across platforms and reruns.
fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    let rounded: f64 = format!("{f:.5e}").parse().unwrap_or(f);
                    if let Some(num) = serde_json::Number::from_f64(rounded) {
                        *n = num;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serializes the report deterministically: sorted keys (serde_json maps
/// are ordered) and floats at 6 significant digits.
pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    let mut value = serde_json::to_value(report).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    round_floats(&mut value);
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Loads the ground-truth directory layout: gt_changed.ply (union of changed
/// points) and gt_transforms.json.
pub fn load_ground_truth(dir: impl AsRef<Path>) -> Result<GroundTruth> {
    let dir = dir.as_ref();
    let cloud = ply::read_point_cloud(dir.join("gt_changed.ply"))?;
    let text = fs::read_to_string(dir.join("gt_transforms.json"))?;
    #[derive(Deserialize)]
    struct TransformFile {
        transforms: Vec<TransformEntry>,
    }
    #[derive(Deserialize)]
    struct TransformEntry {
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    }
    let parsed: TransformFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let transforms = parsed
        .transforms
        .iter()
        .map(|t| RigidTransform::from_rows(t.rotation, t.translation))
        .collect();
    Ok(GroundTruth::from_points(cloud.points, Vec::new(), transforms))
}

/// Writes a scene pair plus ground truth in the standard input layout:
/// reference.ply, rescan.ply, poses.txt, gt/gt_changed.ply,
/// gt/gt_transforms.json.
pub fn write_layout(
    dir: impl AsRef<Path>,
    reference: &TriangleMesh,
    rescan: &TriangleMesh,
    poses: &[crate::render::CameraPose],
    gt: &GroundTruth,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("gt"))?;
    ply::write_mesh(
        dir.join("reference.ply"),
        reference,
        ply::PlyFormat::BinaryLittleEndian,
    )?;
    ply::write_mesh(
        dir.join("rescan.ply"),
        rescan,
        ply::PlyFormat::BinaryLittleEndian,
    )?;
    save_poses(dir.join("poses.txt"), poses)?;
    let changed = PointCloud::from_points(gt.changed_points());
    ply::write_point_cloud(
        dir.join("gt").join("gt_changed.ply"),
        &changed,
        ply::PlyFormat::BinaryLittleEndian,
    )?;
    let transforms: Vec<serde_json::Value> = gt
        .transforms
        .iter()
        .map(|t| {
            serde_json::json!({
                "rotation": t.rotation_rows(),
                "translation": [t.translation.x, t.translation.y, t.translation.z],
            })
        })
        .collect();
    let body = serde_json::json!({ "transforms": transforms });
    fs::write(
        dir.join("gt").join("gt_transforms.json"),
        serde_json::to_string_pretty(&body).expect("json") + "\n",
    )?;
    Ok(())
}

/// File-based entry point: loads the input layout, runs the pipeline, and
/// writes report.json, timings.json, changed.ply, and one PLY per object
/// into `out_dir`.
pub fn run(
    reference: impl AsRef<Path>,
    rescan: impl AsRef<Path>,
    poses: impl AsRef<Path>,
    gt_dir: Option<&Path>,
    cfg: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<RunReport> {
    let reference = stage("load", ply::read_mesh(reference))?;
    let rescan = stage("load", ply::read_mesh(rescan))?;
    let poses = stage("load", load_poses(poses))?;
    let gt = match gt_dir {
        Some(d) => Some(stage("load", load_ground_truth(d))?),
        None => None,
    };
    let out = run_in_memory(&reference, &rescan, &poses, gt.as_ref(), cfg)?;

    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("objects"))?;
    write_report(&out.report, out_dir.join("report.json"))?;
    let timings: Vec<serde_json::Value> = out
        .timings
        .iter()
        .map(|(name, secs)| serde_json::json!({ "stage": name, "seconds": secs }))
        .collect();
    fs::write(
        out_dir.join("timings.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "timings": timings })).expect("json")
            + "\n",
    )?;
    let changed = PointCloud::from_points(out.changed_points.clone());
    ply::write_point_cloud(
        out_dir.join("changed.ply"),
        &changed,
        ply::PlyFormat::BinaryLittleEndian,
    )?;
    for object in &out.objects {
        let cloud = PointCloud::from_points(object.points.clone());
        ply::write_point_cloud(
            out_dir.join("objects").join(format!("object_{}.ply", object.id)),
            &cloud,
            ply::PlyFormat::BinaryLittleEndian,
        )?;
    }
    Ok(out.report)
}
