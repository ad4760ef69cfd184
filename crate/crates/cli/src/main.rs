//! Command-line front end: run the change-detection pipeline on a scan pair,
//! or generate synthetic scene pairs with ground truth.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenediff_core::pipeline::{self, Mode, PipelineConfig};
use scenediff_core::render::render_depth;
use scenediff_core::{ply, synth};

#[derive(Parser)]
#[command(
    name = "scenediff",
    about = "Discover objects as 3D changes between two aligned scans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on a reference/rescan pair.
    Run {
        /// Reference scan mesh (PLY).
        #[arg(long)]
        reference: PathBuf,
        /// Rescan mesh (PLY), pre-aligned to the reference.
        #[arg(long)]
        rescan: PathBuf,
        /// Camera pose file (see README for the format).
        #[arg(long)]
        poses: PathBuf,
        /// Optional ground-truth directory (gt_changed.ply + gt_transforms.json).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Optional TOML config file with key = value overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pipeline variant: full, before-optim, or taneja.
        #[arg(long, default_value = "full")]
        mode: String,
        /// Output directory for report.json and PLY overlays.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// RANSAC seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump per-view depth maps and change masks as 16-bit PNGs.
        #[arg(long)]
        dump_debug: bool,
    },
    /// Generate a synthetic scene pair with ground truth.
    Synth {
        /// Preset name: single-move, multi-edit, slide, two-moves, no-change.
        #[arg(long, default_value = "single-move")]
        preset: String,
        /// Output directory for the standard input layout.
        #[arg(long, default_value = "scene")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Surface sampling density, points per square meter.
        #[arg(long, default_value_t = synth::DEFAULT_DENSITY)]
        density: f64,
        #[arg(long, default_value_t = synth::DEFAULT_VIEWPOINTS)]
        viewpoints: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> scenediff_core::Result<()> {
    match cli.command {
        Command::Run {
            reference,
            rescan,
            poses,
            gt,
            config,
            mode,
            out_dir,
            seed,
            dump_debug,
        } => {
            let mut cfg = match config {
                Some(path) => PipelineConfig::from_toml(&std::fs::read_to_string(path)?)?,
                None => PipelineConfig::default(),
            };
            cfg.mode = mode.parse::<Mode>()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if dump_debug {
                dump_depth_debug(&reference, &rescan, &poses, cfg.tau, &out_dir)?;
            }
            let report = pipeline::run(
                &reference,
                &rescan,
                &poses,
                gt.as_deref(),
                &cfg,
                &out_dir,
            )?;
            print_summary(&report);
            Ok(())
        }
        Command::Synth {
            preset,
            out_dir,
            seed,
            density,
            viewpoints,
        } => {
            let spec = synth::preset(&preset, seed).ok_or_else(|| {
                scenediff_core::Error::SpecViolation(format!("unknown preset '{preset}'"))
            })?;
            let (reference, rescan, poses, gt) = synth::generate(&spec, density, viewpoints)?;
            pipeline::write_layout(&out_dir, &reference, &rescan, &poses, &gt)?;
            println!(
                "wrote scene '{preset}' to {} ({} poses, {} gt objects, {} gt transforms)",
                out_dir.display(),
                poses.len(),
                gt.objects.len(),
                gt.transforms.len()
            );
            Ok(())
        }
    }
}

fn print_summary(report: &scenediff_core::RunReport) {
    println!("mode: {}", report.config.mode);
    println!("hypotheses: {}", report.hypotheses.len());
    for h in &report.hypotheses {
        println!(
            "  t = ({:+.3}, {:+.3}, {:+.3}) m, inliers = {}",
            h.translation[0], h.translation[1], h.translation[2], h.inlier_count
        );
    }
    println!("objects: {}", report.objects.len());
    for o in &report.objects {
        println!(
            "  #{}: {} voxels, {} points, transform = {}",
            o.id,
            o.voxel_count,
            o.point_count,
            o.transform_id
                .map(|t| t.to_string())
                .unwrap_or_else(|| "none".into())
        );
    }
    if let Some(eval) = &report.eval {
        println!("evaluation:");
        match eval.voxel_recall {
            Some(r) => println!("  voxel recall        {:>7.2}%", 100.0 * r),
            None => println!("  voxel recall            n/a"),
        }
        println!("  mean IoU            {:>7.2}%", 100.0 * eval.mean_iou);
        println!(
            "  discovered          {:>4} / {}",
            eval.discovered_count, eval.gt_object_count
        );
        println!("  accuracy            {:>7.2}%", 100.0 * eval.accuracy);
        println!("  completeness        {:>7.2}%", 100.0 * eval.completeness);
        if let (Some(r10), Some(r20)) = (eval.transform_recall_10, eval.transform_recall_20) {
            println!("  transform recall    {:>7.2}% @10cm/10deg", 100.0 * r10);
            println!("  transform recall    {:>7.2}% @20cm/20deg", 100.0 * r20);
        }
        if let (Some(mre), Some(mte)) = (eval.mre_deg, eval.mte_m) {
            println!("  MRE {mre:.3} deg, MTE {mte:.4} m");
        }
    }
}

/// Renders both scans from every pose and writes depth maps (16-bit PNG,
/// millimeters) plus binary change masks.
fn dump_depth_debug(
    reference: &std::path::Path,
    rescan: &std::path::Path,
    poses: &std::path::Path,
    tau: f64,
    out_dir: &std::path::Path,
) -> scenediff_core::Result<()> {
    let ref_mesh = ply::read_mesh(reference)?;
    let rescan_mesh = ply::read_mesh(rescan)?;
    let poses = pipeline::load_poses(poses)?;
    let dir = out_dir.join("debug");
    std::fs::create_dir_all(&dir)?;
    for (i, pose) in poses.iter().enumerate() {
        let d_s = render_depth(&ref_mesh, pose);
        let d_r = render_depth(&rescan_mesh, pose);
        write_depth_png(&d_s, dir.join(format!("view{i:02}_reference.png")))?;
        write_depth_png(&d_r, dir.join(format!("view{i:02}_rescan.png")))?;
        let mask = scenediff_core::detect::diff_mask(&d_s, &d_r, tau)?;
        let buf: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, buf)
            .expect("mask buffer size");
        img.save(dir.join(format!("view{i:02}_mask.png")))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(())
}

fn write_depth_png(
    depth: &scenediff_core::DepthMap,
    path: PathBuf,
) -> scenediff_core::Result<()> {
    let buf: Vec<u16> = depth
        .values
        .iter()
        .map(|&v| (v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
        depth.width as u32,
        depth.height as u32,
        buf,
    )
    .expect("depth buffer size");
    img.save(path)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}
