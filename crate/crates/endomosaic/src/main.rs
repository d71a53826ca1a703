//! Command-line pipeline driver: simulate a phantom sequence, register it,
//! assemble 3D / 2D mosaics and evaluate against ground truth.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 processing
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use endomosaic::error::Error;
use endomosaic::evaluation::sequence_report;
use endomosaic::formats::{
    load_png, read_json, save_png, write_json, write_ply, write_report_csv, Calibration,
    GroundTruthFile, LaserData, TrajectoryFile, TransformRecord,
};
use endomosaic::geometry::{CameraIntrinsics, Point3D, RigidTransform3D, Vec3};
use endomosaic::imaging::{segment_laser_dots, PixelMask, SegmentationConfig};
use endomosaic::mosaic::{
    assemble_cloud, chain_globals, mesh_and_texture, render_mosaic_2d, Frame, DEFAULT_MAX_CANVAS,
};
use endomosaic::registration::{register_pair, RegistrationConfig};
use endomosaic::simulator::{
    arc_steps, constant_translation, simulate_sequence, PhantomSurface, SimulationConfig,
};
use endomosaic::triangulation::ProjectorModel;

#[derive(Parser)]
#[command(name = "endomosaic", about = "Structured-light 3D mosaicing pipeline")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print per-step progress.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth.
    Simulate(SimulateArgs),
    /// Register consecutive frames of a simulated/acquired sequence.
    Register(RegisterArgs),
    /// Assemble the textured point cloud, mesh and 2D mosaic.
    Mosaic(MosaicArgs),
    /// Compare estimated transforms against ground truth.
    Evaluate(EvaluateArgs),
    /// Simulate, register, mosaic and evaluate in one run.
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the scene's random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RegisterArgs {
    /// Directory holding calibration.json, frame_*.png and frame_*.laser.json.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for trajectory.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MosaicArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// trajectory.json produced by `register`.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

/// Scene description consumed by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneConfig {
    surface: PhantomSurface,
    n_frames: usize,
    trajectory: TrajectoryConfig,
    /// Initial camera pose (defaults to identity).
    #[serde(default)]
    initial_pose: Option<TransformRecord>,
    /// Image scale relative to 768 x 576 (1.0 = full resolution).
    #[serde(default = "default_scale")]
    resolution_scale: f64,
    #[serde(default)]
    dot_noise_px: f64,
    #[serde(default)]
    pixel_noise: f64,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TrajectoryConfig {
    /// Identical translation steps between consecutive frames.
    ConstantTranslation { step: [f64; 3] },
    /// Identical steps combining translation and rotation about camera x.
    Arc { step: [f64; 3], x_rotation_deg: f64 },
}

fn full_resolution_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(8.0, 0.008, 0.008, 384.0, 288.0, 768, 576)
        .expect("default intrinsics are valid")
}

fn frame_paths(dir: &Path, index: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("frame_{:04}.png", index + 1)),
        dir.join(format!("frame_{:04}.laser.json", index + 1)),
    )
}

fn cmd_simulate(args: &SimulateArgs, verbose: bool) -> Result<(), Error> {
    let mut scene: SceneConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    if scene.n_frames < 2 {
        return Err(Error::InvalidInput("a sequence needs at least 2 frames".into()));
    }
    if !(0.05..=1.0).contains(&scene.resolution_scale) {
        return Err(Error::InvalidInput(format!(
            "resolution_scale {} outside [0.05, 1]",
            scene.resolution_scale
        )));
    }
    std::fs::create_dir_all(&args.out)?;

    let intrinsics = full_resolution_intrinsics().scaled(scene.resolution_scale);
    let projector = ProjectorModel::standard();
    let mut cfg = SimulationConfig::noiseless(intrinsics, projector.clone(), scene.seed);
    cfg.dot_noise_px = scene.dot_noise_px;
    cfg.pixel_noise = scene.pixel_noise;

    let deltas = match scene.trajectory {
        TrajectoryConfig::ConstantTranslation { step } => {
            constant_translation(scene.n_frames, Vec3::new(step[0], step[1], step[2]))
        }
        TrajectoryConfig::Arc { step, x_rotation_deg } => arc_steps(
            scene.n_frames,
            Vec3::new(step[0], step[1], step[2]),
            x_rotation_deg.to_radians(),
        ),
    };
    let initial =
        scene.initial_pose.map_or_else(RigidTransform3D::identity, |r| r.to_transform());

    if verbose {
        eprintln!("simulating {} frames...", scene.n_frames);
    }
    let (frames, gt) = simulate_sequence(&scene.surface, &cfg, &initial, &deltas)?;

    write_json(&args.out.join("calibration.json"), &Calibration::new(intrinsics, &projector))?;
    write_json(&args.out.join("scene.json"), &scene)?;
    write_json(
        &args.out.join("ground_truth.json"),
        &GroundTruthFile {
            poses: gt.poses.iter().map(TransformRecord::from).collect(),
            pair_transforms: gt.deltas.iter().map(TransformRecord::from).collect(),
        },
    )?;
    let reg_frames = endomosaic::simulator::to_frames(&frames, &cfg)?;
    for (sim, reg) in frames.iter().zip(&reg_frames) {
        let (png, laser) = frame_paths(&args.out, sim.index);
        save_png(&png, &sim.image)?;
        write_json(&laser, &LaserData::from_observations(sim.index, &reg.observations))?;
    }
    if verbose {
        eprintln!("wrote {} frames to {}", frames.len(), args.out.display());
    }
    Ok(())
}

/// Mask out disks around the reported dot centers (true = usable texture).
fn mask_from_dots(width: u32, height: u32, dots: &[[f64; 2]], radius: f64) -> PixelMask {
    let mut mask = PixelMask::all_true(width, height);
    let r = radius.ceil() as i64;
    for d in dots {
        let (ix, iy) = (d[0].round() as i64, d[1].round() as i64);
        for y in (iy - r).max(0)..=(iy + r).min(height as i64 - 1) {
            for x in (ix - r).max(0)..=(ix + r).min(width as i64 - 1) {
                if ((x as f64 - d[0]).powi(2) + (y as f64 - d[1]).powi(2)).sqrt() <= radius {
                    mask.set(x as u32, y as u32, false);
                }
            }
        }
    }
    mask
}

fn load_sequence(dir: &Path) -> Result<(Calibration, Vec<Frame>), Error> {
    let cal: Calibration = read_json(&dir.join("calibration.json"))?;
    let mut frames = Vec::new();
    for index in 0.. {
        let (png, laser) = frame_paths(dir, index);
        if !png.exists() {
            break;
        }
        let image = load_png(&png)?;
        if image.width != cal.intrinsics.width || image.height != cal.intrinsics.height {
            return Err(Error::InvalidInput(format!(
                "{} is {}x{} but calibration says {}x{}",
                png.display(),
                image.width,
                image.height,
                cal.intrinsics.width,
                cal.intrinsics.height
            )));
        }
        let laser_data: LaserData = read_json(&laser)?;
        let observations = laser_data.observations()?;

        // Cross-check the recorded dots against segmentation of the image;
        // a count mismatch is suspicious but not fatal.
        let seg = segment_laser_dots(&image, observations.len(), &SegmentationConfig::default());
        if seg.dots.len() != observations.len() {
            eprintln!(
                "warning: frame {}: segmentation found {} dots, laser data has {}",
                index + 1,
                seg.dots.len(),
                observations.len()
            );
        }
        let mask = mask_from_dots(
            image.width,
            image.height,
            &laser_data.dots,
            5.0,
        );
        frames.push(Frame::new(index, image, observations, mask));
    }
    if frames.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "found {} frames in {}, need at least 2",
            frames.len(),
            dir.display()
        )));
    }
    Ok((cal, frames))
}

fn cmd_register(args: &RegisterArgs, verbose: bool) -> Result<(), Error> {
    let (cal, frames) = load_sequence(&args.input)?;
    std::fs::create_dir_all(&args.out)?;
    let cfg = RegistrationConfig::default();

    let mut pairwise = Vec::new();
    let mut nonconverged = 0usize;
    for w in frames.windows(2) {
        let res = register_pair(&w[0], &w[1], &cal.intrinsics, &cfg)?;
        if !res.converged {
            nonconverged += 1;
            eprintln!(
                "warning: pair {}-{} did not converge within {} iterations",
                w[0].index + 1,
                w[1].index + 1,
                cfg.max_iterations
            );
        }
        if verbose {
            eprintln!(
                "pair {}-{}: MI {:.4}, {} iterations",
                w[0].index + 1,
                w[1].index + 1,
                res.final_mi,
                res.iterations
            );
        }
        pairwise.push((res.t3d, res.t2d));
    }
    let (global_3d, _) = chain_globals(&pairwise)?;

    write_json(
        &args.out.join("trajectory.json"),
        &TrajectoryFile {
            pairwise: pairwise.iter().map(|(t, _)| TransformRecord::from(t)).collect(),
            global: global_3d.iter().map(TransformRecord::from).collect(),
        },
    )?;
    if nonconverged > 0 {
        eprintln!("{nonconverged} of {} pairs flagged as non-converged", pairwise.len());
    }
    Ok(())
}

/// Rebuild (3D, 2D) pairwise transforms from stored 3D estimates and the
/// frames' laser points.
fn pairwise_with_homographies(
    cal: &Calibration,
    frames: &[Frame],
    trajectory: &TrajectoryFile,
) -> Result<Vec<(RigidTransform3D, endomosaic::geometry::Homography2D)>, Error> {
    if trajectory.pairwise.len() + 1 != frames.len() {
        return Err(Error::InvalidInput(format!(
            "trajectory has {} pairs but the sequence has {} frames",
            trajectory.pairwise.len(),
            frames.len()
        )));
    }
    trajectory
        .pairwise
        .iter()
        .zip(frames.windows(2))
        .map(|(rec, w)| {
            let t3d = rec.to_transform();
            let points: Vec<_> = w[1].observations.iter().map(|o| (o.point, o.dot)).collect();
            let t2d =
                endomosaic::registration::induced_homography(&t3d, &cal.intrinsics, &points)?;
            Ok((t3d, t2d))
        })
        .collect()
}

fn cmd_mosaic(args: &MosaicArgs, verbose: bool) -> Result<(), Error> {
    let (cal, frames) = load_sequence(&args.input)?;
    let trajectory: TrajectoryFile = read_json(&args.trajectory)?;
    std::fs::create_dir_all(&args.out)?;

    let pairwise = pairwise_with_homographies(&cal, &frames, &trajectory)?;
    let (global_3d, global_2d) = chain_globals(&pairwise)?;
    let pairwise_2d: Vec<_> = pairwise.iter().map(|(_, h)| *h).collect();

    let cloud = assemble_cloud(&frames, &global_3d);
    let mesh = mesh_and_texture(&cloud, &frames, &global_3d, &cal.intrinsics)?;
    write_ply(&args.out.join("surface.ply"), &cloud, &mesh)?;

    let mosaic = render_mosaic_2d(&frames, &global_2d, &pairwise_2d, DEFAULT_MAX_CANVAS)?;
    save_png(&args.out.join("mosaic.png"), &mosaic.image)?;
    write_json(
        &args.out.join("mosaic.json"),
        &serde_json::json!({
            "origin_x": mosaic.origin_x,
            "origin_y": mosaic.origin_y,
            "width": mosaic.image.width,
            "height": mosaic.image.height,
            "unfilled_dot_pixels": mosaic.unfilled_dot_pixels,
            "cloud_points": cloud.len(),
            "mesh_faces": mesh.triangles.len(),
        }),
    )?;
    if verbose {
        eprintln!(
            "cloud: {} points, mesh: {} faces, mosaic: {}x{}",
            cloud.len(),
            mesh.triangles.len(),
            mosaic.image.width,
            mosaic.image.height
        );
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, verbose: bool) -> Result<(), Error> {
    let (cal, frames) = load_sequence(&args.input)?;
    let trajectory: TrajectoryFile = read_json(&args.trajectory)?;
    let gt: GroundTruthFile = read_json(&args.input.join("ground_truth.json"))?;
    std::fs::create_dir_all(&args.out)?;

    if gt.pair_transforms.len() != trajectory.pairwise.len() {
        return Err(Error::InvalidInput(format!(
            "ground truth has {} pairs, trajectory has {}",
            gt.pair_transforms.len(),
            trajectory.pairwise.len()
        )));
    }
    let truth: Vec<RigidTransform3D> =
        gt.pair_transforms.iter().map(TransformRecord::to_transform).collect();
    let estimates: Vec<RigidTransform3D> =
        trajectory.pairwise.iter().map(TransformRecord::to_transform).collect();
    // Pair k is evaluated on the laser points of its second frame.
    let pair_points: Vec<Vec<Point3D>> = frames[1..]
        .iter()
        .map(|f| f.observations.iter().map(|o| o.point).collect())
        .collect();

    let report = sequence_report(&truth, &estimates, &cal.intrinsics, &pair_points)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_report_csv(&args.out.join("report.csv"), &report)?;
    if verbose {
        eprintln!(
            "3D error: {:.4} +/- {:.4} mm; 2D error: {:.3} +/- {:.3} px",
            report.error_3d_mm.mean,
            report.error_3d_mm.std,
            report.error_2d_px.mean,
            report.error_2d_px.std
        );
    }
    Ok(())
}

fn cmd_run_all(args: &RunAllArgs, verbose: bool) -> Result<(), Error> {
    let data = args.out.join("data");
    let results = args.out.join("results");
    cmd_simulate(
        &SimulateArgs { config: args.config.clone(), out: data.clone(), seed: args.seed },
        verbose,
    )?;
    cmd_register(&RegisterArgs { input: data.clone(), out: results.clone() }, verbose)?;
    let trajectory = results.join("trajectory.json");
    cmd_mosaic(
        &MosaicArgs { input: data.clone(), trajectory: trajectory.clone(), out: results.clone() },
        verbose,
    )?;
    cmd_evaluate(&EvaluateArgs { input: data, trajectory, out: results }, verbose)?;
    Ok(())
}

/// Errors caused by bad inputs/configuration exit with 2, processing
/// failures with 3.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::InvalidParams(_) | Error::Io(_) | Error::Json(_)
        | Error::Image(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()
        {
            eprintln!("error: cannot configure {workers} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.verbose),
        Command::Register(a) => cmd_register(a, cli.verbose),
        Command::Mosaic(a) => cmd_mosaic(a, cli.verbose),
        Command::Evaluate(a) => cmd_evaluate(a, cli.verbose),
        Command::RunAll(a) => cmd_run_all(a, cli.verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
