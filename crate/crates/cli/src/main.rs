//! Command-line surface for the localization pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use enforcenet_core::cloud::{generate_scene, lidar_subsample, load_cloud, save_cloud};
use enforcenet_core::config::Config;
use enforcenet_core::dataset::{load_dataset, save_dataset, Split};
use enforcenet_core::gradcheck::model_gradcheck;
use enforcenet_core::localize::{
    evaluate, localize, DEFAULT_LOCALIZE_MAX_ITERS, DEFAULT_LOCALIZE_TOL,
};
use enforcenet_core::model::EnforceModel;
use enforcenet_core::pgm::load_pgm;
use enforcenet_core::pipeline::{build_dataset, scan_pose};
use enforcenet_core::similarity::grid_search_register;
use enforcenet_core::train::{logs_to_csv, train};
use enforcenet_core::{CoreError, DeltaPose, Pose};

#[derive(Parser)]
#[command(name = "enforcenet", about = "Camera localization in a sparse LiDAR map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scene's dense cloud and its LiDAR scan.
    GenerateScene {
        /// Dense cloud output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional sparse (scanned) cloud output path.
        #[arg(long)]
        sparse_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render frames, augment with pose perturbations, split, and persist.
    RenderDataset {
        /// Dense cloud path (from generate-scene).
        #[arg(long)]
        cloud: PathBuf,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on a rendered dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        model_out: PathBuf,
        /// Per-epoch loss log CSV path.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Single-shot prediction errors over the test split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Error table CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterative pose refinement for one intensity image.
    Localize {
        /// Intensity PGM; its header pose is the default initial guess.
        #[arg(long)]
        intensity: PathBuf,
        /// Sparse map cloud path.
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Initial guess as "tx ty tz roll pitch yaw flag".
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = DEFAULT_LOCALIZE_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = DEFAULT_LOCALIZE_TOL)]
        tol: f64,
        /// Iteration trace CSV output path.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Classical NMI grid-search registration around the image's header pose.
    Baseline {
        #[arg(long)]
        intensity: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        /// Scores CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid steps per axis (x, y, yaw).
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of the network + loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>) -> enforcenet_core::Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::empty()),
    }
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> enforcenet_core::Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(CoreError::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn named_io<T>(what: &str, path: &Path, r: enforcenet_core::Result<T>) -> enforcenet_core::Result<T> {
    r.map_err(|e| match e {
        CoreError::Io(io) => CoreError::Config(format!("{what}: {}: {io}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> enforcenet_core::Result<()> {
    match cli.command {
        Command::GenerateScene {
            out,
            sparse_out,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let scene_cfg = cfg.scene_config(seed)?;
            let dense = generate_scene(&scene_cfg)?;
            save_cloud(&dense, &out)?;
            eprintln!("dense cloud: {} points -> {}", dense.len(), out.display());
            if let Some(sp) = sparse_out {
                let azimuth = cfg.get_f64("scene.azimuth_step_deg", 1.0)?.to_radians();
                let sparse = lidar_subsample(
                    &dense,
                    &scan_pose(&scene_cfg),
                    scene_cfg.beam_count,
                    azimuth,
                );
                save_cloud(&sparse, &sp)?;
                eprintln!("sparse cloud: {} points -> {}", sparse.len(), sp.display());
            }
            Ok(())
        }
        Command::RenderDataset {
            cloud,
            out,
            frames,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let dense = named_io("cloud", &cloud, load_cloud(&cloud))?;
            // The pipeline regenerates the scene deterministically from the
            // config and seed; verify the provided cloud matches so labels
            // stay consistent with the map file the user will localize in.
            let scene_cfg = cfg.scene_config(seed)?;
            let regen = generate_scene(&scene_cfg)?;
            if regen.len() != dense.len() {
                return Err(CoreError::Config(format!(
                    "cloud: {}: {} points but config/seed regenerate {}; pass the \
                     matching --seed/--config used for generate-scene",
                    cloud.display(),
                    dense.len(),
                    regen.len()
                )));
            }
            let built = build_dataset(&cfg, seed, frames, (0.6, 0.3, 0.1))?;
            save_dataset(
                &out,
                &[
                    (&built.train, Split::Train),
                    (&built.val, Split::Val),
                    (&built.test, Split::Test),
                ],
                &built.frame_poses,
            )?;
            eprintln!(
                "dataset: {} train / {} val / {} test ({} renders skipped) -> {}",
                built.train.len(),
                built.val.len(),
                built.test.len(),
                built.skipped_renders,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            dataset,
            model_out,
            log,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let train_cfg = cfg.train_config(seed)?;
            let (train_set, val_set, _) = named_io("dataset", &dataset, load_dataset(&dataset))?;
            let mut model = EnforceModel::new(seed);
            let logs = train(&mut model, &train_set, &val_set, &train_cfg)?;
            model.save(&model_out)?;
            if let Some(p) = log {
                std::fs::write(&p, logs_to_csv(&logs))?;
            }
            if let Some(last) = logs.last() {
                eprintln!(
                    "trained {} epochs: train pose loss {:.6}, val pose loss {:.6}",
                    last.epoch, last.train_pose, last.val_pose
                );
            }
            Ok(())
        }
        Command::Evaluate {
            dataset,
            model,
            out,
        } => {
            let (_, _, test_set) = named_io("dataset", &dataset, load_dataset(&dataset))?;
            if test_set.is_empty() {
                return Err(CoreError::TooFewFrames("test"));
            }
            let mut m = named_io("model", &model, EnforceModel::load(&model))?;
            let table = evaluate(&mut m, &test_set)?;
            write_or_print(&out, &table.to_csv())
        }
        Command::Localize {
            intensity,
            cloud,
            model,
            init,
            max_iters,
            tol,
            trace,
            config,
        } => {
            let cfg = load_config(&config)?;
            let (img, header_pose) = named_io("intensity", &intensity, load_pgm(&intensity))?;
            let map = named_io("cloud", &cloud, load_cloud(&cloud))?;
            let mut m = named_io("model", &model, EnforceModel::load(&model))?;
            let init_pose = match init {
                Some(line) => Pose::from_line(&line)?,
                None => header_pose,
            };
            let k = cfg.intrinsics()?;
            let g = cfg.clip_planes()?;
            let inpaint_iters = cfg.get_usize("render.inpaint_iters", 3)?;
            let r = localize(
                &img, &map, &init_pose, &mut m, &k, &g, max_iters, tol, inpaint_iters,
            )?;
            println!("{}", r.pose.to_line());
            println!("confidence {}", r.confidence);
            if let Some(p) = trace {
                let mut csv = String::from("iteration,delta_norm,state_value\n");
                for (i, (d, v)) in r.trace.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", i + 1, d, v));
                }
                std::fs::write(&p, csv)?;
            }
            if r.aborted {
                eprintln!("warning: a guess rendered no map points; refinement stopped early");
            }
            Ok(())
        }
        Command::Baseline {
            intensity,
            cloud,
            out,
            steps,
            config,
        } => {
            let cfg = load_config(&config)?;
            let (img, center) = named_io("intensity", &intensity, load_pgm(&intensity))?;
            let map = named_io("cloud", &cloud, load_cloud(&cloud))?;
            let k = cfg.intrinsics()?;
            let g = cfg.clip_planes()?;
            let bounds = cfg.perturb_bounds()?;
            let bins = cfg.get_usize("baseline.bins", 32)?;
            let grid = baseline_grid(steps, bounds.max_translation, bounds.max_rotation);
            let result = grid_search_register(&img, &map, &center, &grid, &k, &g, bins);
            let mut csv = String::from("dx,dy,dz,droll,dpitch,dyaw,score\n");
            for (d, s) in grid.iter().zip(&result.scores) {
                let a = d.as_array();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    a[0], a[1], a[2], a[3], a[4], a[5], s
                ));
            }
            write_or_print(&out, &csv)?;
            let b = result.best.as_array();
            eprintln!(
                "best offset: dx {} dy {} dyaw {} (score {})",
                b[0], b[1], b[5], result.scores[result.best_index]
            );
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let err = model_gradcheck(seed, 5)?;
            println!("max relative gradient error {err:e}");
            if err >= 1e-3 {
                return Err(CoreError::NonFinite(format!(
                    "gradient check failed: max relative error {err:e} >= 1e-3"
                )));
            }
            Ok(())
        }
    }
}

/// Uniform grid over x/y translation and yaw, centered on zero offset.
fn baseline_grid(steps: usize, max_t: f64, max_r: f64) -> Vec<DeltaPose> {
    let steps = steps.max(1);
    let axis = |bound: f64| -> Vec<f64> {
        if steps == 1 {
            vec![0.0]
        } else {
            (0..steps)
                .map(|i| -bound + 2.0 * bound * i as f64 / (steps - 1) as f64)
                .collect()
        }
    };
    let mut grid = Vec::new();
    for &dx in &axis(max_t) {
        for &dy in &axis(max_t) {
            for &dyaw in &axis(max_r) {
                grid.push(DeltaPose::from_array([dx, dy, 0.0, 0.0, 0.0, dyaw]));
            }
        }
    }
    grid
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CoreError::NonFinite(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
