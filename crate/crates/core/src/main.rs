use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use symstereo::fusion::{depths_to_cloud, filter_consistent, DEFAULT_MIN_VIEWS};
use symstereo::geometry::DepthMap;
use symstereo::io::{
    read_depth_dir, read_ply, write_bundle, write_depth_dir, write_mask, write_ply, PlyEncoding,
    ProblemBundle, RunConfig, SceneConfig,
};
use symstereo::metrics::{cloud_metrics, depth_metrics_pooled};
use symstereo::scenegen::render_scene;
use symstereo::solver::{history_csv, init_depths_with, run_pipeline};
use symstereo::{Error, Result};

/// Symmetric multi-view stereo: every view gets a depth map.
#[derive(Debug, Parser)]
#[command(name = "symstereo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene description into a bundle with ground truth.
    Synth { scene: PathBuf, out_dir: PathBuf },
    /// Plane-sweep initialization only.
    Sweep {
        bundle: PathBuf,
        out_dir: PathBuf,
        #[arg(long = "hyp-count")]
        hyp_count: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Initialization followed by joint refinement.
    Optimize {
        bundle: PathBuf,
        out_dir: PathBuf,
        /// Run config overriding the bundle's `run.toml`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fuse per-view depth maps into a PLY point cloud.
    Fuse {
        depth_dir: PathBuf,
        bundle: PathBuf,
        out: PathBuf,
        /// Agreement threshold in depth units; defaults to one hypothesis spacing.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "min-views", default_value_t = DEFAULT_MIN_VIEWS)]
        min_views: usize,
        /// Write binary little-endian instead of ASCII.
        #[arg(long)]
        binary: bool,
    },
    /// Depth errors of matching `.pfm` files, pooled over all views.
    EvalDepth {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Accuracy and completeness of a cloud against a reference cloud.
    EvalCloud {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long)]
        csv: bool,
    },
}

enum Outcome {
    Done,
    Diverged,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => {
            eprintln!("error: optimization diverged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_bundle(path: &Path, config: Option<&Path>) -> Result<ProblemBundle> {
    let mut bundle = ProblemBundle::load(path)?;
    if let Some(c) = config {
        bundle.run = bundle.run.clone().overlaid(&RunConfig::read(c)?);
    }
    Ok(bundle)
}

/// Depth maps from `dir` matched to `names`; every name must be present.
fn depths_for(dir: &Path, names: &[String]) -> Result<Vec<DepthMap>> {
    let mut found = read_depth_dir(dir)?;
    names
        .iter()
        .map(|n| {
            let k = found.iter().position(|(m, _)| m == n).ok_or_else(|| Error::Io {
                path: dir.join(format!("{n}.pfm")),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            })?;
            Ok(found.swap_remove(k).1)
        })
        .collect()
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth { scene, out_dir } => {
            let cfg = SceneConfig::read(&scene)?;
            let rendered = render_scene(&cfg.to_spec()?)?;
            let run = RunConfig {
                hyp_count: cfg.hyp_count,
                ..RunConfig::default()
            };
            write_bundle(
                &out_dir,
                &rendered.views,
                (cfg.depth_min, cfg.depth_interval),
                Some(&rendered.gt_depths),
                &run,
            )?;
            println!("wrote {} views to {}", rendered.views.len(), out_dir.display());
        }
        Command::Sweep {
            bundle,
            out_dir,
            hyp_count,
            temperature,
        } => {
            let b = load_bundle(&bundle, None)?;
            let run = b.run.clone().overlaid(&RunConfig {
                hyp_count,
                temperature,
                ..RunConfig::default()
            });
            let config = run.solver_config(b.hypotheses(run.hyp_count())?)?;
            let depths = init_depths_with(
                &b.views,
                &config.hypotheses,
                config.temperature,
                config.feature_mode,
                config.smooth_radius,
            )?;
            write_depth_dir(out_dir.join("depths"), &b.names, &depths)?;
            println!("wrote {} depth maps to {}", depths.len(), out_dir.display());
        }
        Command::Optimize {
            bundle,
            out_dir,
            config,
        } => {
            let b = load_bundle(&bundle, config.as_deref())?;
            let solver = b.run.solver_config(b.hypotheses(b.run.hyp_count())?)?;
            let state = run_pipeline(&b.views, &solver)?;
            write_depth_dir(out_dir.join("depths"), &b.names, &state.depths)?;
            let masks = out_dir.join("masks");
            create_dir(&masks)?;
            for (&(i, j), m) in &state.masks {
                let name = format!("{}_{}.pgm", b.names[i], b.names[j]);
                write_mask(masks.join(name), &m.valid)?;
            }
            write_text(&out_dir.join("loss.csv"), &history_csv(&state.history))?;
            if !state.diverged {
                write_text(&out_dir.join("breakdown.txt"), &state.breakdown()?.report())?;
            }
            println!(
                "{} outer iterations, final loss {:e}",
                state.iteration,
                state.history.last().map_or(f64::NAN, |h| h.total)
            );
            if state.diverged {
                return Ok(Outcome::Diverged);
            }
        }
        Command::Fuse {
            depth_dir,
            bundle,
            out,
            tau,
            min_views,
            binary,
        } => {
            let b = load_bundle(&bundle, None)?;
            let depths = depths_for(&depth_dir, &b.names)?;
            let tau = match tau {
                Some(t) => t,
                None => b.hypotheses(b.run.hyp_count())?.spacing(),
            };
            let kept = filter_consistent(&depths, &b.views, tau, min_views)?;
            let cloud = depths_to_cloud(&kept, &b.views)?;
            let encoding = if binary {
                PlyEncoding::BinaryLittleEndian
            } else {
                PlyEncoding::Ascii
            };
            write_ply(&out, &cloud, encoding)?;
            println!("wrote {} points to {}", cloud.len(), out.display());
        }
        Command::EvalDepth {
            pred_dir,
            gt_dir,
            csv,
        } => {
            let gt = read_depth_dir(&gt_dir)?;
            if gt.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no .pfm files in {}",
                    gt_dir.display()
                )));
            }
            let names: Vec<String> = gt.iter().map(|(n, _)| n.clone()).collect();
            let pred = depths_for(&pred_dir, &names)?;
            let gt: Vec<DepthMap> = gt.into_iter().map(|(_, d)| d).collect();
            let m = depth_metrics_pooled(&pred, &gt)?;
            print!("{}", if csv { m.csv() } else { m.report() });
        }
        Command::EvalCloud {
            pred,
            gt,
            threshold,
            csv,
        } => {
            let m = cloud_metrics(&read_ply(&pred)?, &read_ply(&gt)?, threshold)?;
            print!("{}", if csv { m.csv() } else { m.report() });
        }
    }
    Ok(Outcome::Done)
}
