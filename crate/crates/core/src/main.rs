use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use posefuse::bayes::AcquisitionSpec;
use posefuse::ingest::service::{DEFAULT_PORT, DEFAULT_QUEUE, PORT_ENV};
use posefuse::ingest::sim::{load_scene, simulate_scene, write_scene, FrameTruth, SceneSpec};
use posefuse::pipeline::{
    evaluate_frames, run_scene, serve, tune_pipeline, write_overlays, write_run, PipelineConfig,
    ServeOptions, METRICS_FILE,
};
use posefuse::pose::{parse_frame_record, LimbTopology};
use posefuse::Error;

#[derive(Parser)]
#[command(name = "posefuse", version, about = "Multi-person pose estimation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

impl Common {
    fn load(&self) -> posefuse::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene and write its manifest and streams.
    Simulate {
        /// Scene parameters (JSON); flags below override individual fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        width: Option<u16>,
        #[arg(long)]
        height: Option<u16>,
        #[arg(long)]
        motion: Option<f64>,
        /// Minimum pixel gap between persons.
        #[arg(long, conflicts_with = "overlap")]
        margin: Option<f64>,
        /// Let persons overlap.
        #[arg(long)]
        overlap: bool,
    },
    /// Decode a recorded scene into skeleton and action streams.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write one PPM overlay per frame.
        #[arg(long)]
        overlay: bool,
    },
    /// Tune decoder parameters for mAP on a recorded scene.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides tuner.budget.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Score a skeleton stream against a scene's ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Accept live sensor streams over TCP and decode them as they arrive.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Exit after the first producer finishes.
        #[arg(long)]
        once: bool,
        #[arg(long, default_value_t = DEFAULT_QUEUE)]
        queue: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Stream { .. } | Error::Wire(_) | Error::Unsorted(_) => 3,
        Error::Evaluation(_) => 4,
        _ => 1,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> posefuse::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> posefuse::Result<()> {
    match cmd {
        Command::Simulate {
            config,
            seed,
            output,
            persons,
            frames,
            width,
            height,
            motion,
            margin,
            overlap,
        } => {
            let mut spec: SceneSpec = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => SceneSpec::default(),
            };
            spec.persons = persons.unwrap_or(spec.persons);
            spec.frames = frames.unwrap_or(spec.frames);
            spec.width = width.unwrap_or(spec.width);
            spec.height = height.unwrap_or(spec.height);
            spec.motion = motion.unwrap_or(spec.motion);
            if overlap {
                spec.margin = None;
            } else if margin.is_some() {
                spec.margin = margin;
            }
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            let scene = simulate_scene(&spec, seed)?;
            let manifest = write_scene(&output, &scene)?;
            println!("{}", manifest.display());
        }
        Command::Run { common, manifest, overlay } => {
            let cfg = common.load()?;
            let scene = load_scene(&manifest)?;
            let run = run_scene(&cfg, &scene)?;
            let topo = LimbTopology::standard();
            write_run(&common.output, &run, &topo)?;
            if overlay {
                write_overlays(common.output.join("overlays"), &run, &scene.frames, &topo)?;
            }
            let failed = run.frames.iter().filter(|f| f.error.is_some()).count();
            eprintln!("{} frames, {failed} failed clips", run.frames.len());
            if let Some(m) = &run.metrics {
                eprintln!("mAP {:?} AR {:?}", m.map, m.ar);
            }
        }
        Command::Tune { common, manifest, budget } => {
            let cfg = common.load()?;
            let scene = load_scene(&manifest)?;
            let acq = AcquisitionSpec {
                seed: cfg.tuner.acquisition.seed.wrapping_add(cfg.seed),
                ..cfg.tuner.acquisition
            };
            let report = tune_pipeline(&cfg, &scene, budget.unwrap_or(cfg.tuner.budget), acq)?;
            fs::create_dir_all(&common.output)?;
            fs::write(common.output.join("history.csv"), &report.history_csv)?;
            fs::write(common.output.join("best_config.json"), report.best.to_json() + "\n")?;
            eprintln!(
                "best mAP {:?} after {} evaluations (stopped on {})",
                report.outcome.f_star,
                report.outcome.history.len(),
                report.outcome.stop_reason
            );
        }
        Command::Evaluate { common, manifest, predictions } => {
            let cfg = common.load()?;
            let scene = load_scene(&manifest)?;
            let topo = LimbTopology::standard();
            let text = fs::read_to_string(&predictions)?;
            let mut pred = vec![Vec::new(); scene.truth.len()];
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let (frame, skeletons) = parse_frame_record(line, &topo)
                    .map_err(|e| Error::Evaluation(format!("predictions line {}: {e}", n + 1)))?;
                let slot = pred.get_mut(frame).ok_or_else(|| {
                    Error::Evaluation(format!("prediction for frame {frame} beyond the scene's {} frames", scene.truth.len()))
                })?;
                *slot = skeletons;
            }
            let truth: Vec<_> = scene.truth.iter().map(FrameTruth::skeletons).collect();
            let report = evaluate_frames(&pred, &truth, &cfg.metrics)?;
            fs::create_dir_all(&common.output)?;
            write_json(&common.output.join(METRICS_FILE), &report)?;
            eprintln!("mAP {:?} AR {:?}", report.map, report.ar);
        }
        Command::Serve { common, port, host, once, queue } => {
            let cfg = common.load()?;
            let opts = ServeOptions { host, port, once, queue_capacity: queue };
            let summary = serve(&cfg, &opts, &common.output, |addr| eprintln!("listening on {addr}"))?;
            eprintln!("{summary:?}");
        }
    }
    Ok(())
}
