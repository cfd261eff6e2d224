//! The `stgcn-refine` command line. [`run`] returns the process exit code:
//! 0 on success, 1 for usage errors, 2 for data and validation errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::io::sequence_dir;
use crate::data::{generate_scene, quantize, read_dataset, split_by_subject, write_dataset, write_sequence, SceneSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, refine_sequence, render_report, EvalOptions, ReportFormat};
use crate::graph::StGraph;
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta, RefinerModel};
use crate::skeleton::{default_topology, SkeletonTopology};
use crate::train::{train, write_metrics_csv, TrainConfig};

/// Seed used when neither a flag nor a config file sets one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "stgcn-refine", version, about = "Occlusion-aware ST-GCN refinement of 3D pose sequences")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct TopologyArg {
    /// Skeleton file (`index name parent mirror` lines); default is the
    /// built-in 17-joint skeleton.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic occluded dataset from a scene spec.
    Generate {
        /// Scene file; the built-in desk scene when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Train a refiner; writes `model.ckpt`, `metrics.csv` and `config.txt`.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training config (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Window length T.
        #[arg(long)]
        frames: Option<usize>,
        /// Extra `key=value` overrides, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Initialize from this checkpoint instead of a fresh model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        topology: TopologyArg,
    },
    /// Refine stored sequences with a trained model.
    Refine {
        #[arg(long)]
        model: PathBuf,
        /// Dataset root or a single sequence directory.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        topology: TopologyArg,
    },
    /// Per-action MPJPE of a model on the held-out subjects.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Training config giving the corruption model and held-out subjects.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corruption seed override.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "text")]
        format: String,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate every subject, not only the held-out ones.
        #[arg(long)]
        all: bool,
        /// Feed ground truth instead of corrupted poses.
        #[arg(long)]
        clean: bool,
        #[command(flatten)]
        topology: TopologyArg,
    },
    /// Build the space-time graph and print its class matrices.
    Graphcheck {
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        /// Print every matrix, not only the summaries.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        topology: TopologyArg,
    },
}

fn load_topology(arg: &TopologyArg) -> Result<SkeletonTopology> {
    match &arg.topology {
        Some(p) => SkeletonTopology::load(p),
        None => Ok(default_topology()),
    }
}

fn log_config(what: &str, pairs: &[(String, String)]) {
    for (k, v) in pairs {
        log::info!("{what}: {k} = {v}");
    }
}

fn load_train_config(path: Option<&Path>, seed: Option<u64>, frames: Option<usize>, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        seed: DEFAULT_SEED,
        ..TrainConfig::default()
    };
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cfg.apply_text(&text, p)?;
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = frames {
        cfg.model.frames = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed, frames } => {
            let mut scene = match &config {
                Some(p) => SceneSpec::load(p)?,
                None => SceneSpec::desk(100, DEFAULT_SEED),
            };
            if let Some(s) = seed {
                scene.seed = s;
            }
            if let Some(f) = frames {
                scene.frames = f;
            }
            scene.validate()?;
            for line in scene.to_text().lines() {
                log::info!("scene: {line}");
            }
            let seqs = generate_scene(&scene, &default_topology())?;
            write_dataset(&seqs, &out)?;
            write_text(&out.join("scene.txt"), &scene.to_text())?;
            log::info!("wrote {} sequences to {}", seqs.len(), out.display());
        }
        Command::Train {
            dataset,
            config,
            out,
            seed,
            frames,
            overrides,
            model,
            topology,
        } => {
            let topo = load_topology(&topology)?;
            let cfg = load_train_config(config.as_deref(), seed, frames, &overrides)?;
            log_config("train", &cfg.to_pairs());
            let seqs = read_dataset(&dataset)?;
            let (val, train_set) = split_by_subject(&seqs, &cfg.holdout);
            let mut m = match &model {
                Some(p) => load_checkpoint(p, &topo)?.0,
                None => RefinerModel::init(cfg.model.clone(), &topo, cfg.seed)?,
            };
            let metrics = train(&mut m, &train_set, &val, &cfg, &topo)?;
            create_dir(&out)?;
            let meta = CheckpointMeta {
                epoch: metrics.len(),
                extra: cfg.to_pairs().into_iter().map(|(k, v)| (format!("train.{k}"), v)).collect(),
            };
            save_checkpoint(&m, &meta, &out.join("model.ckpt"))?;
            write_metrics_csv(&metrics, &out.join("metrics.csv"))?;
            write_text(&out.join("config.txt"), &cfg.to_text())?;
            log::info!("wrote {}", out.display());
        }
        Command::Refine {
            model,
            input,
            out,
            topology,
        } => {
            let topo = load_topology(&topology)?;
            let (m, _) = load_checkpoint(&model, &topo)?;
            log_config("model", &m.config().to_pairs());
            let single = input.join(crate::data::io::MANIFEST).is_file();
            for mut seq in read_dataset(&input)? {
                let refined = refine_sequence(&m, &seq, &seq.joints_3d, topo.root())?;
                seq.joints_3d = refined.into_iter().map(quantize).collect();
                let dir = if single { out.clone() } else { sequence_dir(&out, &seq) };
                write_sequence(&seq, &dir)?;
            }
            log::info!("wrote {}", out.display());
        }
        Command::Eval {
            dataset,
            model,
            config,
            seed,
            format,
            out,
            all,
            clean,
            topology,
        } => {
            let format: ReportFormat = format.parse()?;
            let topo = load_topology(&topology)?;
            let mut cfg = load_train_config(config.as_deref(), None, None, &[])?;
            if let Some(s) = seed {
                cfg.corruption.seed = s;
            }
            let (m, _) = load_checkpoint(&model, &topo)?;
            let seqs = read_dataset(&dataset)?;
            let (held, _) = split_by_subject(&seqs, &cfg.holdout);
            let chosen: Vec<_> = if all { seqs.iter().collect() } else { held };
            if chosen.is_empty() {
                return Err(Error::EmptySplit(format!("no sequences of subjects {:?}", cfg.holdout)));
            }
            let mut echo = m.config().to_pairs();
            echo.push(("corruption".into(), if clean { "none".into() } else { format!("{:?}", cfg.corruption) }));
            log_config("eval", &echo);
            let options = EvalOptions {
                corruption: (!clean).then_some(cfg.corruption),
                config: echo,
            };
            let ev = evaluate(&m, &chosen, topo.root(), &options)?;
            let doc = render_report(&ev.report, format);
            match &out {
                Some(p) => write_text(p, &doc)?,
                None => print!("{doc}"),
            }
        }
        Command::Graphcheck {
            joints,
            frames,
            full,
            topology,
        } => {
            let topo = load_topology(&topology)?;
            if let Some(j) = joints {
                if j != topo.joint_count() {
                    return Err(Error::Config(format!(
                        "--joints {j} but the skeleton has {} joints (pass --topology for other skeletons)",
                        topo.joint_count()
                    )));
                }
            }
            let g = StGraph::build(&topo, frames)?;
            print!("{}", g.dump(full));
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run. Never panics on bad
/// input; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}
