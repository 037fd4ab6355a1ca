use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scene_forge::perturb::{perturb_frame, PosePerturbation};
use scene_forge::pipeline::{
    build_databases, ingest_kitti, measure_throughput, plan_epoch, produce_frame, produce_sharded, rebuild_freespace,
    sparse_selection, validate, worker_count, write_frame, BuildTargets, Databases, EpochPlan, PipelineConfig, Stage,
    StreamFrame,
};
use scene_forge::synth::{write_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "scene-forge", version, about = "Decompose driving scenes and stream recomposed training frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            config.seed = Some(s);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct FrameArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "full", value_parser = parse_stage)]
    stage: Stage,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// Produce only the first N frames of the epoch.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a small synthetic dataset in the KITTI layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 384)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 6)]
        scenes: usize,
        #[arg(long, default_value_t = 3)]
        frames_per_clip: usize,
        /// Add a car beyond the depth limit to the first clip.
        #[arg(long)]
        far_object: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decompose labelled objects into the object database.
    BuildObjectdb(Common),
    /// Build raw and empty scene variants with their freespace maps.
    BuildScenedb(Common),
    /// Recompute freespace maps of an existing scene database.
    BuildFreespace(Common),
    /// Pick one frame per track for sparse supervision and write the selection as JSON.
    SelectSparse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose frames of an epoch without pose perturbation.
    Recompose(FrameArgs),
    /// Compose frames and apply a pose perturbation (sampled unless given).
    Perturb {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long, allow_hyphen_values = true)]
        pitch_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        roll_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        eps_z: Option<f64>,
    },
    /// Produce a full epoch with a pool of workers.
    Stream {
        #[command(flatten)]
        frames: FrameArgs,
        /// Defaults to SCENE_FORGE_THREADS or the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check pipeline invariants on seeded frames; exits non-zero on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "full", value_parser = parse_stage)]
        stage: Stage,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time recomposition and perturbation; prints a JSON report.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "full", value_parser = parse_stage)]
        stage: Stage,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).map_err(|e| e.to_string())
}

fn emit_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn build(common: &Common, targets: BuildTargets) -> Result<()> {
    let config = common.load()?;
    let inventory = ingest_kitti(&config.dataset_root, config.split.as_deref())?;
    let report = inventory.missing();
    if !report.incomplete.is_empty() {
        log::warn!("{} scenes have missing inputs", report.incomplete.len());
    }
    let m = build_databases(&inventory, &config, targets)?;
    for (reason, n) in &m.rejection_counts {
        log::info!("  rejected {n}: {reason}");
    }
    Ok(())
}

fn truncated_plan(dbs: &Databases, config: &PipelineConfig, args: &FrameArgs) -> Result<EpochPlan> {
    let mut plan = plan_epoch(dbs, config, args.stage, args.epoch)?;
    if let Some(n) = args.frames {
        plan.frames.truncate(n);
    }
    Ok(plan)
}

fn produce_each(
    args: &FrameArgs,
    perturb: bool,
    mut post: impl FnMut(StreamFrame) -> Result<StreamFrame>,
) -> Result<()> {
    let mut config = args.common.load()?;
    config.perturb = perturb;
    let dbs = Databases::open(&config)?;
    let plan = truncated_plan(&dbs, &config, args)?;
    let pool = dbs.pool(args.stage);
    for spec in &plan.frames {
        let f = post(produce_frame(&dbs, &pool, &config, spec)?)?;
        write_frame(&args.out, &f)?;
    }
    log::info!("wrote {} frames to {}", plan.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            width,
            height,
            scenes,
            frames_per_clip,
            far_object,
            seed,
        } => {
            let config = SynthConfig {
                width,
                height,
                scenes,
                frames_per_clip,
                far_object,
                seed,
                ..Default::default()
            };
            let ids = write_dataset(&out, &config)?;
            log::info!("wrote {} scenes to {}", ids.len(), out.display());
        }
        Command::BuildObjectdb(c) => build(&c, BuildTargets { objects: true, scenes: false })?,
        Command::BuildScenedb(c) => build(&c, BuildTargets { objects: false, scenes: true })?,
        Command::BuildFreespace(c) => {
            let config = c.load()?;
            let inventory = ingest_kitti(&config.dataset_root, config.split.as_deref())?;
            let n = rebuild_freespace(&inventory, &config)?;
            log::info!("recomputed freespace for {n} scenes");
        }
        Command::SelectSparse { common, out } => {
            let config = common.load()?;
            let inventory = ingest_kitti(&config.dataset_root, config.split.as_deref())?;
            let selection = sparse_selection(&inventory, &config)?;
            let out = out.unwrap_or_else(|| config.output_root.join("sparse_selection.json"));
            emit_json(&selection, Some(&out))?;
            log::info!("selected {} frames", selection.picks.len());
        }
        Command::Recompose(args) => produce_each(&args, false, Ok)?,
        Command::Perturb {
            frames,
            pitch_deg,
            roll_deg,
            eps_z,
        } => {
            let config = frames.common.load()?;
            let fixed = match (pitch_deg, roll_deg, eps_z) {
                (None, None, None) => None,
                (p, r, e) => Some(PosePerturbation::from_degrees(
                    p.unwrap_or(0.0),
                    r.unwrap_or(0.0),
                    e.unwrap_or(0.0),
                )),
            };
            match fixed {
                None => produce_each(&frames, true, Ok)?,
                Some(pose) => {
                    let perturb = config.perturbation();
                    produce_each(&frames, false, |f| {
                        let frame = perturb_frame(&f.frame, &pose, &perturb)?;
                        Ok(StreamFrame { pose, frame, ..f })
                    })?
                }
            }
        }
        Command::Stream { frames: args, workers } => {
            let config = args.common.load()?;
            let dbs = Databases::open(&config)?;
            let plan = truncated_plan(&dbs, &config, &args)?;
            let workers = workers.unwrap_or_else(worker_count);
            if workers == 0 {
                bail!("--workers must be ≥ 1");
            }
            let out = args.out.clone();
            produce_sharded(&dbs, &config, &plan, workers, |f| write_frame(&out, &f))?;
            fs::write(out.join("plan.json"), serde_json::to_string_pretty(&plan)? + "\n")?;
            log::info!("wrote {} frames of epoch {} to {}", plan.len(), args.epoch, out.display());
        }
        Command::Validate {
            common,
            stage,
            frames,
            out,
        } => {
            let config = common.load()?;
            let dbs = Databases::open(&config)?;
            let report = validate(&dbs, &config, stage, frames)?;
            emit_json(&report, out.as_deref())?;
            if report.failures() > 0 {
                bail!("{} invariant checks failed", report.failures());
            }
        }
        Command::Stats {
            common,
            stage,
            frames,
            out,
        } => {
            let config = common.load()?;
            let dbs = Databases::open(&config)?;
            let report = measure_throughput(&dbs, &config, stage, frames)?;
            emit_json(&report, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
