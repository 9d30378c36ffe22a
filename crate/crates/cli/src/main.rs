use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasemap::pipeline::{
    embed_stage, files, graph_stage, report_stage, run_pipeline, surrogate_stage, sweep_stage, synth_stage,
    OutputLock, PipelineConfig, PipelineError, Sink,
};

/// Phase-structure recovery and phase-wise additive explanations for
/// continuous-control trajectories.
#[derive(Debug, Parser)]
#[command(name = "phasemap", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset, its schema and the ground-truth phases.
    Synth,
    /// Embed the states of a trajectory CSV into 2D.
    Embed {
        /// Trajectory CSV [default: config input, else <out>/dataset.csv].
        #[arg(long)]
        input: Option<PathBuf>,
        /// Schema file [default: <out>/schema.txt if present, else config schema].
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Entropy sweep over the Ward dendrogram; writes the curve and the assignment at K*.
    Sweep {
        /// Embedding CSV [default: <out>/embedding.csv].
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Transition matrix, dominant-transition graph (DOT and JSON) and cycles.
    Graph {
        /// Assignment CSV [default: <out>/assignment.csv].
        #[arg(long)]
        assignment: Option<PathBuf>,
        /// Cumulative probability mass marking dominant transitions.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Per-phase surrogates, heatmaps and branch analyses.
    Surrogate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        /// Graph JSON used to find branching phases [default: <out>/graph.json if present].
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Summary text and manifest over the files in the output directory.
    Report,
    /// Every stage in order.
    Run,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phasemap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn or_file(flag: Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    flag.unwrap_or_else(|| out.join(name))
}

fn dataset_and_schema(
    cfg: &PipelineConfig,
    out: &Path,
    input: Option<PathBuf>,
    schema: Option<PathBuf>,
) -> (PathBuf, Option<PathBuf>) {
    let input = input
        .or_else(|| cfg.input.clone())
        .unwrap_or_else(|| out.join(files::DATASET));
    let bundled = out.join(files::SCHEMA);
    let schema = schema
        .or_else(|| bundled.exists().then_some(bundled))
        .or_else(|| cfg.schema.clone());
    (input, schema)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Sweep { k_min, k_max, .. } => {
            cfg.k_min = k_min.unwrap_or(cfg.k_min);
            cfg.k_max = k_max.unwrap_or(cfg.k_max);
        }
        Command::Graph {
            threshold: Some(t), ..
        } => cfg.threshold = *t,
        _ => {}
    }
    if let Command::Run = cli.command {
        let bundle = run_pipeline(&cfg)?;
        print!("{}", bundle.summary);
        return Ok(());
    }

    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| PipelineError::Validation("--out (or `out` in the config) is required".into()))?;
    let _lock = OutputLock::acquire(&out)?;
    let mut sink = Sink::new(&out);
    match cli.command {
        Command::Synth => synth_stage(&cfg, &mut sink)?,
        Command::Embed { input, schema } => {
            let (input, schema) = dataset_and_schema(&cfg, &out, input, schema);
            embed_stage(&cfg, &input, schema.as_deref(), &mut sink)?;
        }
        Command::Sweep { embedding, .. } => {
            let curve = sweep_stage(&cfg, &or_file(embedding, &out, files::EMBEDDING), &mut sink)?;
            println!("K* = {}", curve.k_star);
        }
        Command::Graph { assignment, .. } => {
            graph_stage(&cfg, &or_file(assignment, &out, files::ASSIGNMENT), &mut sink)?;
        }
        Command::Surrogate {
            input,
            schema,
            assignment,
            graph,
        } => {
            let (input, schema) = dataset_and_schema(&cfg, &out, input, schema);
            let bundled = out.join(files::GRAPH_JSON);
            let graph = graph.or_else(|| bundled.exists().then_some(bundled));
            surrogate_stage(
                &cfg,
                &input,
                schema.as_deref(),
                &or_file(assignment, &out, files::ASSIGNMENT),
                graph.as_deref(),
                &mut sink,
            )?;
        }
        Command::Report => print!("{}", report_stage(&cfg, &mut sink)?.summary),
        Command::Run => unreachable!("handled above"),
    }
    Ok(())
}
