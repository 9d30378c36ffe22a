//! End-to-end analysis behind a config file.
//!
//! Every stage reads its inputs from files and writes its outputs under one
//! directory with fixed names, so a stage can be re-run on its own and the
//! monolithic [`run_pipeline`] is just the stages chained together.

mod config;
mod report;
mod stages;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::clustering::ClusterError;
use crate::dataset::DatasetError;
use crate::embedding::EmbeddingError;
use crate::phase_graph::PhaseGraphError;
use crate::surrogate::SurrogateError;

pub use config::{PipelineConfig, SCHEMA_VERSION};
pub use report::{report_stage, ManifestEntry, ReportBundle};
pub use stages::{
    embed_stage, graph_stage, ingest_stage, load_dataset, surrogate_stage, sweep_stage, synth_stage,
};

pub mod files {
    pub const DATASET: &str = "dataset.csv";
    pub const SCHEMA: &str = "schema.txt";
    pub const TRUTH: &str = "truth.csv";
    pub const EMBEDDING: &str = "embedding.csv";
    pub const LOSS_TRACE: &str = "loss_trace.csv";
    pub const ENTROPY_CURVE: &str = "entropy_curve.csv";
    pub const ASSIGNMENT: &str = "assignment.csv";
    pub const TRANSITION_MATRIX: &str = "transition_matrix.csv";
    pub const GRAPH_DOT: &str = "graph.dot";
    pub const GRAPH_JSON: &str = "graph.json";
    pub const CYCLES: &str = "cycles.csv";
    pub const R2: &str = "r2.csv";
    pub const BRANCH_SUMMARY: &str = "branches/summary.csv";
    pub const SUMMARY: &str = "summary.txt";
    pub const MANIFEST: &str = "manifest.json";
    pub const LOCK: &str = ".phasemap.lock";
    pub const FAILED: &str = "failed";
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
        io: bool,
    },
    #[error("output directory {} is in use by another run (remove {} if stale)", .0.display(), files::LOCK)]
    Locked(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PipelineError {
    /// 1 validation, 2 stage failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Stage { io: false, .. } => 2,
            PipelineError::Stage { io: true, .. } | PipelineError::Locked(_) | PipelineError::Io(_) => 3,
        }
    }
}

/// Error raised inside a stage before the stage name is attached.
#[derive(Debug)]
pub(crate) struct Failure {
    message: String,
    io: bool,
}

impl Failure {
    pub(crate) fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            io: false,
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> PipelineError {
        PipelineError::Stage {
            stage,
            message: self.message,
            io: self.io,
        }
    }
}

macro_rules! failure_from {
    ($($t:ty => $io:expr),* $(,)?) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                #[allow(clippy::redundant_closure_call)]
                let io = ($io)(&e);
                Failure { message: e.to_string(), io }
            }
        }
    )*};
}

fn dataset_io(e: &DatasetError) -> bool {
    matches!(e, DatasetError::Io(_))
}

failure_from! {
    io::Error => |_: &io::Error| true,
    serde_json::Error => |_: &serde_json::Error| false,
    DatasetError => dataset_io,
    ClusterError => |e: &ClusterError| match e {
        ClusterError::Io(_) => true,
        ClusterError::Format(d) => dataset_io(d),
        _ => false,
    },
    EmbeddingError => |e: &EmbeddingError| match e {
        EmbeddingError::Io(_) => true,
        EmbeddingError::Format(d) => dataset_io(d),
        _ => false,
    },
    PhaseGraphError => |e: &PhaseGraphError| match e {
        PhaseGraphError::Io(_) => true,
        PhaseGraphError::Format(d) => dataset_io(d),
        _ => false,
    },
    SurrogateError => |e: &SurrogateError| matches!(e, SurrogateError::Io(_)),
}

/// Writes bundle files under `root` and remembers what it wrote.
#[derive(Debug)]
pub struct Sink {
    root: PathBuf,
    written: Vec<String>,
}

impl Sink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    /// Moves everything written so far under `failed/` next to an
    /// `error.txt` describing `error`.
    fn quarantine(&self, error: &PipelineError) -> io::Result<()> {
        let failed = self.root.join(files::FAILED);
        for rel in &self.written {
            let from = self.root.join(rel);
            if from.exists() {
                let to = failed.join(rel);
                fs::create_dir_all(to.parent().unwrap_or(&failed))?;
                fs::rename(&from, &to)?;
            }
        }
        fs::create_dir_all(&failed)?;
        fs::write(failed.join("error.txt"), format!("{error}\n"))
    }
}

/// Single-writer guard on an output directory.
#[derive(Debug)]
pub struct OutputLock(PathBuf);

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(files::LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use io::Write;
                writeln!(f, "{}", std::process::id())?;
                Ok(Self(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Runs every stage in order into `config.out`.
///
/// Invalid configurations fail before anything is written. When a stage
/// fails, the files written so far move to `failed/` along with
/// `failed/error.txt`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    config.validate()?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| PipelineError::Validation("an output directory is required".into()))?;
    let _lock = OutputLock::acquire(&out)?;
    let failed = out.join(files::FAILED);
    if failed.exists() {
        fs::remove_dir_all(&failed)?;
    }
    let mut sink = Sink::new(&out);
    let result = run_stages(config, &mut sink);
    if let Err(e @ PipelineError::Stage { .. }) = &result {
        sink.quarantine(e)?;
    }
    result
}

fn run_stages(config: &PipelineConfig, sink: &mut Sink) -> Result<ReportBundle, PipelineError> {
    let dataset = match &config.input {
        Some(input) => {
            ingest_stage(config, sink)?;
            input.clone()
        }
        None => {
            synth_stage(config, sink)?;
            sink.path(files::DATASET)
        }
    };
    let schema = sink.path(files::SCHEMA);
    embed_stage(config, &dataset, Some(&schema), sink)?;
    let embedding = sink.path(files::EMBEDDING);
    sweep_stage(config, &embedding, sink)?;
    let assignment = sink.path(files::ASSIGNMENT);
    graph_stage(config, &assignment, sink)?;
    let graph = sink.path(files::GRAPH_JSON);
    surrogate_stage(config, &dataset, Some(&schema), &assignment, Some(&graph), sink)?;
    report_stage(config, sink)
}
