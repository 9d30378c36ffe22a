//! 2D embedding of states through a fuzzy k-nearest-neighbor graph.
//!
//! High-dimensional memberships are `w_ij = exp(−max(0, d_ij − ρ_i)/σ_i)`,
//! symmetrized by probabilistic union; low-dimensional memberships are
//! `v_ij = (1 + ‖z_i − z_j‖²)⁻¹`. Coordinates minimize the fuzzy-set cross
//! entropy between the two with edge-sampled SGD and negative sampling.

mod graph;
mod optimize;

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{standardize, DatasetError, EpisodeLayout, TrajectoryDataset};
use crate::util::fmt_f64;

pub use graph::{build_fuzzy_graph, FuzzyGraph};
pub use optimize::{embedding_loss, membership, optimize_embedding};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("need more states than neighbors: n = {n}, k = {k}")]
    TooFewStates { n: usize, k: usize },
    #[error("invalid embedding parameter: {0}")]
    Config(String),
    #[error("edge ({0}, {1}) is invalid for this graph")]
    BadEdge(usize, usize),
    #[error(transparent)]
    Format(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_edge: usize,
    pub seed: u64,
    /// z-score each state feature before measuring distances.
    pub standardize: bool,
    /// Recorded for provenance only; the low-dimensional kernel is fixed to
    /// `(1 + d²)⁻¹`.
    pub min_dist: f64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            k: 15,
            epochs: 500,
            learning_rate: 1.0,
            negatives_per_edge: 2,
            seed: 0,
            standardize: false,
            min_dist: 0.1,
        }
    }
}

impl EmbeddingParams {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.k < 2 {
            return Err(EmbeddingError::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.epochs == 0 {
            return Err(EmbeddingError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbeddingError::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStates {
    /// `n × 2`.
    pub coords: Array2<f64>,
    pub graph: FuzzyGraph,
    /// Objective at initialization followed by one value per epoch.
    pub loss_trace: Vec<f64>,
    pub seed: u64,
}

/// Builds the graph on the dataset's states (all episodes jointly) and
/// optimizes the embedding.
pub fn embed_dataset(
    dataset: &TrajectoryDataset,
    params: &EmbeddingParams,
) -> Result<EmbeddedStates, EmbeddingError> {
    params.validate()?;
    let mut states = dataset.state_matrix();
    if params.standardize {
        states = standardize(&states);
    }
    let graph = build_fuzzy_graph(states.view(), params.k)?;
    optimize_embedding(
        graph,
        params.epochs,
        params.learning_rate,
        params.negatives_per_edge,
        params.seed,
    )
}

/// Embedding CSV: `episode,step,z0,z1`.
pub fn write_embedding_csv<W: Write>(
    writer: W,
    coords: ArrayView2<f64>,
    layout: &EpisodeLayout,
) -> Result<(), EmbeddingError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["episode", "step", "z0", "z1"])
        .map_err(std::io::Error::other)?;
    for ((ep, step), row) in layout.index().zip(coords.rows()) {
        w.write_record([ep.to_string(), step.to_string(), fmt_f64(row[0]), fmt_f64(row[1])])
            .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding_csv<R: Read>(reader: R) -> Result<(Array2<f64>, EpisodeLayout), EmbeddingError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(e, 1))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != ["episode", "step", "z0", "z1"] {
        return Err(DatasetError::Schema(format!(
            "embedding header must be episode,step,z0,z1, found {}",
            header.join(",")
        ))
        .into());
    }
    let mut index = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = || DatasetError::Parse {
            line,
            message: format!("malformed embedding row {:?}", rec.as_slice()),
        };
        if rec.len() != 4 {
            return Err(bad().into());
        }
        let ep: u64 = rec[0].trim().parse().map_err(|_| bad())?;
        let step: usize = rec[1].trim().parse().map_err(|_| bad())?;
        let z0: f64 = rec[2].trim().parse().map_err(|_| bad())?;
        let z1: f64 = rec[3].trim().parse().map_err(|_| bad())?;
        if !(z0.is_finite() && z1.is_finite()) {
            return Err(DatasetError::Data {
                line,
                message: "non-finite coordinate".into(),
            }
            .into());
        }
        index.push((ep, step));
        flat.push(z0);
        flat.push(z1);
    }
    let layout = EpisodeLayout::from_index(&index, 2)?;
    let coords = Array2::from_shape_vec((index.len(), 2), flat).expect("two columns");
    Ok((coords, layout))
}

/// Loss trace CSV: `epoch,loss` (epoch 0 is the initialization).
pub fn write_loss_trace_csv<W: Write>(writer: W, trace: &[f64]) -> Result<(), EmbeddingError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "loss"]).map_err(std::io::Error::other)?;
    for (e, l) in trace.iter().enumerate() {
        w.write_record([e.to_string(), fmt_f64(*l)])
            .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(e: csv::Error, fallback: usize) -> EmbeddingError {
    let line = e.position().map_or(fallback, |p| p.line() as usize);
    DatasetError::Parse {
        line,
        message: e.to_string(),
    }
    .into()
}
