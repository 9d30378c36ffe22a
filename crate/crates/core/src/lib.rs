//! Recovers the latent phase structure of a continuous-control policy from its
//! state–action trajectories and explains each phase with additive surrogates.
//!
//! The analysis runs in two stages:
//!
//! 1. **Phase identification**: states are embedded into 2D through a fuzzy
//!    k-nearest-neighbor graph ([`embedding`]), clustered with Ward linkage
//!    ([`clustering`]), and the number of phases is chosen by minimizing the
//!    conditional entropy of the next phase given the current one
//!    ([`phase_graph`]).
//! 2. **Phase-wise explanation**: per phase and per action dimension, an
//!    additive boosted model `a = b + Σ_i f_i(s_i)` is fit ([`surrogate`]) and
//!    summarized as feature-attribution heatmaps, including successor-conditioned
//!    splits of branching phases.
//!
//! [`pipeline`] wires the stages together behind a config file and writes a
//! reproducible report bundle.

pub mod clustering;
pub mod dataset;
pub mod embedding;
pub mod phase_graph;
pub mod pipeline;
pub mod surrogate;
mod util;

pub use clustering::{build_dendrogram, cut_dendrogram, Dendrogram, Merge, PhaseAssignment};
pub use dataset::{
    generate_synthetic, load_trajectories, write_trajectories, BranchSpec, Episode, EpisodeLayout,
    FeatureSchema, SyntheticConfig, TrajectoryDataset,
};
pub use embedding::{
    build_fuzzy_graph, embedding_loss, optimize_embedding, EmbeddedStates, EmbeddingParams, FuzzyGraph,
};
pub use phase_graph::{
    cluster_entropy, conditional_entropy, dominant_transitions, export_graph, extract_cycles, select_k,
    transition_counts, EntropyCurve, GraphFormat, TransitionGraph, TransitionMatrix,
};
pub use pipeline::{run_pipeline, PipelineConfig, ReportBundle};
pub use surrogate::{
    attribution_heatmap, branch_split, contributions, fit_surrogate, predict, r2_score, AdditiveSurrogate,
    AttributionHeatmap, BoostingConfig, ShapeFunction, TopRule,
};
