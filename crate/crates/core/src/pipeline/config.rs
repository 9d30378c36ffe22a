use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{BranchSpec, SyntheticConfig};
use crate::embedding::EmbeddingParams;
use crate::surrogate::{BoostingConfig, TopRule};
use crate::util::mix_seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Flat, versioned run configuration. Absent keys take the defaults below;
/// unknown keys are rejected.
///
/// ```toml
/// schema_version = 1
/// seed = 7
/// synth_phases = 5
/// k_max = 12
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Trajectory CSV; the synthetic generator is used when absent.
    pub input: Option<PathBuf>,
    /// Schema file for `input`; names are read from the CSV header when absent.
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub synth_phases: usize,
    pub synth_steps_per_phase: usize,
    pub synth_episodes: usize,
    pub synth_steps: usize,
    pub synth_noise_sigma: f64,
    pub synth_state_dim: Option<usize>,
    pub synth_action_dim: usize,
    /// `[branch_phase, target_a, target_b]`.
    pub synth_branch: Option<[usize; 3]>,
    pub synth_branch_prob: f64,
    pub synth_branch_feature: Option<usize>,
    pub synth_branch_gain: f64,

    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub standardize: bool,
    pub min_dist: f64,

    pub k_min: usize,
    pub k_max: usize,
    pub threshold: f64,
    pub include_self_loops: bool,

    pub rounds: usize,
    pub boost_learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    /// Phases (and branch subsets) with fewer states get no surrogate.
    pub min_phase_samples: usize,
    pub bags: usize,
    /// `"fraction_of_max"` or `"quantile"`.
    pub top_rule: String,
    pub top_level: f64,
    /// Share of each phase held out for R²; 0 reports training R².
    pub holdout: f64,

    /// Explicit `[phase, successor_a, successor_b]` branch analyses.
    pub branches: Vec<[usize; 3]>,
    /// Also analyze every phase with two or more dominant successors.
    pub auto_branches: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SyntheticConfig::default();
        let embed = EmbeddingParams::default();
        let boost = BoostingConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            input: None,
            schema: None,
            out: None,
            synth_phases: synth.n_phases,
            synth_steps_per_phase: synth.steps_per_phase,
            synth_episodes: synth.episodes,
            synth_steps: synth.steps,
            synth_noise_sigma: synth.noise_sigma,
            synth_state_dim: None,
            synth_action_dim: synth.action_dim,
            synth_branch: None,
            synth_branch_prob: 0.5,
            synth_branch_feature: None,
            synth_branch_gain: 1.5,
            k: embed.k,
            epochs: embed.epochs,
            learning_rate: embed.learning_rate,
            negatives: embed.negatives_per_edge,
            standardize: embed.standardize,
            min_dist: embed.min_dist,
            k_min: 2,
            k_max: 20,
            threshold: 0.7,
            include_self_loops: false,
            rounds: boost.rounds,
            boost_learning_rate: boost.learning_rate,
            max_leaves: boost.max_leaves,
            max_bins: boost.max_bins,
            min_samples_leaf: boost.min_samples_leaf,
            min_phase_samples: boost.min_samples,
            bags: 0,
            top_rule: "fraction_of_max".into(),
            top_level: 0.95,
            holdout: 0.0,
            branches: Vec::new(),
            auto_branches: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Validation(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative paths in a config file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.schema, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_phases: self.synth_phases,
            steps_per_phase: self.synth_steps_per_phase,
            episodes: self.synth_episodes,
            steps: self.synth_steps,
            noise_sigma: self.synth_noise_sigma,
            branch: self.synth_branch.map(|[p, a, b]| BranchSpec {
                feature: self.synth_branch_feature,
                feature_gain: self.synth_branch_gain,
                ..BranchSpec::coin(p, a, b, self.synth_branch_prob)
            }),
            seed: mix_seed(self.seed, "synth"),
            state_dim: self.synth_state_dim,
            action_dim: self.synth_action_dim,
            action_noise: None,
            anchor_scale: None,
        }
    }

    pub fn embedding_params(&self) -> EmbeddingParams {
        EmbeddingParams {
            k: self.k,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negatives_per_edge: self.negatives,
            seed: mix_seed(self.seed, "embed"),
            standardize: self.standardize,
            min_dist: self.min_dist,
        }
    }

    pub fn boosting_config(&self) -> BoostingConfig {
        BoostingConfig {
            rounds: self.rounds,
            learning_rate: self.boost_learning_rate,
            max_leaves: self.max_leaves,
            max_bins: self.max_bins,
            min_samples_leaf: self.min_samples_leaf,
            min_samples: self.min_phase_samples,
            bags: self.bags,
            seed: mix_seed(self.seed, "surrogate"),
        }
    }

    pub fn holdout_seed(&self) -> u64 {
        mix_seed(self.seed, "holdout")
    }

    pub fn top_rule(&self) -> TopRule {
        match self.top_rule.as_str() {
            "quantile" => TopRule::Quantile(self.top_level),
            _ => TopRule::FractionOfMax(self.top_level),
        }
    }

    /// The rule not selected by `top_rule`, reported alongside it.
    pub fn alternate_top_rule(&self) -> TopRule {
        match self.top_rule() {
            TopRule::Quantile(_) => TopRule::FractionOfMax(self.top_level),
            TopRule::FractionOfMax(_) => TopRule::Quantile(self.top_level),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.input.is_none() {
            if self.schema.is_some() {
                return fail("schema given without input".into());
            }
            self.synthetic_config()
                .validate()
                .map_err(|e| PipelineError::Validation(e.to_string()))?;
        }
        self.embedding_params()
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        if self.k_min < 2 {
            return fail(format!("k_min must be >= 2, got {}", self.k_min));
        }
        if self.k_min > self.k_max {
            return fail(format!("k_min ({}) exceeds k_max ({})", self.k_min, self.k_max));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold must be in (0, 1), got {}", self.threshold));
        }
        self.boosting_config()
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        if !matches!(self.top_rule.as_str(), "fraction_of_max" | "quantile") {
            return fail(format!(
                "top_rule must be \"fraction_of_max\" or \"quantile\", got {:?}",
                self.top_rule
            ));
        }
        if !(self.top_level > 0.0 && self.top_level <= 1.0) {
            return fail(format!("top_level must be in (0, 1], got {}", self.top_level));
        }
        if !(0.0..0.9).contains(&self.holdout) {
            return fail(format!("holdout must be in [0, 0.9), got {}", self.holdout));
        }
        if let Some(b) = self.branches.iter().find(|b| b[1] == b[2]) {
            return fail(format!("branch request {b:?} names the same successor twice"));
        }
        Ok(())
    }
}
