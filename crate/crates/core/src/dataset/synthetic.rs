//! Ground-truth phase generator.
//!
//! Phase `p` owns the anchor `scale · e_p` (the vertices of a regular simplex).
//! Each step emits `anchor(phase) + N(0, σ²)`, phases advance cyclically every
//! `steps_per_phase` steps, and an optional branch phase exits to one of two
//! targets. Actions follow a fixed per-phase linear rule `a = M_p · s + ε`, so
//! the per-phase action maps are exactly additive in the state features.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DatasetError, Episode, FeatureSchema, Result, TrajectoryDataset};
use crate::clustering::PhaseAssignment;
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub branch_phase: usize,
    pub target_a: usize,
    pub target_b: usize,
    pub prob_a: f64,
    /// When set, the exit is decided by this state feature of the run's last
    /// step (noise above the `1 − prob_a` normal quantile exits to `target_a`)
    /// instead of a coin flip, and runs exiting to `target_a` add
    /// `feature_gain` to that feature's column of the action rule.
    #[serde(default)]
    pub feature: Option<usize>,
    #[serde(default = "default_feature_gain")]
    pub feature_gain: f64,
}

fn default_feature_gain() -> f64 {
    1.5
}

impl BranchSpec {
    pub fn coin(branch_phase: usize, target_a: usize, target_b: usize, prob_a: f64) -> Self {
        Self {
            branch_phase,
            target_a,
            target_b,
            prob_a,
            feature: None,
            feature_gain: default_feature_gain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_phases: usize,
    pub steps_per_phase: usize,
    pub episodes: usize,
    pub steps: usize,
    pub noise_sigma: f64,
    pub branch: Option<BranchSpec>,
    pub seed: u64,
    /// Defaults to `n_phases`; must be at least `n_phases`.
    pub state_dim: Option<usize>,
    pub action_dim: usize,
    /// Defaults to `0.1 · noise_sigma`.
    pub action_noise: Option<f64>,
    /// Anchor norm. Defaults to `max(1, 6σ/√2)` so anchors sit at least `6σ`
    /// apart.
    pub anchor_scale: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_phases: 4,
            steps_per_phase: 1,
            episodes: 5,
            steps: 1000,
            noise_sigma: 0.1,
            branch: None,
            seed: 0,
            state_dim: None,
            action_dim: 3,
            action_noise: None,
            anchor_scale: None,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(DatasetError::Config(m));
        if self.n_phases < 2 {
            return fail(format!("n_phases must be >= 2, got {}", self.n_phases));
        }
        if self.steps_per_phase == 0 {
            return fail("steps_per_phase must be >= 1".into());
        }
        if self.episodes == 0 {
            return fail("episodes must be >= 1".into());
        }
        if self.steps < 2 {
            return fail(format!("steps must be >= 2, got {}", self.steps));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.state_dim() < self.n_phases {
            return fail(format!(
                "state_dim {} is smaller than n_phases {}",
                self.state_dim(),
                self.n_phases
            ));
        }
        if self.action_dim == 0 {
            return fail("action_dim must be >= 1".into());
        }
        if !(self.action_noise() >= 0.0 && self.action_noise().is_finite()) {
            return fail("action_noise must be >= 0".into());
        }
        if !(self.anchor_scale() > 0.0 && self.anchor_scale().is_finite()) {
            return fail("anchor_scale must be > 0".into());
        }
        if let Some(b) = &self.branch {
            let p = self.n_phases;
            if b.branch_phase >= p || b.target_a >= p || b.target_b >= p {
                return fail(format!("branch phases must be < {p}"));
            }
            if !(0.0..=1.0).contains(&b.prob_a) {
                return fail(format!("prob_a must lie in [0, 1], got {}", b.prob_a));
            }
            if let Some(f) = b.feature {
                if f >= self.state_dim() {
                    return fail(format!("branch feature {f} out of range"));
                }
            }
            if !b.feature_gain.is_finite() {
                return fail("feature_gain must be finite".into());
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim.unwrap_or(self.n_phases)
    }

    pub fn action_noise(&self) -> f64 {
        self.action_noise.unwrap_or(0.1 * self.noise_sigma)
    }

    pub fn anchor_scale(&self) -> f64 {
        self.anchor_scale
            .unwrap_or_else(|| (6.0 * self.noise_sigma / std::f64::consts::SQRT_2).max(1.0))
    }

    pub fn anchor(&self, phase: usize) -> Array1<f64> {
        let mut a = Array1::zeros(self.state_dim());
        a[phase] = self.anchor_scale();
        a
    }
}

/// The generator's per-phase linear action rules.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRules {
    /// `D_a × D_s` matrix per phase.
    pub matrices: Vec<Array2<f64>>,
    /// Rule used by branch-phase runs that exit to `target_a` when the branch
    /// is feature-conditioned.
    pub branch_a_matrix: Option<Array2<f64>>,
    /// `(feature, action)` of each phase's dominant entry (|M| = 1, all other
    /// entries have |M| ≤ 0.3).
    pub dominant: Vec<(usize, usize)>,
}

impl ActionRules {
    pub fn matrix_for(&self, cfg: &SyntheticConfig, phase: usize, exit: usize) -> &Array2<f64> {
        match (&cfg.branch, &self.branch_a_matrix) {
            (Some(b), Some(m)) if b.branch_phase == phase && exit == b.target_a => m,
            _ => &self.matrices[phase],
        }
    }
}

/// Deterministic action rules for `cfg` (independent of trajectory length).
pub fn action_rules(cfg: &SyntheticConfig) -> ActionRules {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, "action-rules"));
    let ds = cfg.state_dim();
    let da = cfg.action_dim;
    let mut matrices = Vec::with_capacity(cfg.n_phases);
    let mut dominant = Vec::with_capacity(cfg.n_phases);
    for p in 0..cfg.n_phases {
        let mut m = Array2::zeros((da, ds));
        for v in m.iter_mut() {
            let mag: f64 = rng.random_range(0.1..0.3);
            *v = if rng.random::<bool>() { mag } else { -mag };
        }
        let feature = rng.random_range(0..ds);
        let action = p % da;
        m[[action, feature]] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        matrices.push(m);
        dominant.push((feature, action));
    }
    let branch_a_matrix = cfg.branch.as_ref().and_then(|b| {
        b.feature.map(|f| {
            let mut m = matrices[b.branch_phase].clone();
            m.column_mut(f).mapv_inplace(|v| v + b.feature_gain);
            m
        })
    });
    ActionRules {
        matrices,
        branch_a_matrix,
        dominant,
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(TrajectoryDataset, PhaseAssignment)> {
    cfg.validate()?;
    let rules = action_rules(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, "trajectory"));
    let ds = cfg.state_dim();
    let da = cfg.action_dim;
    let sigma = cfg.noise_sigma;
    let action_sigma = cfg.action_noise();
    let exit_threshold = cfg.branch.as_ref().and_then(|b| {
        let f = b.feature?;
        (sigma > 0.0).then(|| {
            let q = Normal::standard().inverse_cdf(1.0 - b.prob_a);
            (f, sigma * q)
        })
    });

    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut labels = Vec::with_capacity(cfg.episodes * cfg.steps);
    for e in 0..cfg.episodes {
        let mut states = Array2::zeros((cfg.steps, ds));
        let mut actions = Array2::zeros((cfg.steps, da));
        let mut phase = 0;
        let mut t = 0;
        while t < cfg.steps {
            let run = cfg.steps_per_phase.min(cfg.steps - t);
            let anchor = cfg.anchor(phase);
            for r in t..t + run {
                for j in 0..ds {
                    let z: f64 = rng.sample(StandardNormal);
                    states[[r, j]] = anchor[j] + sigma * z;
                }
            }
            let exit = match &cfg.branch {
                Some(b) if b.branch_phase == phase => {
                    let to_a = match exit_threshold {
                        Some((f, thr)) => states[[t + run - 1, f]] - anchor[f] >= thr,
                        None => rng.random::<f64>() < b.prob_a,
                    };
                    if to_a {
                        b.target_a
                    } else {
                        b.target_b
                    }
                }
                _ => (phase + 1) % cfg.n_phases,
            };
            let m = rules.matrix_for(cfg, phase, exit);
            for r in t..t + run {
                let a = m.dot(&states.row(r));
                for d in 0..da {
                    let z: f64 = rng.sample(StandardNormal);
                    actions[[r, d]] = a[d] + action_sigma * z;
                }
            }
            labels.extend(std::iter::repeat_n(phase, run));
            phase = exit;
            t += run;
        }
        episodes.push(Episode {
            episode_id: e as u64,
            states,
            actions,
        });
    }
    let schema = FeatureSchema::generic(ds, da)?;
    let dataset = TrajectoryDataset::new(episodes, schema)?;
    let truth = PhaseAssignment::with_k(labels, cfg.n_phases, dataset.layout())
        .map_err(|e| DatasetError::Invalid(e.to_string()))?;
    Ok((dataset, truth))
}
