//! Additive surrogates of the action outputs of one phase.
//!
//! Each action component is modeled as `a = b + Σ_i f_i(s_i)` where every
//! `f_i` is a piecewise-constant shape over quantile bins of feature `i`,
//! learned by cyclic gradient boosting of shallow trees.

mod attribution;
mod boost;
mod branch;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureSchema;

pub use attribution::{
    attribution_gap, attribution_heatmap, heatmap_svg, write_heatmap_csv, write_mask_csv, AttributionHeatmap,
    TopRule,
};
pub use boost::{fit_phase_models, fit_surrogate, BoostingConfig};
pub use branch::{branch_split, BranchSplit};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least {min} samples to fit a surrogate, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("non-finite value in surrogate input")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("R² is undefined for constant targets with nonzero residuals")]
    UndefinedR2,
    #[error("branch subset for successor {0} is empty")]
    EmptySubset(usize),
    #[error("invalid boosting parameter: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Piecewise-constant contribution of one feature. Values outside the
/// training range fall into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub feature_index: usize,
    /// Interior cut points, strictly increasing; bin `b` holds values in
    /// `(cuts[b-1], cuts[b]]`.
    pub cuts: Vec<f64>,
    /// Training range `[min, max]` of the feature.
    pub range: [f64; 2],
    /// One value per bin (`cuts.len() + 1`).
    pub values: Vec<f64>,
}

impl ShapeFunction {
    #[inline]
    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.bin(x)]
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    /// `[min, cuts…, max]`.
    pub fn bin_edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.cuts.len() + 2);
        e.push(self.range[0]);
        e.extend_from_slice(&self.cuts);
        e.push(self.range[1]);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveSurrogate {
    pub phase: usize,
    pub action_dim: usize,
    pub bias: f64,
    pub shapes: Vec<ShapeFunction>,
    pub training_r2: f64,
    /// Training-set residual sum of squares before boosting and after each
    /// round.
    pub ss_res_trace: Vec<f64>,
}

impl AdditiveSurrogate {
    pub fn n_features(&self) -> usize {
        self.shapes.len()
    }

    /// JSON export with bias, feature names, bin edges and values.
    pub fn to_json(&self, schema: &FeatureSchema) -> String {
        let shapes: Vec<_> = self
            .shapes
            .iter()
            .map(|s| {
                serde_json::json!({
                    "feature": schema.state_names()[s.feature_index],
                    "feature_index": s.feature_index,
                    "bin_edges": s.bin_edges(),
                    "bin_values": s.values,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "phase": self.phase,
            "action": schema.action_names()[self.action_dim],
            "action_dim": self.action_dim,
            "bias": self.bias,
            "training_r2": self.training_r2,
            "shapes": shapes,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }
}

/// Per-feature contributions `f_i(s_i)`, excluding the bias.
pub fn contributions(model: &AdditiveSurrogate, state: ArrayView1<f64>) -> Vec<f64> {
    model
        .shapes
        .iter()
        .map(|s| s.eval(state[s.feature_index]))
        .collect()
}

/// `b + Σ_i f_i(s_i)`; the sum runs in feature order, so it equals
/// `bias + contributions(..).iter().sum()` bit for bit.
pub fn predict(model: &AdditiveSurrogate, state: ArrayView1<f64>) -> f64 {
    model.bias + contributions(model, state).iter().sum::<f64>()
}

/// `1 − SS_res / SS_tot` about the evaluation mean. Constant targets give 1
/// when every residual is zero and [`SurrogateError::UndefinedR2`] otherwise.
pub fn r2_score(
    model: &AdditiveSurrogate,
    states: ArrayView2<f64>,
    targets: ArrayView1<f64>,
) -> Result<f64, SurrogateError> {
    if states.nrows() != targets.len() {
        return Err(SurrogateError::Shape(format!(
            "{} states for {} targets",
            states.nrows(),
            targets.len()
        )));
    }
    let preds: Vec<f64> = states.rows().into_iter().map(|s| predict(model, s)).collect();
    r2_from_predictions(targets, &preds)
}

pub fn r2_from_predictions(targets: ArrayView1<f64>, preds: &[f64]) -> Result<f64, SurrogateError> {
    let n = targets.len();
    if n < 2 {
        return Err(SurrogateError::TooFewSamples { n, min: 2 });
    }
    let ss_res: f64 = targets.iter().zip(preds).map(|(y, p)| (y - p) * (y - p)).sum();
    let first = targets[0];
    if targets.iter().all(|&y| y == first) {
        return if ss_res == 0.0 {
            Ok(1.0)
        } else {
            Err(SurrogateError::UndefinedR2)
        };
    }
    let mean = targets.sum() / n as f64;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
