use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict, r2_from_predictions, AdditiveSurrogate, ShapeFunction, SurrogateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostingConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Leaves per tree; 3 is a depth-2 tree grown best-first.
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    /// Fits below this many samples are refused.
    pub min_samples: usize,
    /// Bootstrap bags averaged into one model; 0 disables bagging.
    pub bags: usize,
    pub seed: u64,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            learning_rate: 0.1,
            max_leaves: 3,
            max_bins: 256,
            min_samples_leaf: 2,
            min_samples: 20,
            bags: 0,
            seed: 0,
        }
    }
}

impl BoostingConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::Config(m));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2".into());
        }
        if self.max_bins < 2 {
            return bad("max_bins must be >= 2".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1".into());
        }
        if self.min_samples < 2 {
            return bad("min_samples must be >= 2".into());
        }
        Ok(())
    }
}

/// Cut points between consecutive distinct values at (at most `max_bins − 1`)
/// quantile positions. `sorted` must be ascending.
fn quantile_cuts(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut cuts = Vec::new();
    let push_cut_below = |pos: usize, cuts: &mut Vec<f64>| {
        let hi = sorted[pos];
        // largest value strictly below hi
        let lo_pos = sorted[..pos].partition_point(|&v| v < hi);
        if lo_pos == 0 {
            return;
        }
        let lo = sorted[lo_pos - 1];
        let mut mid = 0.5 * lo + 0.5 * hi;
        if mid >= hi {
            mid = lo;
        }
        if cuts.last().is_none_or(|&c: &f64| c < mid) {
            cuts.push(mid);
        }
    };
    let distinct = 1 + sorted.windows(2).filter(|w| w[0] < w[1]).count();
    if distinct <= max_bins {
        for pos in 1..n {
            if sorted[pos - 1] < sorted[pos] {
                push_cut_below(pos, &mut cuts);
            }
        }
    } else {
        for q in 1..max_bins {
            push_cut_below(q * n / max_bins, &mut cuts);
        }
    }
    cuts
}

struct Binned {
    cuts: Vec<f64>,
    range: [f64; 2],
    /// Bin of every (canonically ordered) sample.
    bins: Vec<u32>,
}

fn bin_feature(column: impl Iterator<Item = f64>, max_bins: usize) -> Binned {
    let values: Vec<f64> = column.collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts = quantile_cuts(&sorted, max_bins);
    let bins = values
        .iter()
        .map(|&x| cuts.partition_point(|&c| c < x) as u32)
        .collect();
    Binned {
        range: [sorted[0], sorted[sorted.len() - 1]],
        cuts,
        bins,
    }
}

/// Histogram node covering bins `lo..hi`.
#[derive(Clone, Copy)]
struct Node {
    lo: usize,
    hi: usize,
    sum: f64,
    count: usize,
}

struct Split {
    gain: f64,
    left: Node,
    right: Node,
}

fn best_split(node: Node, sums: &[f64], counts: &[usize], min_leaf: usize) -> Option<Split> {
    let parent = node.sum * node.sum / node.count as f64;
    let mut best: Option<Split> = None;
    let (mut sl, mut nl) = (0.0, 0usize);
    for at in node.lo..node.hi - 1 {
        sl += sums[at];
        nl += counts[at];
        let nr = node.count - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let sr = node.sum - sl;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
        if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Split {
                gain,
                left: Node {
                    lo: node.lo,
                    hi: at + 1,
                    sum: sl,
                    count: nl,
                },
                right: Node {
                    lo: at + 1,
                    hi: node.hi,
                    sum: sr,
                    count: nr,
                },
            });
        }
    }
    best
}

/// Grows a best-first tree over the histogram and returns the leaf mean of
/// every bin (0 for bins outside any populated leaf).
fn fit_tree(sums: &[f64], counts: &[usize], max_leaves: usize, min_leaf: usize) -> Option<Vec<f64>> {
    let root = Node {
        lo: 0,
        hi: sums.len(),
        sum: sums.iter().sum(),
        count: counts.iter().sum(),
    };
    let mut leaves = vec![root];
    let mut splits = vec![best_split(root, sums, counts, min_leaf)];
    splits[0].as_ref()?;
    while leaves.len() < max_leaves {
        // largest gain; ties go to the leftmost leaf
        let mut pick: Option<usize> = None;
        for (i, s) in splits.iter().enumerate() {
            if let Some(s) = s {
                if pick.is_none_or(|p| s.gain > splits[p].as_ref().unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let s = splits[i].take().unwrap();
        leaves[i] = s.left;
        splits[i] = best_split(s.left, sums, counts, min_leaf);
        leaves.insert(i + 1, s.right);
        splits.insert(i + 1, best_split(s.right, sums, counts, min_leaf));
    }
    let mut values = vec![0.0; sums.len()];
    for leaf in leaves {
        let v = leaf.sum / leaf.count as f64;
        values[leaf.lo..leaf.hi].fill(v);
    }
    Some(values)
}

/// One boosting run over the samples `idx` (indices into the canonical order).
/// Returns `(bias, per-feature bin values, SS_res trace)`.
fn boost(
    binned: &[Binned],
    targets: &[f64],
    idx: &[usize],
    cfg: &BoostingConfig,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = idx.len();
    let first = targets[idx[0]];
    let bias = if idx.iter().all(|&i| targets[i] == first) {
        first
    } else {
        idx.iter().map(|&i| targets[i]).sum::<f64>() / n as f64
    };
    let mut residual: Vec<f64> = idx.iter().map(|&i| targets[i] - bias).collect();
    let mut values: Vec<Vec<f64>> = binned.iter().map(|b| vec![0.0; b.cuts.len() + 1]).collect();
    let ss = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut trace = Vec::with_capacity(cfg.rounds + 1);
    trace.push(ss(&residual));

    let mut sums = Vec::new();
    let mut counts = Vec::new();
    for _ in 0..cfg.rounds {
        for (f, b) in binned.iter().enumerate() {
            let n_bins = b.cuts.len() + 1;
            if n_bins < 2 {
                continue;
            }
            sums.clear();
            sums.resize(n_bins, 0.0);
            counts.clear();
            counts.resize(n_bins, 0usize);
            for (k, &i) in idx.iter().enumerate() {
                let bin = b.bins[i] as usize;
                sums[bin] += residual[k];
                counts[bin] += 1;
            }
            let Some(tree) = fit_tree(&sums, &counts, cfg.max_leaves, cfg.min_samples_leaf) else {
                continue;
            };
            let delta: Vec<f64> = tree.iter().map(|v| cfg.learning_rate * v).collect();
            for (v, d) in values[f].iter_mut().zip(&delta) {
                *v += d;
            }
            for (k, &i) in idx.iter().enumerate() {
                residual[k] -= delta[b.bins[i] as usize];
            }
        }
        trace.push(ss(&residual));
    }
    (bias, values, trace)
}

/// Fits `targets ≈ b + Σ_i f_i(states[:, i])` by cyclic boosting.
///
/// Samples are put in a canonical order (by target, then state) before any
/// arithmetic, so the fitted model does not depend on the input row order.
pub fn fit_surrogate(
    states: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    config: &BoostingConfig,
) -> Result<AdditiveSurrogate, SurrogateError> {
    config.validate()?;
    let n = states.nrows();
    if targets.len() != n {
        return Err(SurrogateError::Shape(format!(
            "{n} states for {} targets",
            targets.len()
        )));
    }
    if n < config.min_samples {
        return Err(SurrogateError::TooFewSamples {
            n,
            min: config.min_samples,
        });
    }
    if !states.iter().chain(targets.iter()).all(|v| v.is_finite()) {
        return Err(SurrogateError::NonFinite);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        targets[a].total_cmp(&targets[b]).then_with(|| {
            states
                .row(a)
                .iter()
                .zip(states.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let y: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
    let binned: Vec<Binned> = (0..states.ncols())
        .map(|f| bin_feature(order.iter().map(|&i| states[[i, f]]), config.max_bins))
        .collect();

    let all: Vec<usize> = (0..n).collect();
    let (mut bias, mut values, trace) = if config.bags == 0 {
        boost(&binned, &y, &all, config)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bags: Vec<Vec<usize>> = (0..config.bags)
            .map(|_| {
                let mut s: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                s.sort_unstable();
                s
            })
            .collect();
        let fits: Vec<_> = bags.iter().map(|s| boost(&binned, &y, s, config)).collect();
        let m = config.bags as f64;
        let bias = fits.iter().map(|f| f.0).sum::<f64>() / m;
        let mut values: Vec<Vec<f64>> = binned.iter().map(|b| vec![0.0; b.cuts.len() + 1]).collect();
        let mut trace = vec![0.0; config.rounds + 1];
        for (_, v, t) in &fits {
            for (acc, fv) in values.iter_mut().zip(v) {
                for (a, x) in acc.iter_mut().zip(fv) {
                    *a += x / m;
                }
            }
            for (a, x) in trace.iter_mut().zip(t) {
                *a += x / m;
            }
        }
        (bias, values, trace)
    };

    // center every shape on the training samples and fold the offset into b
    for (v, b) in values.iter_mut().zip(&binned) {
        let mut per_bin = vec![0usize; v.len()];
        for &bin in &b.bins {
            per_bin[bin as usize] += 1;
        }
        let mean = v.iter().zip(&per_bin).map(|(x, &c)| x * c as f64).sum::<f64>() / n as f64;
        if mean != 0.0 {
            v.iter_mut().for_each(|x| *x -= mean);
            bias += mean;
        }
    }

    let shapes = binned
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(f, (b, values))| ShapeFunction {
            feature_index: f,
            cuts: b.cuts,
            range: b.range,
            values,
        })
        .collect();
    let mut model = AdditiveSurrogate {
        phase: 0,
        action_dim: 0,
        bias,
        shapes,
        training_r2: f64::NAN,
        ss_res_trace: trace,
    };
    let preds: Vec<f64> = states.rows().into_iter().map(|s| predict(&model, s)).collect();
    model.training_r2 = r2_from_predictions(targets, &preds)?;
    Ok(model)
}

/// One surrogate per action column, fitted in parallel.
pub fn fit_phase_models(
    phase: usize,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    config: &BoostingConfig,
) -> Result<Vec<AdditiveSurrogate>, SurrogateError> {
    (0..actions.ncols())
        .into_par_iter()
        .map(|d| {
            let mut m = fit_surrogate(states, actions.column(d), config)?;
            m.phase = phase;
            m.action_dim = d;
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;

    fn uniform(seed: u64, n: usize, d: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn cuts_between_distinct_values() {
        assert_eq!(quantile_cuts(&[0.0, 0.0, 1.0, 2.0, 2.0], 256), vec![0.5, 1.5]);
        assert!(quantile_cuts(&[3.0; 5], 256).is_empty());
        let many: Vec<f64> = (0..10_000).map(f64::from).collect();
        let c = quantile_cuts(&many, 256);
        assert_eq!(c.len(), 255);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn adjacent_floats_get_a_cut() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let c = quantile_cuts(&[a, b], 256);
        assert_eq!(c.len(), 1);
        assert!(a <= c[0] && c[0] < b);
    }

    #[test]
    fn tree_prefers_smaller_split_on_ties() {
        // symmetric histogram: splitting after bin 0 or bin 2 gains equally
        let sums = [-2.0, 0.0, 0.0, -2.0];
        let counts = [2, 2, 2, 2];
        let t = fit_tree(&sums, &counts, 2, 1).unwrap();
        assert_eq!(t, vec![-1.0, -1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]);
    }

    #[test]
    fn tree_has_at_most_three_leaves() {
        let sums = [1.0, -3.0, 5.0, -7.0, 9.0];
        let counts = [1, 1, 1, 1, 1];
        let t = fit_tree(&sums, &counts, 3, 1).unwrap();
        let mut distinct = t.clone();
        distinct.dedup();
        assert!(distinct.len() <= 3);
    }

    #[test]
    fn constant_target() {
        let s = uniform(1, 40, 3);
        let y = Array1::from_elem(40, 0.7);
        let m = fit_surrogate(s.view(), y.view(), &BoostingConfig::default()).unwrap();
        assert_eq!(m.bias, 0.7);
        assert!(m.shapes.iter().all(ShapeFunction::is_zero));
        assert_eq!(m.training_r2, 1.0);
    }

    #[test]
    fn too_few_samples() {
        let s = uniform(1, 19, 2);
        let y = Array1::zeros(19);
        assert!(matches!(
            fit_surrogate(s.view(), y.view(), &BoostingConfig::default()),
            Err(SurrogateError::TooFewSamples { n: 19, min: 20 })
        ));
    }

    #[test]
    fn constant_feature_stays_zero() {
        let mut s = uniform(2, 200, 3);
        s.column_mut(1).fill(4.0);
        let y = s.column(0).mapv(|v| 3.0 * v);
        let m = fit_surrogate(s.view(), y.view(), &BoostingConfig::default()).unwrap();
        assert!(m.shapes[1].is_zero());
        assert_eq!(m.shapes[1].n_bins(), 1);
    }

    #[test]
    fn shapes_are_centered() {
        let s = uniform(3, 500, 4);
        let y: Array1<f64> = s.rows().into_iter().map(|r| r[0].powi(3) + r[2] + 5.0).collect();
        let m = fit_surrogate(s.view(), y.view(), &BoostingConfig::default()).unwrap();
        for sh in &m.shapes {
            let mean = s
                .column(sh.feature_index)
                .iter()
                .map(|&x| sh.eval(x))
                .sum::<f64>()
                / 500.0;
            assert!(mean.abs() < 1e-9, "{mean}");
        }
        assert!((m.bias - y.mean().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ss_res_never_increases() {
        let s = uniform(4, 300, 5);
        let y: Array1<f64> = s
            .rows()
            .into_iter()
            .map(|r| (3.0 * r[1]).sin() + r[4].abs())
            .collect();
        let m = fit_surrogate(s.view(), y.view(), &BoostingConfig::default()).unwrap();
        assert_eq!(m.ss_res_trace.len(), 51);
        for w in m.ss_res_trace.windows(2) {
            assert!(w[1] <= w[0], "{w:?}");
        }
    }

    #[test]
    fn bagging_is_seeded() {
        let s = uniform(5, 100, 2);
        let y = s.column(0).mapv(|v| v * v);
        let cfg = BoostingConfig {
            bags: 4,
            seed: 9,
            ..Default::default()
        };
        let a = fit_surrogate(s.view(), y.view(), &cfg).unwrap();
        let b = fit_surrogate(s.view(), y.view(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = fit_surrogate(s.view(), y.view(), &BoostingConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(BoostingConfig {
            rounds: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BoostingConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BoostingConfig {
            max_leaves: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BoostingConfig::default().validate().is_ok());
    }
}
