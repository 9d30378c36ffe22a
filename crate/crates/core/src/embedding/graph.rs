use ndarray::ArrayView2;
use rayon::prelude::*;

use super::EmbeddingError;

const BANDWIDTH_TOLERANCE: f64 = 1e-5;
const BANDWIDTH_ITERATIONS: usize = 64;
/// Lower bound on σ_i as a fraction of the mean neighbor distance.
const MIN_BANDWIDTH_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub k: usize,
    /// Per node, its `k` nearest neighbors ordered by (distance, index).
    pub knn_indices: Vec<Vec<usize>>,
    pub knn_dists: Vec<Vec<f64>>,
    /// Directed membership of each kNN entry before symmetrization.
    pub raw_weights: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Symmetrized undirected edges `(i, j, w)` with `i < j`, `0 < w ≤ 1`,
    /// sorted by `(i, j)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    /// A graph given directly by its symmetric edge set (no kNN data).
    pub fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self, EmbeddingError> {
        let mut edges: Vec<_> = edges
            .into_iter()
            .map(|(i, j, w)| if i < j { (i, j, w) } else { (j, i, w) })
            .collect();
        edges.sort_by_key(|e| (e.0, e.1));
        for w in edges.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(EmbeddingError::BadEdge(w[0].0, w[0].1));
            }
        }
        for &(i, j, w) in &edges {
            if i == j || j >= n || !(w > 0.0 && w <= 1.0) {
                return Err(EmbeddingError::BadEdge(i, j));
            }
        }
        Ok(Self {
            n,
            k: 0,
            knn_indices: Vec::new(),
            knn_dists: Vec::new(),
            raw_weights: Vec::new(),
            rho: Vec::new(),
            sigma: Vec::new(),
            edges,
        })
    }

    /// Sorted neighbor lists of the symmetrized graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

/// Exact kNN over Euclidean distance, per-node bandwidth search, and
/// probabilistic-union symmetrization.
pub fn build_fuzzy_graph(points: ArrayView2<f64>, k: usize) -> Result<FuzzyGraph, EmbeddingError> {
    let n = points.nrows();
    if k < 2 {
        return Err(EmbeddingError::Config(format!("k must be >= 2, got {k}")));
    }
    if n <= k {
        return Err(EmbeddingError::TooFewStates { n, k });
    }

    #[allow(clippy::type_complexity)]
    let per_node: Vec<(Vec<usize>, Vec<f64>, f64, f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (idx, dists) = nearest(points, i, k);
            let (rho, sigma) = smooth_bandwidth(&dists, k);
            let weights = dists.iter().map(|&d| membership_weight(d, rho, sigma)).collect();
            (idx, dists, rho, sigma, weights)
        })
        .collect();

    let mut knn_indices = Vec::with_capacity(n);
    let mut knn_dists = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut raw_weights = Vec::with_capacity(n);
    for (idx, d, r, s, w) in per_node {
        knn_indices.push(idx);
        knn_dists.push(d);
        rho.push(r);
        sigma.push(s);
        raw_weights.push(w);
    }

    // (lo, hi, w_lo→hi, w_hi→lo)
    let mut directed: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(n * k);
    for i in 0..n {
        for (&j, &w) in knn_indices[i].iter().zip(&raw_weights[i]) {
            if i < j {
                directed.push((i, j, w, 0.0));
            } else {
                directed.push((j, i, 0.0, w));
            }
        }
    }
    directed.sort_by_key(|e| (e.0, e.1));
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(directed.len());
    let mut it = directed.into_iter().peekable();
    while let Some((i, j, mut fwd, mut back)) = it.next() {
        while let Some(&(i2, j2, f2, b2)) = it.peek() {
            if (i2, j2) != (i, j) {
                break;
            }
            fwd += f2;
            back += b2;
            it.next();
        }
        let w = fwd + back - fwd * back;
        if w > 0.0 {
            edges.push((i, j, w.min(1.0)));
        }
    }

    Ok(FuzzyGraph {
        n,
        k,
        knn_indices,
        knn_dists,
        raw_weights,
        rho,
        sigma,
        edges,
    })
}

fn nearest(points: ArrayView2<f64>, i: usize, k: usize) -> (Vec<usize>, Vec<f64>) {
    let pi = points.row(i);
    let mut cand: Vec<(f64, usize)> = points
        .rows()
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, pj)| {
            let d2: f64 = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2.sqrt(), j)
        })
        .collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    cand.select_nth_unstable_by(k - 1, by);
    cand.truncate(k);
    cand.sort_unstable_by(by);
    cand.into_iter().map(|(d, j)| (j, d)).unzip()
}

#[inline]
fn membership_weight(d: f64, rho: f64, sigma: f64) -> f64 {
    let excess = d - rho;
    if excess <= 0.0 {
        1.0
    } else {
        (-excess / sigma).exp()
    }
}

/// Returns `(ρ, σ)` for one node's sorted neighbor distances.
///
/// `ρ` is the smallest positive neighbor distance (0 when every neighbor
/// coincides with the node). `σ` solves `Σ_j exp(−max(0, d_j − ρ)/σ) = log₂ k`
/// by bisection, never below the floor `1e-3 · mean(d)`. When no solution
/// exists (at least `log₂ k` neighbors at distance `≤ ρ`) σ is the floor.
pub(crate) fn smooth_bandwidth(dists: &[f64], k: usize) -> (f64, f64) {
    let target = (k as f64).log2();
    let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let floor = if mean > 0.0 {
        MIN_BANDWIDTH_SCALE * mean
    } else {
        MIN_BANDWIDTH_SCALE
    };
    // neighbors within ρ contribute 1 each whatever σ is
    let saturated = dists.iter().filter(|&&d| d <= rho).count() as f64;
    if saturated >= target {
        return (rho, floor);
    }
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut mid = 1.0;
    for _ in 0..BANDWIDTH_ITERATIONS {
        let psum: f64 = dists.iter().map(|&d| membership_weight(d, rho, mid)).sum();
        if (psum - target).abs() < BANDWIDTH_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                mid * 2.0
            };
        }
    }
    (rho, mid.max(floor))
}
