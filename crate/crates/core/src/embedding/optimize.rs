use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddedStates, EmbeddingError, FuzzyGraph};

const V_CLAMP: f64 = 1e-12;
const REPULSION_CLIP: f64 = 4.0;
/// Added to squared distances in the repulsive coefficient.
const DIST_FLOOR: f64 = 1e-3;
const INIT_HALF_WIDTH: f64 = 10.0;
const NEGATIVE_RETRIES: usize = 8;
/// Share of each edge's own `(1 − w)` repulsion applied per visit. Without it
/// neighbors collapse onto each other and the edge-set objective climbs back
/// up late in training; at full strength clusters stay too diffuse to part.
const EDGE_REPULSION: f64 = 0.2;

/// Low-dimensional membership `v = (1 + d²)⁻¹` for squared distance `d²`.
#[inline]
pub fn membership(d2: f64) -> f64 {
    1.0 / (1.0 + d2)
}

/// Fuzzy-set cross entropy over the symmetrized edge set, each undirected
/// edge counted once. `0 · log 0 = 0`; `v` is clamped to `[1e-12, 1 − 1e-12]`.
pub fn embedding_loss(graph: &FuzzyGraph, coords: ArrayView2<f64>) -> f64 {
    graph
        .edges
        .iter()
        .map(|&(i, j, w)| {
            let d2 = sq_dist(coords, i, j);
            let v = membership(d2).clamp(V_CLAMP, 1.0 - V_CLAMP);
            let mut term = 0.0;
            if w > 0.0 {
                term += w * (w / v).ln();
            }
            if w < 1.0 {
                term += (1.0 - w) * ((1.0 - w) / (1.0 - v)).ln();
            }
            term
        })
        .sum()
}

#[inline]
fn sq_dist(coords: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    let dx = coords[[i, 0]] - coords[[j, 0]];
    let dy = coords[[i, 1]] - coords[[j, 1]];
    dx * dx + dy * dy
}

/// Sequential, seeded SGD on the cross-entropy objective.
///
/// Every epoch visits the edges in both directions; a directed edge is
/// sampled with probability `w / w_max`. A sampled edge pulls both endpoints
/// together and pushes its head away from `negatives_per_edge` uniformly drawn
/// non-neighbors. Independently, with probability `0.2 · (1 − w) / w_max`, the
/// head is pushed away from the tail on the edge's own repulsive term. The
/// step size decays linearly from `learning_rate` to 0.
pub fn optimize_embedding(
    graph: FuzzyGraph,
    epochs: usize,
    learning_rate: f64,
    negatives_per_edge: usize,
    seed: u64,
) -> Result<EmbeddedStates, EmbeddingError> {
    if epochs == 0 {
        return Err(EmbeddingError::Config("epochs must be >= 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(EmbeddingError::Config(format!(
            "learning_rate must be > 0, got {learning_rate}"
        )));
    }
    let n = graph.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Array2::from_shape_fn((n, 2), |_| rng.random_range(-INIT_HALF_WIDTH..=INIT_HALF_WIDTH));

    let adjacency = graph.adjacency();
    let w_max = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut directed = Vec::with_capacity(graph.edges.len() * 2);
    for &(i, j, w) in &graph.edges {
        directed.push((i, j, w / w_max, EDGE_REPULSION * (1.0 - w) / w_max));
        directed.push((j, i, w / w_max, EDGE_REPULSION * (1.0 - w) / w_max));
    }

    let mut loss_trace = Vec::with_capacity(epochs + 1);
    loss_trace.push(embedding_loss(&graph, coords.view()));
    for epoch in 0..epochs {
        let alpha = learning_rate * (1.0 - epoch as f64 / epochs as f64);
        for &(head, tail, p, q) in &directed {
            if rng.random::<f64>() < q {
                repel(&mut coords, head, tail, alpha);
            }
            if rng.random::<f64>() >= p {
                continue;
            }
            let dx = coords[[head, 0]] - coords[[tail, 0]];
            let dy = coords[[head, 1]] - coords[[tail, 1]];
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coef = -2.0 / (1.0 + d2);
                let (gx, gy) = (alpha * coef * dx, alpha * coef * dy);
                coords[[head, 0]] += gx;
                coords[[head, 1]] += gy;
                coords[[tail, 0]] -= gx;
                coords[[tail, 1]] -= gy;
            }

            for _ in 0..negatives_per_edge {
                let Some(other) = sample_negative(&mut rng, n, head, &adjacency[head]) else {
                    continue;
                };
                repel(&mut coords, head, other, alpha);
            }
        }
        loss_trace.push(embedding_loss(&graph, coords.view()));
    }

    Ok(EmbeddedStates {
        coords,
        graph,
        loss_trace,
        seed,
    })
}

/// Pushes `head` away from `other` along the gradient of `log(1/(1 − v))`,
/// clipped in magnitude.
fn repel(coords: &mut Array2<f64>, head: usize, other: usize, alpha: f64) {
    let dx = coords[[head, 0]] - coords[[other, 0]];
    let dy = coords[[head, 1]] - coords[[other, 1]];
    let d2 = dx * dx + dy * dy;
    if d2 <= 0.0 {
        return;
    }
    let coef = 2.0 / ((DIST_FLOOR + d2) * (1.0 + d2));
    let (mut gx, mut gy) = (coef * dx, coef * dy);
    let norm = (gx * gx + gy * gy).sqrt();
    if norm > REPULSION_CLIP {
        gx *= REPULSION_CLIP / norm;
        gy *= REPULSION_CLIP / norm;
    }
    coords[[head, 0]] += alpha * gx;
    coords[[head, 1]] += alpha * gy;
}

fn sample_negative(rng: &mut ChaCha8Rng, n: usize, head: usize, neighbors: &[usize]) -> Option<usize> {
    for _ in 0..NEGATIVE_RETRIES {
        let c = rng.random_range(0..n);
        if c != head && neighbors.binary_search(&c).is_err() {
            return Some(c);
        }
    }
    None
}
