//! Transition statistics between phases and the entropy criterion that picks
//! the number of phases.
//!
//! All entropies are in nats. A row's transition probabilities are
//! normalized by the row's transition total; the occupancy weights of the
//! conditional entropy use the full state count `N_i`, which also includes
//! episode-final states without a successor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{build_dendrogram, cut_labels, ClusterError, Dendrogram, PhaseAssignment};
use crate::dataset::{DatasetError, EpisodeLayout};
use crate::util::fmt_f64;

#[derive(Debug, Error)]
pub enum PhaseGraphError {
    #[error("assignment is not aligned with the dataset: {0}")]
    Alignment(String),
    #[error("invalid transition matrix: {0}")]
    Matrix(String),
    #[error("invalid sweep range {k_min}..={k_max} for {n} states")]
    Range { k_min: usize, k_max: usize, n: usize },
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    Threshold(f64),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Format(#[from] DatasetError),
    #[error("graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub k: usize,
    /// `counts[i][j]`: transitions from phase `i` to phase `j` within episodes.
    pub counts: Vec<Vec<u64>>,
    /// `occupancy[i]`: states labeled `i`.
    pub occupancy: Vec<u64>,
    /// Row-normalized counts; all-zero for rows without transitions.
    pub probs: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, occupancy: Vec<u64>) -> Result<Self, PhaseGraphError> {
        let k = counts.len();
        if occupancy.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(PhaseGraphError::Matrix(format!(
                "counts must be {k}×{k} with {k} occupancies"
            )));
        }
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total > occupancy[i] {
                return Err(PhaseGraphError::Matrix(format!(
                    "row {i} has {total} transitions but only {} states",
                    occupancy[i]
                )));
            }
        }
        let probs = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(Self {
            k,
            counts,
            occupancy,
            probs,
        })
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn total_transitions(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Phases that have states but no observed successor.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.k).filter(|&i| self.row_total(i) == 0).collect()
    }

    /// CSV laid out like a source × target table: `source,N,0,1,…,K−1`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PhaseGraphError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["source".to_string(), "N".to_string()];
        header.extend((0..self.k).map(|j| j.to_string()));
        w.write_record(&header).map_err(std::io::Error::other)?;
        for i in 0..self.k {
            let mut row = vec![i.to_string(), self.occupancy[i].to_string()];
            row.extend(self.counts[i].iter().map(u64::to_string));
            w.write_record(&row).map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PhaseGraphError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers().map_err(std::io::Error::other)?.len();
        if width < 3 {
            return Err(PhaseGraphError::Matrix(
                "matrix CSV needs source,N and counts".into(),
            ));
        }
        let k = width - 2;
        let mut counts = Vec::with_capacity(k);
        let mut occupancy = Vec::with_capacity(k);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(std::io::Error::other)?;
            let nums: Result<Vec<u64>, _> = rec.iter().map(|f| f.trim().parse::<u64>()).collect();
            let nums = nums.map_err(|e| DatasetError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if nums.len() != width || nums[0] as usize != i {
                return Err(PhaseGraphError::Matrix(format!("bad row {}", i + 2)));
            }
            occupancy.push(nums[1]);
            counts.push(nums[2..].to_vec());
        }
        Self::from_counts(counts, occupancy)
    }
}

/// Counts `(c_t, c_{t+1})` pairs inside each episode, never across episode
/// boundaries.
pub fn transition_counts(
    assignment: &PhaseAssignment,
    layout: &EpisodeLayout,
) -> Result<TransitionMatrix, PhaseGraphError> {
    if assignment.layout() != layout {
        return Err(PhaseGraphError::Alignment(format!(
            "assignment covers {} states in {} episodes, dataset has {} states in {} episodes",
            assignment.layout().n_states(),
            assignment.layout().spans().len(),
            layout.n_states(),
            layout.spans().len()
        )));
    }
    Ok(counts_from_labels(assignment.labels(), assignment.k(), layout))
}

fn counts_from_labels(labels: &[usize], k: usize, layout: &EpisodeLayout) -> TransitionMatrix {
    let mut counts = vec![vec![0u64; k]; k];
    let mut occupancy = vec![0u64; k];
    for &l in labels {
        occupancy[l] += 1;
    }
    for range in layout.ranges() {
        for w in labels[range].windows(2) {
            counts[w[0]][w[1]] += 1;
        }
    }
    TransitionMatrix::from_counts(counts, occupancy).expect("counts derived from labels are consistent")
}

/// Next-phase entropy of row `i`; 0 for a row without transitions.
pub fn cluster_entropy(matrix: &TransitionMatrix, i: usize) -> f64 {
    matrix.probs[i]
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Occupancy-weighted mean of the row entropies.
pub fn conditional_entropy(matrix: &TransitionMatrix) -> f64 {
    let total: u64 = matrix.occupancy.iter().sum();
    if total == 0 {
        return 0.0;
    }
    (0..matrix.k)
        .map(|i| matrix.occupancy[i] as f64 / total as f64 * cluster_entropy(matrix, i))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCurve {
    /// `(K, H_c(K))` for every K of the sweep, ascending.
    pub points: Vec<(usize, f64)>,
    /// Global minimizer; ties go to the smaller K.
    pub k_star: usize,
    /// For each K, phases that had no observed successor (counted as H_i = 0).
    pub empty_rows: Vec<(usize, Vec<usize>)>,
}

impl EntropyCurve {
    pub fn value_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }

    /// CSV: `K,H_c`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PhaseGraphError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["K", "H_c"]).map_err(std::io::Error::other)?;
        for &(k, h) in &self.points {
            w.write_record([k.to_string(), fmt_f64(h)])
                .map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PhaseGraphError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(std::io::Error::other)?;
            let bad = || DatasetError::Parse {
                line: i + 2,
                message: format!("malformed entropy row {:?}", rec.as_slice()),
            };
            let k: usize = rec.get(0).and_then(|f| f.trim().parse().ok()).ok_or_else(bad)?;
            let h: f64 = rec.get(1).and_then(|f| f.trim().parse().ok()).ok_or_else(bad)?;
            points.push((k, h));
        }
        let k_star = argmin(&points).ok_or_else(|| PhaseGraphError::Matrix("empty curve".into()))?;
        Ok(Self {
            points,
            k_star,
            empty_rows: Vec::new(),
        })
    }
}

fn argmin(points: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, h) in points {
        match best {
            Some((bk, bh)) if h > bh || (h == bh && k > bk) => {}
            _ => best = Some((k, h)),
        }
    }
    best.map(|b| b.0)
}

/// Evaluates `H_c(K)` for every cut of `dendrogram` in `k_min..=k_max`.
pub fn entropy_curve(
    dendrogram: &Dendrogram,
    layout: &EpisodeLayout,
    k_min: usize,
    k_max: usize,
) -> Result<EntropyCurve, PhaseGraphError> {
    let n = dendrogram.n;
    if k_min < 2 || k_min > k_max || k_max > n {
        return Err(PhaseGraphError::Range { k_min, k_max, n });
    }
    if layout.n_states() != n {
        return Err(PhaseGraphError::Alignment(format!(
            "dendrogram has {n} leaves, layout has {} states",
            layout.n_states()
        )));
    }
    let evaluated: Vec<(usize, f64, Vec<usize>)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let labels = cut_labels(dendrogram, k)?;
            let m = counts_from_labels(&labels, k, layout);
            Ok((k, conditional_entropy(&m), m.empty_rows()))
        })
        .collect::<Result<_, ClusterError>>()?;
    let points: Vec<(usize, f64)> = evaluated.iter().map(|e| (e.0, e.1)).collect();
    let empty_rows = evaluated
        .into_iter()
        .filter(|e| !e.2.is_empty())
        .map(|e| (e.0, e.2))
        .collect();
    Ok(EntropyCurve {
        k_star: argmin(&points).expect("sweep is non-empty"),
        points,
        empty_rows,
    })
}

/// Builds the Ward dendrogram of the embedding and sweeps `K`.
pub fn select_k(
    coords: ArrayView2<f64>,
    layout: &EpisodeLayout,
    k_min: usize,
    k_max: usize,
) -> Result<EntropyCurve, PhaseGraphError> {
    let n = coords.nrows();
    if k_min < 2 || k_min > k_max || k_max > n {
        return Err(PhaseGraphError::Range { k_min, k_max, n });
    }
    let dendrogram = build_dendrogram(coords)?;
    entropy_curve(&dendrogram, layout, k_min, k_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNode {
    pub phase: usize,
    pub occupancy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEdge {
    pub source: usize,
    pub target: usize,
    pub count: u64,
    pub prob: f64,
    pub dominant: bool,
}

/// Directed phase graph. Edges are grouped by source and, within a source,
/// ordered by descending probability (ties: smaller target first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub threshold: f64,
    pub nodes: Vec<PhaseNode>,
    pub edges: Vec<PhaseEdge>,
}

impl TransitionGraph {
    pub fn dominant_successors(&self, phase: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.source == phase && e.dominant)
            .map(|e| e.target)
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, PhaseGraphError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Marks, per source phase, the shortest prefix of its successors (by
/// descending probability) whose cumulative share strictly exceeds
/// `threshold`.
pub fn dominant_transitions(
    matrix: &TransitionMatrix,
    threshold: f64,
) -> Result<TransitionGraph, PhaseGraphError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PhaseGraphError::Threshold(threshold));
    }
    let nodes = (0..matrix.k)
        .map(|i| PhaseNode {
            phase: i,
            occupancy: matrix.occupancy[i],
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..matrix.k {
        let total = matrix.row_total(i);
        let mut targets: Vec<usize> = (0..matrix.k).filter(|&j| matrix.counts[i][j] > 0).collect();
        // counts order identically to probabilities and avoid rounding ties
        targets.sort_by(|&a, &b| matrix.counts[i][b].cmp(&matrix.counts[i][a]).then(a.cmp(&b)));
        let mut cumulative = 0u64;
        let mut reached = false;
        for j in targets {
            let count = matrix.counts[i][j];
            let dominant = !reached;
            cumulative += count;
            if cumulative as f64 > threshold * total as f64 {
                reached = true;
            }
            edges.push(PhaseEdge {
                source: i,
                target: j,
                count,
                prob: matrix.probs[i][j],
                dominant,
            });
        }
    }
    Ok(TransitionGraph {
        threshold,
        nodes,
        edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    /// Phase sequence starting at its smallest phase; the closing edge back to
    /// the first phase is implied.
    pub phases: Vec<usize>,
    /// Smallest edge probability along the cycle.
    pub min_prob: f64,
}

/// Simple cycles of the dominant-edge subgraph, ordered by descending
/// minimum edge probability, then length, then phase sequence.
pub fn extract_cycles(graph: &TransitionGraph, include_self_loops: bool) -> Vec<Cycle> {
    let k = graph.nodes.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for e in graph.edges.iter().filter(|e| e.dominant) {
        if e.source == e.target && !include_self_loops {
            continue;
        }
        adj[e.source].push((e.target, e.prob));
    }
    for a in &mut adj {
        a.sort_by_key(|x| x.0);
    }

    let mut cycles = Vec::new();
    let mut path = Vec::new();
    let mut probs = Vec::new();
    let mut on_path = vec![false; k];
    for start in 0..k {
        path.push(start);
        on_path[start] = true;
        walk(
            start,
            start,
            &adj,
            &mut path,
            &mut probs,
            &mut on_path,
            &mut cycles,
        );
        on_path[start] = false;
        path.pop();
    }
    cycles.sort_by(|a: &Cycle, b: &Cycle| {
        b.min_prob
            .total_cmp(&a.min_prob)
            .then(a.phases.len().cmp(&b.phases.len()))
            .then(a.phases.cmp(&b.phases))
    });
    cycles
}

/// Depth-first search restricted to nodes `>= start`, so each cycle is found
/// once, rooted at its smallest phase.
fn walk(
    start: usize,
    node: usize,
    adj: &[Vec<(usize, f64)>],
    path: &mut Vec<usize>,
    probs: &mut Vec<f64>,
    on_path: &mut [bool],
    out: &mut Vec<Cycle>,
) {
    for &(next, p) in &adj[node] {
        if next == start {
            probs.push(p);
            out.push(Cycle {
                phases: path.clone(),
                min_prob: probs.iter().copied().fold(f64::INFINITY, f64::min),
            });
            probs.pop();
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            path.push(next);
            probs.push(p);
            walk(start, next, adj, path, probs, on_path, out);
            probs.pop();
            path.pop();
            on_path[next] = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

pub fn export_graph(graph: &TransitionGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Json => {
            let mut s = serde_json::to_string_pretty(graph).expect("graph serializes");
            s.push('\n');
            s
        }
        GraphFormat::Dot => to_dot(graph),
    }
}

fn to_dot(graph: &TransitionGraph) -> String {
    let mut s = String::new();
    writeln!(s, "digraph phases {{").unwrap();
    writeln!(s, "  rankdir=LR;").unwrap();
    writeln!(s, "  node [shape=circle];").unwrap();
    for n in &graph.nodes {
        writeln!(s, "  {} [label=\"{}\\nN={}\"];", n.phase, n.phase, n.occupancy).unwrap();
    }
    for e in &graph.edges {
        let style = if e.dominant {
            ", style=bold, penwidth=2.5"
        } else {
            ", color=gray50"
        };
        writeln!(
            s,
            "  {} -> {} [label=\"{:.3}\"{}];",
            e.source, e.target, e.prob, style
        )
        .unwrap();
    }
    writeln!(s, "}}").unwrap();
    s
}

/// Cycle list CSV: `rank,min_prob,length,phases` with phases joined by `-`.
pub fn write_cycles_csv<W: Write>(writer: W, cycles: &[Cycle]) -> Result<(), PhaseGraphError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "min_prob", "length", "phases"])
        .map_err(std::io::Error::other)?;
    for (r, c) in cycles.iter().enumerate() {
        let phases: Vec<String> = c.phases.iter().map(usize::to_string).collect();
        w.write_record([
            r.to_string(),
            fmt_f64(c.min_prob),
            c.phases.len().to_string(),
            phases.join("-"),
        ])
        .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

/// Phases with more than one dominant successor, with those successors.
pub fn branching_phases(graph: &TransitionGraph) -> BTreeMap<usize, Vec<usize>> {
    graph
        .nodes
        .iter()
        .filter_map(|n| {
            let s = graph.dominant_successors(n.phase);
            (s.len() > 1).then_some((n.phase, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(lens: &[usize]) -> EpisodeLayout {
        EpisodeLayout::new(lens.iter().enumerate().map(|(i, &l)| (i as u64, l)).collect())
    }

    fn assign(labels: Vec<usize>, k: usize, lens: &[usize]) -> (PhaseAssignment, EpisodeLayout) {
        let l = layout(lens);
        (PhaseAssignment::with_k(labels, k, l.clone()).unwrap(), l)
    }

    #[test]
    fn counts_single_episode() {
        let (a, l) = assign(vec![0, 0, 1, 1, 0], 2, &[5]);
        let m = transition_counts(&a, &l).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(m.occupancy, vec![3, 2]);
    }

    #[test]
    fn counts_respect_episode_boundaries() {
        let (a, l) = assign(vec![0, 1, 1, 0], 2, &[2, 2]);
        let m = transition_counts(&a, &l).unwrap();
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.counts[1][0], 1);
        assert_eq!(m.counts[1][1], 0);
        assert_eq!(m.total_transitions(), 2);
    }

    #[test]
    fn misaligned_assignment() {
        let (a, _) = assign(vec![0, 1, 1, 0], 2, &[2, 2]);
        assert!(matches!(
            transition_counts(&a, &layout(&[4])),
            Err(PhaseGraphError::Alignment(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        let m = TransitionMatrix::from_counts(vec![vec![0, 5], vec![7, 0]], vec![5, 8]).unwrap();
        assert_eq!(cluster_entropy(&m, 0), 0.0);
        assert_eq!(conditional_entropy(&m), 0.0);

        let m = TransitionMatrix::from_counts(vec![vec![3; 4]; 4], vec![12; 4]).unwrap();
        assert!((cluster_entropy(&m, 2) - 4f64.ln()).abs() < 1e-15);

        let m = TransitionMatrix::from_counts(vec![vec![2, 2], vec![5, 5]], vec![6, 10]).unwrap();
        assert!((conditional_entropy(&m) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_row_contributes_zero() {
        let m = TransitionMatrix::from_counts(vec![vec![0, 3], vec![0, 0]], vec![3, 1]).unwrap();
        assert_eq!(m.empty_rows(), vec![1]);
        assert_eq!(cluster_entropy(&m, 1), 0.0);
    }

    #[test]
    fn rejects_rows_exceeding_occupancy() {
        assert!(TransitionMatrix::from_counts(vec![vec![2, 2], vec![0, 0]], vec![3, 1]).is_err());
    }

    #[test]
    fn dominant_prefix_rule() {
        let m = TransitionMatrix::from_counts(vec![vec![9, 1], vec![1, 1]], vec![10, 2]).unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        assert_eq!(g.dominant_successors(0), vec![0]);

        let m = TransitionMatrix::from_counts(
            vec![vec![50, 45, 5], vec![0, 0, 1], vec![1, 0, 0]],
            vec![100, 1, 1],
        )
        .unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        assert_eq!(g.dominant_successors(0), vec![0, 1]);

        // exactly 70% is not "more than" 70%
        let m = TransitionMatrix::from_counts(vec![vec![7, 3], vec![0, 1]], vec![10, 1]).unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        assert_eq!(g.dominant_successors(0), vec![0, 1]);
        assert!(dominant_transitions(&m, 1.0).is_err());
    }

    #[test]
    fn single_loop_cycle() {
        let m =
            TransitionMatrix::from_counts(vec![vec![0, 5, 0], vec![0, 0, 5], vec![5, 0, 0]], vec![5, 5, 5])
                .unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        let c = extract_cycles(&g, false);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].phases, vec![0, 1, 2]);
    }

    #[test]
    fn self_loops_excluded_by_default() {
        let m = TransitionMatrix::from_counts(vec![vec![5, 0], vec![0, 5]], vec![6, 6]).unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        assert!(extract_cycles(&g, false).is_empty());
        assert_eq!(extract_cycles(&g, true).len(), 2);
    }

    #[test]
    fn dot_marks_dominant_edges_bold() {
        let m = TransitionMatrix::from_counts(vec![vec![0, 4], vec![4, 0]], vec![5, 4]).unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        let dot = export_graph(&g, GraphFormat::Dot);
        assert_eq!(dot.matches("style=bold").count(), 2);
        assert!(dot.contains("N=5"));
    }

    #[test]
    fn json_round_trip() {
        let m =
            TransitionMatrix::from_counts(vec![vec![1, 2, 0], vec![0, 3, 7], vec![1, 1, 1]], vec![3, 11, 3])
                .unwrap();
        let g = dominant_transitions(&m, 0.7).unwrap();
        let back = TransitionGraph::from_json(&export_graph(&g, GraphFormat::Json)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = TransitionMatrix::from_counts(vec![vec![1, 2], vec![3, 0]], vec![4, 3]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "source,N,0,1\n0,4,1,2\n1,3,3,0\n");
        assert_eq!(TransitionMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn sweep_range_validation() {
        let coords = ndarray::Array2::<f64>::zeros((5, 2));
        let l = layout(&[5]);
        assert!(select_k(coords.view(), &l, 3, 2).is_err());
        assert!(select_k(coords.view(), &l, 1, 2).is_err());
        assert!(select_k(coords.view(), &l, 2, 6).is_err());
    }

    #[test]
    fn argmin_prefers_smaller_k_on_ties() {
        assert_eq!(argmin(&[(2, 0.5), (3, 0.1), (4, 0.1)]), Some(3));
    }
}
