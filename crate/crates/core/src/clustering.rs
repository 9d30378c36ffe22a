//! Ward agglomerative clustering of embedded states.
//!
//! One dendrogram is built per embedding and cut at every `K` of the sweep.
//! Merge costs are the Ward increase in within-cluster sum of squares,
//! `Δ(A, B) = |A||B| / (|A| + |B|) · ‖c_A − c_B‖²`.

use std::io::{Read, Write};

use ndarray::ArrayView2;
use thiserror::Error;

use crate::dataset::{DatasetError, EpisodeLayout};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 points to cluster, got {0}")]
    TooFewPoints(usize),
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("K = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error(transparent)]
    Format(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One agglomeration step. Cluster ids follow the usual convention: leaves
/// are `0..n`, and merge `s` creates cluster `n + s`. `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

/// Per-state phase labels in `0..K`, aligned with an episode layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseAssignment {
    k: usize,
    labels: Vec<usize>,
    layout: EpisodeLayout,
}

impl PhaseAssignment {
    /// Labels must be in range and every phase must be used.
    pub fn new(labels: Vec<usize>, k: usize, layout: EpisodeLayout) -> Result<Self, ClusterError> {
        let a = Self::with_k(labels, k, layout)?;
        let mut used = vec![false; k];
        for &l in &a.labels {
            used[l] = true;
        }
        if let Some(p) = used.iter().position(|u| !u) {
            return Err(ClusterError::InvalidAssignment(format!("phase {p} is empty")));
        }
        Ok(a)
    }

    /// Like [`PhaseAssignment::new`] but allows unused phases (ground-truth
    /// labels of a generator whose branch never fires, for instance).
    pub fn with_k(labels: Vec<usize>, k: usize, layout: EpisodeLayout) -> Result<Self, ClusterError> {
        if labels.len() != layout.n_states() {
            return Err(ClusterError::InvalidAssignment(format!(
                "{} labels for {} states",
                labels.len(),
                layout.n_states()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(ClusterError::InvalidAssignment(format!(
                "label {bad} out of range for K = {k}"
            )));
        }
        Ok(Self { k, labels, layout })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn layout(&self) -> &EpisodeLayout {
        &self.layout
    }

    /// Assignment CSV: `episode,step,phase`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ClusterError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["episode", "step", "phase"]).map_err(csv_io)?;
        for ((ep, step), &l) in self.layout.index().zip(&self.labels) {
            w.write_record([ep.to_string(), step.to_string(), l.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an assignment CSV; `K` is one more than the largest label.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ClusterError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_parse)?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header != ["episode", "step", "phase"] {
            return Err(DatasetError::Schema(format!(
                "assignment header must be episode,step,phase, found {}",
                header.join(",")
            ))
            .into());
        }
        let mut index = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_parse)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| -> Result<usize, ClusterError> {
                rec.get(i).and_then(|f| f.trim().parse().ok()).ok_or_else(|| {
                    DatasetError::Parse {
                        line,
                        message: format!("bad field {i} in {:?}", rec.as_slice()),
                    }
                    .into()
                })
            };
            index.push((field(0)? as u64, field(1)?));
            labels.push(field(2)?);
        }
        let layout = EpisodeLayout::from_index(&index, 2)?;
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        Self::with_k(labels, k, layout)
    }
}

fn csv_io(e: csv::Error) -> ClusterError {
    ClusterError::Io(std::io::Error::other(e))
}

fn csv_parse(e: csv::Error) -> ClusterError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    DatasetError::Parse {
        line,
        message: e.to_string(),
    }
    .into()
}

/// Condensed upper-triangular distance storage.
struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

/// Builds the full Ward dendrogram.
///
/// Each slot holds the cluster whose smallest leaf index equals the slot, and
/// every slot tracks its nearest active slot with a larger index. The global
/// minimum over slots is therefore the lexicographically smallest
/// `(min leaf of A, min leaf of B)` among the cheapest pairs, which is the
/// tie rule. Distances are maintained with the Lance–Williams Ward update.
pub fn build_dendrogram(points: ArrayView2<f64>) -> Result<Dendrogram, ClusterError> {
    let n = points.nrows();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    if let Some(i) = points
        .rows()
        .into_iter()
        .position(|r| r.iter().any(|v| !v.is_finite()))
    {
        return Err(ClusterError::NonFinite(i));
    }

    let mut dist = Condensed {
        n,
        data: vec![0.0; n * (n - 1) / 2],
    };
    for i in 0..n {
        let pi = points.row(i);
        for j in i + 1..n {
            let d2: f64 = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = dist.idx(i, j);
            dist.data[k] = 0.5 * d2;
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nn_d = vec![f64::INFINITY; n];

    let rescan = |x: usize, dist: &Condensed, active: &[bool], nn: &mut [usize], nn_d: &mut [f64]| {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (y, _) in active.iter().enumerate().skip(x + 1).filter(|(_, &a)| a) {
            let d = dist.get(x, y);
            if d < best_d {
                best_d = d;
                best = y;
            }
        }
        nn[x] = best;
        nn_d[x] = best_d;
    };
    for x in 0..n {
        rescan(x, &dist, &active, &mut nn, &mut nn_d);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut i = usize::MAX;
        let mut best = f64::INFINITY;
        for x in 0..n {
            if active[x] && nn[x] != usize::MAX && (i == usize::MAX || nn_d[x] < best) {
                i = x;
                best = nn_d[x];
            }
        }
        let j = nn[i];
        let cost = best;
        let (sa, sb) = (size[i] as f64, size[j] as f64);

        for x in 0..n {
            if !active[x] || x == i || x == j {
                continue;
            }
            let sx = size[x] as f64;
            let lw = ((sa + sx) * dist.get(i, x) + (sb + sx) * dist.get(j, x) - sx * cost) / (sa + sb + sx);
            // Ward is reducible: a merged cluster is never closer than the merge cost.
            dist.set(i, x, lw.max(cost));
        }

        let (ida, idb) = (id[i].min(id[j]), id[i].max(id[j]));
        merges.push(Merge {
            a: ida,
            b: idb,
            cost,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        id[i] = n + step;

        for x in 0..n {
            if !active[x] {
                continue;
            }
            if x == i || ((nn[x] == i || nn[x] == j) && x < j) {
                rescan(x, &dist, &active, &mut nn, &mut nn_d);
            } else if x < i {
                let d = dist.get(x, i);
                if d < nn_d[x] || (d == nn_d[x] && i < nn[x]) {
                    nn[x] = i;
                    nn_d[x] = d;
                }
            }
        }
    }
    Ok(Dendrogram { n, merges })
}

/// Flat labels after the first `n − K` merges, numbered by first appearance
/// in storage order.
pub fn cut_labels(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = dendrogram.n;
    if k == 0 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // representative leaf of every cluster id
    let mut rep: Vec<usize> = (0..n).collect();
    rep.reserve(n);
    for m in dendrogram.merges.iter().take(n - k) {
        let ra = find(&mut parent, rep[m.a]);
        let rb = find(&mut parent, rep[m.b]);
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
        rep.push(lo);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let r = find(&mut parent, leaf);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels.push(label_of_root[r]);
    }
    debug_assert_eq!(next, k);
    Ok(labels)
}

pub fn cut_dendrogram(
    dendrogram: &Dendrogram,
    k: usize,
    layout: &EpisodeLayout,
) -> Result<PhaseAssignment, ClusterError> {
    let labels = cut_labels(dendrogram, k)?;
    PhaseAssignment::new(labels, k, layout.clone())
}
