//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::ArrayView2;
use phasemap::{Dendrogram, PhaseAssignment, PipelineConfig, ReportBundle, TransitionMatrix};

/// Occupancy and next-cluster counts of the 10-cluster HalfCheetah table.
pub const TABLE2: [(u64, [u64; 10]); 10] = [
    (764, [137, 563, 3, 0, 0, 0, 16, 44, 0, 0]),
    (622, [0, 5, 610, 5, 0, 0, 0, 1, 0, 0]),
    (645, [6, 0, 20, 612, 5, 0, 0, 0, 2, 0]),
    (621, [1, 0, 0, 3, 609, 7, 0, 0, 0, 0]),
    (615, [77, 0, 0, 0, 0, 537, 0, 0, 0, 0]),
    (546, [276, 22, 1, 0, 0, 2, 244, 0, 0, 0]),
    (260, [0, 0, 6, 0, 0, 0, 0, 206, 48, 0]),
    (251, [0, 0, 0, 1, 0, 0, 0, 0, 250, 0]),
    (324, [0, 0, 0, 0, 1, 0, 0, 0, 24, 299]),
    (352, [267, 32, 0, 0, 0, 0, 0, 0, 0, 53]),
];

/// Row entropies of [`TABLE2`] computed offline in double precision.
pub const TABLE2_H: [f64; 10] = [
    0.7999901180533388,
    0.10555919305034066,
    0.2566319553891335,
    0.10437345716055847,
    0.37756171278233136,
    0.8660538419210835,
    0.5833327998247555,
    0.025989873531936835,
    0.28473758871774313,
    0.7127095503119598,
];
pub const TABLE2_HC: f64 = 0.4227156748216233;

pub fn table2_matrix() -> TransitionMatrix {
    TransitionMatrix::from_counts(
        TABLE2.iter().map(|r| r.1.to_vec()).collect(),
        TABLE2.iter().map(|r| r.0).collect(),
    )
    .unwrap()
}

/// Row entropies and their occupancy-weighted mean, straight from counts.
pub fn entropy_oracle(rows: &[(u64, [u64; 10])]) -> (Vec<f64>, f64) {
    let total: u64 = rows.iter().map(|r| r.0).sum();
    let mut hs = Vec::new();
    let mut hc = 0.0;
    for (n, counts) in rows {
        let t: u64 = counts.iter().sum();
        let mut h = 0.0;
        for &c in counts {
            if c > 0 {
                let p = c as f64 / t as f64;
                h -= p * p.ln();
            }
        }
        hc += *n as f64 / total as f64 * h;
        hs.push(h);
    }
    (hs, hc)
}

/// A merge as the pair of leaf sets it joins, smaller minimum leaf first.
pub type LeafMerge = (Vec<usize>, Vec<usize>, f64);

fn ordered(a: Vec<usize>, b: Vec<usize>, cost: f64) -> LeafMerge {
    if a[0] < b[0] {
        (a, b, cost)
    } else {
        (b, a, cost)
    }
}

pub fn dendrogram_leaf_merges(d: &Dendrogram) -> Vec<LeafMerge> {
    let mut sets: Vec<Vec<usize>> = (0..d.n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    for m in &d.merges {
        let (a, b) = (sets[m.a].clone(), sets[m.b].clone());
        let mut joined = [a.clone(), b.clone()].concat();
        joined.sort_unstable();
        sets.push(joined);
        out.push(ordered(a, b, m.cost));
    }
    out
}

/// Ward agglomeration by exhaustive search over all cluster pairs, with costs
/// recomputed from member coordinates at every step.
pub fn brute_force_ward(points: ArrayView2<f64>) -> Vec<LeafMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..points.nrows()).map(|i| vec![i]).collect();
    let centroid = |c: &[usize]| -> Vec<f64> {
        (0..points.ncols())
            .map(|j| c.iter().map(|&i| points[[i, j]]).sum::<f64>() / c.len() as f64)
            .collect()
    };
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (ca, cb) = (centroid(&clusters[i]), centroid(&clusters[j]));
                let d2: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
                let (na, nb) = (clusters[i].len() as f64, clusters[j].len() as f64);
                let cost = na * nb / (na + nb) * d2;
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, i, j));
                }
            }
        }
        let (cost, i, j) = best.unwrap();
        let b = clusters.remove(j);
        let a = clusters.remove(i);
        let mut joined = [a.clone(), b.clone()].concat();
        joined.sort_unstable();
        clusters.push(joined);
        out.push(ordered(a, b, cost));
    }
    out
}

/// Fuzzy cross entropy written out term by term.
pub fn loss_oracle(edges: &[(usize, usize, f64)], coords: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for &(i, j, w) in edges {
        let d2 = (coords[[i, 0]] - coords[[j, 0]]).powi(2) + (coords[[i, 1]] - coords[[j, 1]]).powi(2);
        let v = 1.0 / (1.0 + d2);
        let attract = if w > 0.0 { w * (w.ln() - v.ln()) } else { 0.0 };
        let repel = if w < 1.0 {
            (1.0 - w) * ((1.0 - w).ln() - (1.0 - v).ln())
        } else {
            0.0
        };
        total += attract + repel;
    }
    total
}

pub fn synthetic_config(phases: usize, seed: u64, out: &Path) -> PipelineConfig {
    PipelineConfig {
        seed,
        synth_phases: phases,
        out: Some(out.to_path_buf()),
        ..Default::default()
    }
}

pub fn read_assignment(path: &Path) -> PhaseAssignment {
    PhaseAssignment::read_csv(BufReader::new(File::open(path).unwrap())).unwrap()
}

pub fn read_matrix(path: &Path) -> TransitionMatrix {
    TransitionMatrix::read_csv(BufReader::new(File::open(path).unwrap())).unwrap()
}

/// Majority relabeling from generator phases to recovered phases, `None`
/// when it is not a bijection.
pub fn phase_mapping(truth: &PhaseAssignment, found: &PhaseAssignment) -> Option<Vec<usize>> {
    let mut votes = vec![BTreeMap::<usize, usize>::new(); truth.k()];
    for (&t, &f) in truth.labels().iter().zip(found.labels()) {
        *votes[t].entry(f).or_default() += 1;
    }
    let map: Vec<usize> = votes
        .iter()
        .map(|v| {
            v.iter()
                .max_by_key(|(l, c)| (**c, std::cmp::Reverse(**l)))
                .map(|(l, _)| *l)
        })
        .collect::<Option<_>>()?;
    let mut seen = map.clone();
    seen.sort_unstable();
    seen.dedup();
    (seen.len() == map.len() && map.len() == found.k()).then_some(map)
}

/// `cycle` (generator phases, in order) relabeled and rotated to start at its
/// smallest phase, the form cycles are reported in.
pub fn relabel_cycle(cycle: &[usize], map: &[usize]) -> Vec<usize> {
    let mapped: Vec<usize> = cycle.iter().map(|&p| map[p]).collect();
    let start = (0..mapped.len()).min_by_key(|&i| mapped[i]).unwrap();
    mapped[start..].iter().chain(&mapped[..start]).copied().collect()
}

/// Whether a synthetic cycle run recovered the generator: K* = P, low
/// conditional entropy, and a single dominant cycle matching the generator's.
pub fn recovered_cycle(bundle: &ReportBundle, phases: usize) -> Result<(), String> {
    if bundle.k_star != phases {
        return Err(format!("K* = {}", bundle.k_star));
    }
    if bundle.h_c >= 0.05 {
        return Err(format!("H_c = {}", bundle.h_c));
    }
    let truth = read_assignment(&bundle.root.join("truth.csv"));
    let found = read_assignment(&bundle.root.join("assignment.csv"));
    let map = phase_mapping(&truth, &found).ok_or("phases do not map one to one")?;
    let expected = relabel_cycle(&(0..phases).collect::<Vec<_>>(), &map);
    let got: Vec<&[usize]> = bundle.cycles.iter().map(|c| c.phases.as_slice()).collect();
    if got != [expected.as_slice()] {
        return Err(format!("cycles {got:?}, expected [{expected:?}]"));
    }
    Ok(())
}

pub fn read_loss_trace(path: &Path) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect()
}
