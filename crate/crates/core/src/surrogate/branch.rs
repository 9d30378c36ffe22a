use ndarray::{Array2, Axis};

use super::SurrogateError;
use crate::clustering::PhaseAssignment;
use crate::dataset::TrajectoryDataset;

/// Visits of one phase partitioned by the phase entered when the visit ends.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSplit {
    pub phase: usize,
    pub successors: [usize; 2],
    pub states: [Array2<f64>; 2],
    pub actions: [Array2<f64>; 2],
    pub runs: [usize; 2],
    /// Runs that left to another phase or hit the end of their episode.
    pub dropped_runs: usize,
    pub dropped_states: usize,
}

/// Splits every contiguous run of `phase` by the label that follows it.
pub fn branch_split(
    assignment: &PhaseAssignment,
    dataset: &TrajectoryDataset,
    phase: usize,
    successor_a: usize,
    successor_b: usize,
) -> Result<BranchSplit, SurrogateError> {
    let layout = dataset.layout();
    if assignment.layout() != &layout {
        return Err(SurrogateError::Shape(
            "assignment is not aligned with the dataset".into(),
        ));
    }
    if successor_a == successor_b {
        return Err(SurrogateError::Config("successors must differ".into()));
    }
    let labels = assignment.labels();
    let mut rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut runs = [0usize; 2];
    let (mut dropped_runs, mut dropped_states) = (0, 0);
    for range in layout.ranges() {
        let ep = &labels[range.clone()];
        let mut t = 0;
        while t < ep.len() {
            if ep[t] != phase {
                t += 1;
                continue;
            }
            let start = t;
            while t < ep.len() && ep[t] == phase {
                t += 1;
            }
            let side = match ep.get(t) {
                Some(&next) if next == successor_a => Some(0),
                Some(&next) if next == successor_b => Some(1),
                _ => None,
            };
            match side {
                Some(s) => {
                    runs[s] += 1;
                    rows[s].extend(range.start + start..range.start + t);
                }
                None => {
                    dropped_runs += 1;
                    dropped_states += t - start;
                }
            }
        }
    }
    for (s, succ) in [successor_a, successor_b].into_iter().enumerate() {
        if runs[s] == 0 {
            return Err(SurrogateError::EmptySubset(succ));
        }
    }
    let states = dataset.state_matrix();
    let actions = dataset.action_matrix();
    Ok(BranchSplit {
        phase,
        successors: [successor_a, successor_b],
        states: [states.select(Axis(0), &rows[0]), states.select(Axis(0), &rows[1])],
        actions: [
            actions.select(Axis(0), &rows[0]),
            actions.select(Axis(0), &rows[1]),
        ],
        runs,
        dropped_runs,
        dropped_states,
    })
}
