//! State–action trajectory corpora: schema, validation, CSV I/O and the
//! synthetic phase generator used as a ground-truth oracle.

mod io;
mod schema;
mod synthetic;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use thiserror::Error;

pub use io::{load_trajectories, read_trajectories, write_trajectories, write_trajectories_to};
pub use schema::FeatureSchema;
pub use synthetic::{action_rules, generate_synthetic, ActionRules, BranchSpec, SyntheticConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: u64,
    /// One row per step, `D_s` columns.
    pub states: Array2<f64>,
    /// One row per step, `D_a` columns.
    pub actions: Array2<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
}

/// Episode ids and lengths in storage order. Flat state index `t` of a corpus
/// maps to `(episode, step)` through this layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpisodeLayout {
    spans: Vec<(u64, usize)>,
}

impl EpisodeLayout {
    pub fn new(spans: Vec<(u64, usize)>) -> Self {
        Self { spans }
    }

    pub fn spans(&self) -> &[(u64, usize)] {
        &self.spans
    }

    pub fn n_states(&self) -> usize {
        self.spans.iter().map(|&(_, len)| len).sum()
    }

    pub fn n_transitions(&self) -> usize {
        self.spans.iter().map(|&(_, len)| len.saturating_sub(1)).sum()
    }

    /// Half-open flat index ranges, one per episode.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut start = 0;
        self.spans.iter().map(move |&(_, len)| {
            let r = start..start + len;
            start += len;
            r
        })
    }

    /// `(episode_id, step)` for every flat index, in order.
    pub fn index(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.spans
            .iter()
            .flat_map(|&(id, len)| (0..len).map(move |step| (id, step)))
    }

    /// Rebuilds a layout from an `(episode, step)` column pair, checking the
    /// same ordering rules as trajectory files. `first_line` is the file line
    /// number of the first pair, used in error messages.
    pub fn from_index(pairs: &[(u64, usize)], first_line: usize) -> Result<Self> {
        let mut spans: Vec<(u64, usize)> = Vec::new();
        for (offset, &(episode, step)) in pairs.iter().enumerate() {
            let line = first_line + offset;
            match spans.last_mut() {
                Some((id, len)) if *id == episode => {
                    if step != *len {
                        return Err(DatasetError::Data {
                            line,
                            message: format!(
                                "non-consecutive steps in episode {episode}: expected {}, found {step}",
                                *len
                            ),
                        });
                    }
                    *len += 1;
                }
                last => {
                    if let Some((id, _)) = last {
                        if episode < *id {
                            return Err(DatasetError::Data {
                                line,
                                message: format!("episodes not sorted: {episode} follows {}", *id),
                            });
                        }
                    }
                    if step != 0 {
                        return Err(DatasetError::Data {
                            line,
                            message: format!(
                                "non-consecutive steps: episode {episode} starts at step {step}"
                            ),
                        });
                    }
                    spans.push((episode, 1));
                }
            }
        }
        Ok(Self { spans })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    episodes: Vec<Episode>,
    schema: FeatureSchema,
}

impl TrajectoryDataset {
    pub fn new(episodes: Vec<Episode>, schema: FeatureSchema) -> Result<Self> {
        let ds = schema.state_dim();
        let da = schema.action_dim();
        let mut last_id = None;
        for ep in &episodes {
            if ep.states.ncols() != ds || ep.actions.ncols() != da {
                return Err(DatasetError::Schema(format!(
                    "episode {} has {}+{} columns, schema expects {ds}+{da}",
                    ep.episode_id,
                    ep.states.ncols(),
                    ep.actions.ncols()
                )));
            }
            if ep.states.nrows() != ep.actions.nrows() {
                return Err(DatasetError::Invalid(format!(
                    "episode {} has {} states but {} actions",
                    ep.episode_id,
                    ep.states.nrows(),
                    ep.actions.nrows()
                )));
            }
            if ep.len() < 2 {
                return Err(DatasetError::Invalid(format!(
                    "episode {} has {} step(s); at least 2 are required",
                    ep.episode_id,
                    ep.len()
                )));
            }
            if last_id.is_some_and(|id| id >= ep.episode_id) {
                return Err(DatasetError::Invalid(format!(
                    "episode ids must be strictly increasing (found {} after {})",
                    ep.episode_id,
                    last_id.unwrap()
                )));
            }
            last_id = Some(ep.episode_id);
            if ep.states.iter().chain(ep.actions.iter()).any(|v| !v.is_finite()) {
                return Err(DatasetError::Invalid(format!(
                    "episode {} contains non-finite values",
                    ep.episode_id
                )));
            }
        }
        if episodes.is_empty() {
            return Err(DatasetError::Invalid("no episodes".into()));
        }
        Ok(Self { episodes, schema })
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_states(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.len() - 1).sum()
    }

    pub fn layout(&self) -> EpisodeLayout {
        EpisodeLayout::new(self.episodes.iter().map(|e| (e.episode_id, e.len())).collect())
    }

    /// All states stacked in storage order (`n × D_s`).
    pub fn state_matrix(&self) -> Array2<f64> {
        stack(
            self.episodes.iter().map(|e| e.states.view()),
            self.schema.state_dim(),
        )
    }

    /// All actions stacked in storage order (`n × D_a`).
    pub fn action_matrix(&self) -> Array2<f64> {
        stack(
            self.episodes.iter().map(|e| e.actions.view()),
            self.schema.action_dim(),
        )
    }
}

fn stack<'a>(views: impl Iterator<Item = ArrayView2<'a, f64>>, cols: usize) -> Array2<f64> {
    let views: Vec<_> = views.collect();
    if views.is_empty() {
        return Array2::zeros((0, cols));
    }
    concatenate(Axis(0), &views).expect("episode blocks share column count")
}

/// Per-column z-scoring; constant columns are only centered.
pub fn standardize(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
    }
    out
}
