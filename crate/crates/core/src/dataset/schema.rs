use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

/// Ordered state and action labels of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    state_names: Vec<String>,
    action_names: Vec<String>,
    state_units: Option<Vec<String>>,
    action_units: Option<Vec<String>>,
}

impl FeatureSchema {
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        state_units: Option<Vec<String>>,
        action_units: Option<Vec<String>>,
    ) -> Result<Self> {
        check_names("state", &state_names)?;
        check_names("action", &action_names)?;
        if let Some(u) = &state_units {
            if u.len() != state_names.len() {
                return Err(DatasetError::Schema(format!(
                    "{} state units for {} state names",
                    u.len(),
                    state_names.len()
                )));
            }
        }
        if let Some(u) = &action_units {
            if u.len() != action_names.len() {
                return Err(DatasetError::Schema(format!(
                    "{} action units for {} action names",
                    u.len(),
                    action_names.len()
                )));
            }
        }
        Ok(Self {
            state_names,
            action_names,
            state_units,
            action_units,
        })
    }

    /// Generic labels `x0..` and `u0..`.
    pub fn generic(state_dim: usize, action_dim: usize) -> Result<Self> {
        Self::new(
            (0..state_dim).map(|i| format!("x{i}")).collect(),
            (0..action_dim).map(|i| format!("u{i}")).collect(),
            None,
            None,
        )
    }

    /// HalfCheetah-v5: 17 observation features and 6 joint torques.
    pub fn half_cheetah() -> Self {
        let states = [
            ("Root Z", "m"),
            ("Root Ang", "rad"),
            ("B-Thigh", "rad"),
            ("B-Shin", "rad"),
            ("B-Foot", "rad"),
            ("F-Thigh", "rad"),
            ("F-Shin", "rad"),
            ("F-Foot", "rad"),
            ("Vel Root X", "m/s"),
            ("Vel Root Z", "m/s"),
            ("Vel Root Ang", "rad/s"),
            ("Vel B-Thigh", "rad/s"),
            ("Vel B-Shin", "rad/s"),
            ("Vel B-Foot", "rad/s"),
            ("Vel F-Thigh", "rad/s"),
            ("Vel F-Shin", "rad/s"),
            ("Vel F-Foot", "rad/s"),
        ];
        let actions = ["B-Thigh", "B-Shin", "B-Foot", "F-Thigh", "F-Shin", "F-Foot"];
        Self::new(
            states.iter().map(|(n, _)| n.to_string()).collect(),
            actions.iter().map(|n| n.to_string()).collect(),
            Some(states.iter().map(|(_, u)| u.to_string()).collect()),
            None,
        )
        .expect("preset labels are unique")
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn state_units(&self) -> Option<&[String]> {
        self.state_units.as_deref()
    }

    pub fn action_units(&self) -> Option<&[String]> {
        self.action_units.as_deref()
    }

    pub fn state_dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_names.len()
    }

    /// CSV header: `episode,step,s_<name>...,a_<name>...`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["episode".to_string(), "step".to_string()];
        h.extend(self.state_names.iter().map(|n| format!("s_{n}")));
        h.extend(self.action_names.iter().map(|n| format!("a_{n}")));
        h
    }

    /// Parses the key–value schema text:
    ///
    /// ```text
    /// # comment
    /// state_names = Root Z, Root Ang
    /// action_names = B-Thigh
    /// state_units = m, rad
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut states = None;
        let mut actions = None;
        let mut state_units = None;
        let mut action_units = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(DatasetError::Parse {
                    line: i + 1,
                    message: format!("expected `key = value`, found {line:?}"),
                });
            };
            let list: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
            let slot = match key.trim() {
                "state_names" => &mut states,
                "action_names" => &mut actions,
                "state_units" => &mut state_units,
                "action_units" => &mut action_units,
                other => {
                    return Err(DatasetError::Parse {
                        line: i + 1,
                        message: format!("unknown schema key {other:?}"),
                    })
                }
            };
            if slot.replace(list).is_some() {
                return Err(DatasetError::Parse {
                    line: i + 1,
                    message: format!("duplicate key {:?}", key.trim()),
                });
            }
        }
        let states = states.ok_or_else(|| DatasetError::Schema("missing state_names".into()))?;
        let actions = actions.ok_or_else(|| DatasetError::Schema("missing action_names".into()))?;
        Self::new(states, actions, state_units, action_units)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "state_names = {}\naction_names = {}\n",
            self.state_names.join(", "),
            self.action_names.join(", ")
        );
        if let Some(u) = &self.state_units {
            out.push_str(&format!("state_units = {}\n", u.join(", ")));
        }
        if let Some(u) = &self.action_units {
            out.push_str(&format!("action_units = {}\n", u.join(", ")));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Recovers names (without units) from a trajectory CSV header.
    pub fn from_csv_header(header: &[String]) -> Result<Self> {
        if header.len() < 2 || header[0] != "episode" || header[1] != "step" {
            return Err(DatasetError::Schema("header must start with episode,step".into()));
        }
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for col in &header[2..] {
            match (col.strip_prefix("s_"), col.strip_prefix("a_")) {
                (Some(n), _) if actions.is_empty() => states.push(n.to_string()),
                (_, Some(n)) => actions.push(n.to_string()),
                _ => {
                    return Err(DatasetError::Schema(format!(
                        "column {col:?} is neither s_<name> before the actions nor a_<name>"
                    )))
                }
            }
        }
        Self::new(states, actions, None, None)
    }
}

fn check_names(kind: &str, names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(DatasetError::Schema(format!(
            "at least one {kind} name is required"
        )));
    }
    let mut seen = HashSet::new();
    for n in names {
        if n.is_empty() || n.contains(',') || n.contains('\n') || n.trim() != n {
            return Err(DatasetError::Schema(format!("invalid {kind} name {n:?}")));
        }
        if !seen.insert(n) {
            return Err(DatasetError::Schema(format!("duplicate {kind} name {n:?}")));
        }
    }
    Ok(())
}
