use std::fmt::Write as _;
use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{contributions, AdditiveSurrogate, SurrogateError};
use crate::util::fmt_f64;

/// Which heatmap cells count as "top".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "level", rename_all = "snake_case")]
pub enum TopRule {
    /// Normalized value at least this fraction of the range.
    FractionOfMax(f64),
    /// Raw value at or above this quantile of all cells (nearest rank).
    Quantile(f64),
}

impl Default for TopRule {
    fn default() -> Self {
        TopRule::FractionOfMax(0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionHeatmap {
    /// `values[i][d]`: mean |f_i(s_i)| of the model for action `d`.
    pub values: Vec<Vec<f64>>,
    /// Min–max scaled copy of `values`; all zero when `values` is constant.
    pub normalized: Vec<Vec<f64>>,
    pub top_mask: Vec<Vec<bool>>,
    pub rule: TopRule,
    /// Set when every cell holds the same value.
    pub constant: bool,
}

impl AttributionHeatmap {
    pub fn from_values(values: Vec<Vec<f64>>, rule: TopRule) -> Self {
        let flat = values.iter().flatten().copied();
        let lo = flat.clone().fold(f64::INFINITY, f64::min);
        let hi = flat.fold(f64::NEG_INFINITY, f64::max);
        // NaN-safe: a NaN range also counts as constant
        let constant = hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater);
        let normalized = values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| if constant { 0.0 } else { (v - lo) / (hi - lo) })
                    .collect()
            })
            .collect();
        let mut h = Self {
            top_mask: Vec::new(),
            values,
            normalized,
            rule,
            constant,
        };
        h.top_mask = h.mask(rule);
        h
    }

    pub fn mask(&self, rule: TopRule) -> Vec<Vec<bool>> {
        if self.constant {
            return self.values.iter().map(|r| vec![false; r.len()]).collect();
        }
        match rule {
            TopRule::FractionOfMax(f) => self
                .normalized
                .iter()
                .map(|r| r.iter().map(|&v| v >= f).collect())
                .collect(),
            TopRule::Quantile(q) => {
                let mut sorted: Vec<f64> = self.values.iter().flatten().copied().collect();
                sorted.sort_by(f64::total_cmp);
                let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
                let thr = sorted[rank - 1];
                self.values
                    .iter()
                    .map(|r| r.iter().map(|&v| v >= thr).collect())
                    .collect()
            }
        }
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    pub fn n_actions(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// `(feature, action)` of every masked cell, row-major.
    pub fn masked_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for (i, row) in self.top_mask.iter().enumerate() {
            for (d, &m) in row.iter().enumerate() {
                if m {
                    cells.push((i, d));
                }
            }
        }
        cells
    }
}

/// Mean absolute contribution of every feature to every model over `states`.
pub fn attribution_heatmap(
    models: &[AdditiveSurrogate],
    states: ArrayView2<f64>,
    rule: TopRule,
) -> Result<AttributionHeatmap, SurrogateError> {
    let ds = states.ncols();
    if models.iter().any(|m| m.n_features() != ds) {
        return Err(SurrogateError::Shape(format!(
            "models must all use {ds} features"
        )));
    }
    if states.nrows() == 0 {
        return Err(SurrogateError::TooFewSamples { n: 0, min: 1 });
    }
    let n = states.nrows() as f64;
    let mut values = vec![vec![0.0; models.len()]; ds];
    for (d, m) in models.iter().enumerate() {
        for s in states.rows() {
            for (i, c) in contributions(m, s).into_iter().enumerate() {
                values[i][d] += c.abs();
            }
        }
    }
    values.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(AttributionHeatmap::from_values(values, rule))
}

/// Per feature, the largest raw-value difference over actions between two
/// heatmaps of the same phase.
pub fn attribution_gap(a: &AttributionHeatmap, b: &AttributionHeatmap) -> Vec<f64> {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect()
}

/// Raw values, rows = state features, columns = actions.
pub fn write_heatmap_csv<W: Write>(
    writer: W,
    heatmap: &AttributionHeatmap,
    feature_names: &[String],
    action_names: &[String],
) -> Result<(), SurrogateError> {
    write_grid(writer, feature_names, action_names, &heatmap.values, |v| {
        fmt_f64(*v)
    })
}

pub fn write_mask_csv<W: Write>(
    writer: W,
    mask: &[Vec<bool>],
    feature_names: &[String],
    action_names: &[String],
) -> Result<(), SurrogateError> {
    write_grid(writer, feature_names, action_names, mask, |m| {
        u8::from(*m).to_string()
    })
}

fn write_grid<W: Write, T>(
    writer: W,
    rows: &[String],
    cols: &[String],
    grid: &[Vec<T>],
    fmt: impl Fn(&T) -> String,
) -> Result<(), SurrogateError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["feature".to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header).map_err(std::io::Error::other)?;
    for (name, row) in rows.iter().zip(grid) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(&fmt));
        w.write_record(&rec).map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

const CELL: usize = 28;
const LEFT: usize = 140;
const TOP: usize = 90;

/// White-to-red grid of normalized values; masked cells are outlined.
pub fn heatmap_svg(
    heatmap: &AttributionHeatmap,
    feature_names: &[String],
    action_names: &[String],
    title: &str,
) -> String {
    let (rows, cols) = (heatmap.n_features(), heatmap.n_actions());
    let width = LEFT + cols * CELL + 20;
    let height = TOP + rows * CELL + 20;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="8" y="16" font-size="13">{}</text>"#, escape(title)).unwrap();
    for (d, name) in action_names.iter().enumerate().take(cols) {
        let x = LEFT + d * CELL + CELL / 2;
        writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#,
            TOP - 6,
            TOP - 6,
            escape(name)
        )
        .unwrap();
    }
    for i in 0..rows {
        let y = TOP + i * CELL;
        let label = feature_names.get(i).map_or("", String::as_str);
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            y + CELL / 2 + 4,
            escape(label)
        )
        .unwrap();
        for d in 0..cols {
            let v = heatmap.normalized[i][d].clamp(0.0, 1.0);
            let gb = (255.0 * (1.0 - v)).round() as u8;
            let x = LEFT + d * CELL;
            let outline = if heatmap.top_mask[i][d] {
                r#" stroke="black" stroke-width="2.5""#
            } else {
                r##" stroke="#dddddd" stroke-width="0.5""##
            };
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#ff{gb:02x}{gb:02x}"{outline}><title>{:.4}</title></rect>"##,
                heatmap.values[i][d]
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
