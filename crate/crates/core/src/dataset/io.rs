use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{DatasetError, Episode, EpisodeLayout, FeatureSchema, Result, TrajectoryDataset};
use crate::util::fmt_f64;

pub fn load_trajectories(path: &Path, schema: &FeatureSchema) -> Result<TrajectoryDataset> {
    read_trajectories(BufReader::new(File::open(path)?), schema)
}

pub fn read_trajectories<R: Read>(reader: R, schema: &FeatureSchema) -> Result<TrajectoryDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = schema.csv_header();
    if header != expected {
        return Err(DatasetError::Schema(format!(
            "header has {} columns {:?}, schema expects {} columns {:?}",
            header.len(),
            header,
            expected.len(),
            expected
        )));
    }
    let ds = schema.state_dim();
    let da = schema.action_dim();

    let mut index = Vec::new();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut first_line = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        first_line.get_or_insert(line);
        if rec.len() != expected.len() {
            return Err(DatasetError::Schema(format!(
                "line {line}: row has {} fields, schema expects {}",
                rec.len(),
                expected.len()
            )));
        }
        let episode: u64 = parse_field(&rec[0], line, "episode")?;
        let step: usize = parse_field(&rec[1], line, "step")?;
        index.push((episode, step));
        for (col, field) in rec.iter().enumerate().skip(2) {
            let v: f64 = parse_field(field, line, &expected[col])?;
            if !v.is_finite() {
                return Err(DatasetError::Data {
                    line,
                    message: format!("non-finite value {field:?} in column {}", expected[col]),
                });
            }
            if col < 2 + ds {
                states.push(v);
            } else {
                actions.push(v);
            }
        }
    }
    let layout = EpisodeLayout::from_index(&index, first_line.unwrap_or(2))?;

    let mut episodes = Vec::with_capacity(layout.spans().len());
    for (&(id, len), range) in layout.spans().iter().zip(layout.ranges()) {
        let s = states[range.start * ds..range.end * ds].to_vec();
        let a = actions[range.start * da..range.end * da].to_vec();
        episodes.push(Episode {
            episode_id: id,
            states: Array2::from_shape_vec((len, ds), s).expect("row-major block"),
            actions: Array2::from_shape_vec((len, da), a).expect("row-major block"),
        });
    }
    TrajectoryDataset::new(episodes, schema.clone())
}

pub fn write_trajectories(path: &Path, dataset: &TrajectoryDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectories_to(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

pub fn write_trajectories_to<W: Write>(writer: W, dataset: &TrajectoryDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(dataset.schema().csv_header())
        .map_err(|e| csv_error(e, 0))?;
    let mut row = Vec::new();
    for ep in dataset.episodes() {
        for t in 0..ep.len() {
            row.clear();
            row.push(ep.episode_id.to_string());
            row.push(t.to_string());
            row.extend(ep.states.row(t).iter().map(|&v| fmt_f64(v)));
            row.extend(ep.actions.row(t).iter().map(|&v| fmt_f64(v)));
            w.write_record(&row).map_err(|e| csv_error(e, 0))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.trim().parse().map_err(|e| DatasetError::Parse {
        line,
        message: format!("cannot parse {column} value {field:?}: {e}"),
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> DatasetError {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec!["p".into(), "q".into()], vec!["u".into()], None, None).unwrap()
    }

    const TWO_BY_THREE: &str = "episode,step,s_p,s_q,a_u\n\
        0,0,0.1,0.2,1\n0,1,0.3,0.4,2\n0,2,0.5,0.6,3\n\
        1,0,1.1,1.2,4\n1,1,1.3,1.4,5\n1,2,1.5,1.6,6\n";

    #[test]
    fn counts_episodes_and_transitions() {
        let d = read_trajectories(TWO_BY_THREE.as_bytes(), &schema()).unwrap();
        assert_eq!(d.episodes().len(), 2);
        assert_eq!(d.n_transitions(), 4);
        assert_eq!(d.episodes()[1].states[[2, 1]], 1.6);
        assert_eq!(d.episodes()[0].actions[[1, 0]], 2.0);
    }

    #[test]
    fn skipped_step_is_rejected() {
        let text = "episode,step,s_p,s_q,a_u\n0,0,0,0,0\n0,2,0,0,0\n";
        let err = read_trajectories(text.as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("non-consecutive steps"), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_value_names_line() {
        let text = "episode,step,s_p,s_q,a_u\n0,0,0,0,0\n0,1,abc,0,0\n";
        let err = read_trajectories(text.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn nan_is_a_data_error() {
        let text = "episode,step,s_p,s_q,a_u\n0,0,0,NaN,0\n0,1,0,0,0\n";
        let err = read_trajectories(text.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Data { line: 2, .. }), "{err}");
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let text = "episode,step,s_p,a_u\n0,0,0,0\n0,1,0,0\n";
        let err = read_trajectories(text.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Schema(_)), "{err}");
    }

    #[test]
    fn missing_action_field_is_rejected() {
        let text = "episode,step,s_p,s_q,a_u\n0,0,0,0,0\n0,1,0,0\n";
        let err = read_trajectories(text.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Schema(_)), "{err}");
    }

    #[test]
    fn half_cheetah_header_loads() {
        let schema = FeatureSchema::half_cheetah();
        let mut text = schema.csv_header().join(",");
        text.push('\n');
        for step in 0..3 {
            let vals: Vec<String> = (0..23).map(|i| format!("{}", i as f64 * 0.01)).collect();
            text.push_str(&format!("7,{step},{}\n", vals.join(",")));
        }
        let d = read_trajectories(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.schema().state_names()[1], "Root Ang");
        assert_eq!(d.schema().action_dim(), 6);
        assert_eq!(d.n_states(), 3);
    }

    #[test]
    fn write_then_read_is_identity() {
        let d = read_trajectories(TWO_BY_THREE.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_trajectories_to(&mut buf, &d).unwrap();
        let back = read_trajectories(buf.as_slice(), &schema()).unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        write_trajectories_to(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }
}
