use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{files, Failure, PipelineConfig, PipelineError, Sink};
use crate::clustering::{build_dendrogram, cut_dendrogram, PhaseAssignment};
use crate::dataset::{
    generate_synthetic, load_trajectories, write_trajectories_to, FeatureSchema, TrajectoryDataset,
};
use crate::embedding::{embed_dataset, read_embedding_csv, write_embedding_csv, write_loss_trace_csv};
use crate::phase_graph::{
    dominant_transitions, entropy_curve, export_graph, extract_cycles, transition_counts, write_cycles_csv,
    EntropyCurve, GraphFormat, TransitionGraph,
};
use crate::surrogate::{
    attribution_gap, attribution_heatmap, branch_split, fit_phase_models, heatmap_svg, predict,
    r2_from_predictions, write_heatmap_csv, write_mask_csv, AdditiveSurrogate, AttributionHeatmap,
    SurrogateError,
};
use crate::util::{fmt_f64, mix_seed};

type Result<T> = std::result::Result<T, Failure>;

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Loads a trajectory CSV with the schema file when given, otherwise with
/// names taken from the CSV header.
pub fn load_dataset(
    path: &Path,
    schema: Option<&Path>,
) -> std::result::Result<TrajectoryDataset, PipelineError> {
    load(path, schema).map_err(|f| f.at("load"))
}

fn load(path: &Path, schema: Option<&Path>) -> Result<TrajectoryDataset> {
    let schema = match schema {
        Some(s) => FeatureSchema::load(s)?,
        None => {
            let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
            let header: Vec<String> = rdr
                .headers()
                .map_err(|e| Failure::data(e.to_string()))?
                .iter()
                .map(|s| s.trim().to_string())
                .collect();
            FeatureSchema::from_csv_header(&header)?
        }
    };
    Ok(load_trajectories(path, &schema)?)
}

fn read_assignment(path: &Path) -> Result<PhaseAssignment> {
    Ok(PhaseAssignment::read_csv(BufReader::new(File::open(path)?))?)
}

/// Writes the synthetic dataset, its schema and the ground-truth phases.
pub fn synth_stage(cfg: &PipelineConfig, sink: &mut Sink) -> std::result::Result<(), PipelineError> {
    (|| -> Result<()> {
        let (ds, truth) = generate_synthetic(&cfg.synthetic_config())?;
        sink.write(
            files::DATASET,
            &csv_bytes(|b| Ok(write_trajectories_to(b, &ds)?))?,
        )?;
        sink.write(files::SCHEMA, ds.schema().to_text().as_bytes())?;
        sink.write(files::TRUTH, &csv_bytes(|b| Ok(truth.write_csv(b)?))?)?;
        Ok(())
    })()
    .map_err(|f| f.at("synth"))
}

/// Validates the configured input and records its schema in the bundle.
pub fn ingest_stage(cfg: &PipelineConfig, sink: &mut Sink) -> std::result::Result<(), PipelineError> {
    (|| -> Result<()> {
        let input = cfg
            .input
            .as_deref()
            .ok_or_else(|| Failure::data("no input configured"))?;
        let ds = load(input, cfg.schema.as_deref())?;
        sink.write(files::SCHEMA, ds.schema().to_text().as_bytes())?;
        Ok(())
    })()
    .map_err(|f| f.at("ingest"))
}

pub fn embed_stage(
    cfg: &PipelineConfig,
    dataset: &Path,
    schema: Option<&Path>,
    sink: &mut Sink,
) -> std::result::Result<(), PipelineError> {
    (|| -> Result<()> {
        let ds = load(dataset, schema)?;
        let emb = embed_dataset(&ds, &cfg.embedding_params())?;
        let layout = ds.layout();
        sink.write(
            files::EMBEDDING,
            &csv_bytes(|b| Ok(write_embedding_csv(b, emb.coords.view(), &layout)?))?,
        )?;
        sink.write(
            files::LOSS_TRACE,
            &csv_bytes(|b| Ok(write_loss_trace_csv(b, &emb.loss_trace)?))?,
        )?;
        Ok(())
    })()
    .map_err(|f| f.at("embed"))
}

/// Entropy sweep over the Ward dendrogram of the embedding; writes the curve
/// and the assignment at `K*`.
pub fn sweep_stage(
    cfg: &PipelineConfig,
    embedding: &Path,
    sink: &mut Sink,
) -> std::result::Result<EntropyCurve, PipelineError> {
    (|| -> Result<EntropyCurve> {
        let (coords, layout) = read_embedding_csv(BufReader::new(File::open(embedding)?))?;
        let dendrogram = build_dendrogram(coords.view())?;
        let curve = entropy_curve(&dendrogram, &layout, cfg.k_min, cfg.k_max)?;
        let assignment = cut_dendrogram(&dendrogram, curve.k_star, &layout)?;
        sink.write(files::ENTROPY_CURVE, &csv_bytes(|b| Ok(curve.write_csv(b)?))?)?;
        sink.write(files::ASSIGNMENT, &csv_bytes(|b| Ok(assignment.write_csv(b)?))?)?;
        Ok(curve)
    })()
    .map_err(|f| f.at("sweep"))
}

pub fn graph_stage(
    cfg: &PipelineConfig,
    assignment: &Path,
    sink: &mut Sink,
) -> std::result::Result<TransitionGraph, PipelineError> {
    (|| -> Result<TransitionGraph> {
        let a = read_assignment(assignment)?;
        let matrix = transition_counts(&a, a.layout())?;
        let graph = dominant_transitions(&matrix, cfg.threshold)?;
        let cycles = extract_cycles(&graph, cfg.include_self_loops);
        sink.write(
            files::TRANSITION_MATRIX,
            &csv_bytes(|b| Ok(matrix.write_csv(b)?))?,
        )?;
        sink.write(
            files::GRAPH_DOT,
            export_graph(&graph, GraphFormat::Dot).as_bytes(),
        )?;
        sink.write(
            files::GRAPH_JSON,
            export_graph(&graph, GraphFormat::Json).as_bytes(),
        )?;
        sink.write(files::CYCLES, &csv_bytes(|b| Ok(write_cycles_csv(b, &cycles)?))?)?;
        Ok(graph)
    })()
    .map_err(|f| f.at("graph"))
}

/// Per-phase fit outcome.
enum PhaseFit {
    Fitted {
        models: Vec<AdditiveSurrogate>,
        r2: Vec<Option<f64>>,
        heatmap: AttributionHeatmap,
    },
    Skipped,
}

fn fit_phase(
    cfg: &PipelineConfig,
    phase: usize,
    states: &Array2<f64>,
    actions: &Array2<f64>,
) -> Result<PhaseFit> {
    let n = states.nrows();
    if n < cfg.min_phase_samples {
        return Ok(PhaseFit::Skipped);
    }
    let mut boost = cfg.boosting_config();
    boost.seed = mix_seed(boost.seed, &format!("phase-{phase}"));

    let (models, r2) = if cfg.holdout > 0.0 {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.holdout_seed(), &format!("phase-{phase}")));
        idx.shuffle(&mut rng);
        let n_eval = ((n as f64) * cfg.holdout).ceil() as usize;
        let (eval, train) = idx.split_at(n_eval);
        if train.len() < cfg.min_phase_samples || eval.len() < 2 {
            return Ok(PhaseFit::Skipped);
        }
        let (ts, ta) = (states.select(Axis(0), train), actions.select(Axis(0), train));
        let (es, ea) = (states.select(Axis(0), eval), actions.select(Axis(0), eval));
        let models = fit_phase_models(phase, ts.view(), ta.view(), &boost)?;
        let r2 = models
            .iter()
            .map(|m| {
                let preds: Vec<f64> = es.rows().into_iter().map(|s| predict(m, s)).collect();
                r2_from_predictions(ea.column(m.action_dim), &preds).ok()
            })
            .collect();
        (models, r2)
    } else {
        let models = fit_phase_models(phase, states.view(), actions.view(), &boost)?;
        let r2 = models.iter().map(|m| Some(m.training_r2)).collect();
        (models, r2)
    };
    let heatmap = attribution_heatmap(&models, states.view(), cfg.top_rule())?;
    Ok(PhaseFit::Fitted { models, r2, heatmap })
}

fn write_heatmap_files(
    cfg: &PipelineConfig,
    sink: &mut Sink,
    stem: &str,
    title: &str,
    heatmap: &AttributionHeatmap,
    schema: &FeatureSchema,
) -> Result<()> {
    let (f, a) = (schema.state_names(), schema.action_names());
    sink.write(
        &format!("{stem}.csv"),
        &csv_bytes(|b| Ok(write_heatmap_csv(b, heatmap, f, a)?))?,
    )?;
    sink.write(
        &format!("{stem}_mask.csv"),
        &csv_bytes(|b| Ok(write_mask_csv(b, &heatmap.top_mask, f, a)?))?,
    )?;
    let alt = heatmap.mask(cfg.alternate_top_rule());
    let alt_name = match cfg.alternate_top_rule() {
        crate::surrogate::TopRule::Quantile(_) => "quantile",
        crate::surrogate::TopRule::FractionOfMax(_) => "fraction_of_max",
    };
    sink.write(
        &format!("{stem}_mask_{alt_name}.csv"),
        &csv_bytes(|b| Ok(write_mask_csv(b, &alt, f, a)?))?,
    )?;
    sink.write(
        &format!("{stem}.svg"),
        heatmap_svg(heatmap, f, a, title).as_bytes(),
    )?;
    Ok(())
}

/// Branch requests: explicit ones first, then (if enabled) every phase of
/// `graph` with two or more dominant successors, using its two most likely.
fn branch_requests(cfg: &PipelineConfig, graph: Option<&TransitionGraph>) -> Vec<[usize; 3]> {
    let mut req = cfg.branches.clone();
    if let (true, Some(g)) = (cfg.auto_branches, graph) {
        for node in &g.nodes {
            let succ = g.dominant_successors(node.phase);
            if succ.len() >= 2 {
                let r = [node.phase, succ[0], succ[1]];
                if !req.contains(&r) {
                    req.push(r);
                }
            }
        }
    }
    req
}

/// Fits per-phase surrogates and heatmaps and the successor-conditioned
/// branch analyses.
pub fn surrogate_stage(
    cfg: &PipelineConfig,
    dataset: &Path,
    schema: Option<&Path>,
    assignment: &Path,
    graph: Option<&Path>,
    sink: &mut Sink,
) -> std::result::Result<(), PipelineError> {
    (|| -> Result<()> {
        let ds = load(dataset, schema)?;
        let a = read_assignment(assignment)?;
        if a.layout() != &ds.layout() {
            return Err(Failure::data(
                "assignment does not cover the dataset's episodes and steps",
            ));
        }
        let graph = match graph {
            Some(p) => Some(TransitionGraph::from_json(&std::fs::read_to_string(p)?)?),
            None => None,
        };
        let schema = ds.schema().clone();
        let states = ds.state_matrix();
        let actions = ds.action_matrix();
        let mut members = vec![Vec::new(); a.k()];
        for (i, &l) in a.labels().iter().enumerate() {
            members[l].push(i);
        }

        let fits: Vec<PhaseFit> = members
            .par_iter()
            .enumerate()
            .map(|(p, rows)| {
                fit_phase(
                    cfg,
                    p,
                    &states.select(Axis(0), rows),
                    &actions.select(Axis(0), rows),
                )
            })
            .collect::<Result<_>>()?;

        let mut r2_rows = Vec::new();
        for (p, fit) in fits.iter().enumerate() {
            let mut row = vec![p.to_string(), members[p].len().to_string()];
            match fit {
                PhaseFit::Fitted { models, r2, heatmap } => {
                    for m in models {
                        sink.write(
                            &format!("models/phase_{p}_a{}.json", m.action_dim),
                            m.to_json(&schema).as_bytes(),
                        )?;
                    }
                    write_heatmap_files(
                        cfg,
                        sink,
                        &format!("heatmaps/phase_{p}"),
                        &format!("phase {p}"),
                        heatmap,
                        &schema,
                    )?;
                    row.extend(r2.iter().map(|v| v.map_or("NA".into(), fmt_f64)));
                    let defined: Vec<f64> = r2.iter().flatten().copied().collect();
                    row.push(if defined.len() == r2.len() {
                        fmt_f64(defined.iter().sum::<f64>() / defined.len() as f64)
                    } else {
                        "NA".into()
                    });
                }
                PhaseFit::Skipped => {
                    row.extend(std::iter::repeat_n("NA".to_string(), schema.action_dim() + 1));
                }
            }
            r2_rows.push(row);
        }
        let mut header = vec!["phase".to_string(), "n_states".to_string()];
        header.extend(schema.action_names().iter().cloned());
        header.push("mean".into());
        sink.write(files::R2, &grid_csv(&header, &r2_rows)?)?;

        let mut summary = Vec::new();
        for [p, sa, sb] in branch_requests(cfg, graph.as_ref()) {
            let mut row = vec![p.to_string(), sa.to_string(), sb.to_string()];
            let split = match branch_split(&a, &ds, p, sa, sb) {
                Ok(s) => s,
                Err(SurrogateError::EmptySubset(s)) => {
                    row.extend(["0", "0", "0", "0", "0", "0"].map(String::from));
                    row.push(format!("no runs exit to {s}"));
                    summary.push(row);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            row.extend([
                split.runs[0].to_string(),
                split.runs[1].to_string(),
                split.states[0].nrows().to_string(),
                split.states[1].nrows().to_string(),
                split.dropped_runs.to_string(),
                split.dropped_states.to_string(),
            ]);
            let sides: Vec<PhaseFit> = (0..2)
                .into_par_iter()
                .map(|s| fit_phase(cfg, p, &split.states[s], &split.actions[s]))
                .collect::<Result<_>>()?;
            match (&sides[0], &sides[1]) {
                (PhaseFit::Fitted { heatmap: ha, .. }, PhaseFit::Fitted { heatmap: hb, .. }) => {
                    for (succ, h) in [(sa, ha), (sb, hb)] {
                        write_heatmap_files(
                            cfg,
                            sink,
                            &format!("branches/phase_{p}_to_{succ}"),
                            &format!("phase {p} -> {succ}"),
                            h,
                            &schema,
                        )?;
                    }
                    let gap = attribution_gap(ha, hb);
                    let rows: Vec<Vec<String>> = schema
                        .state_names()
                        .iter()
                        .zip(&gap)
                        .map(|(n, g)| vec![n.clone(), fmt_f64(*g)])
                        .collect();
                    sink.write(
                        &format!("branches/phase_{p}_{sa}_vs_{sb}_gap.csv"),
                        &grid_csv(&["feature".into(), "gap".into()], &rows)?,
                    )?;
                    row.push("ok".into());
                }
                _ => row.push("too few states".into()),
            }
            summary.push(row);
        }
        let header: Vec<String> = [
            "phase",
            "succ_a",
            "succ_b",
            "runs_a",
            "runs_b",
            "states_a",
            "states_b",
            "dropped_runs",
            "dropped_states",
            "status",
        ]
        .map(String::from)
        .to_vec();
        sink.write(files::BRANCH_SUMMARY, &grid_csv(&header, &summary)?)?;
        Ok(())
    })()
    .map_err(|f| f.at("surrogate"))
}

fn grid_csv(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::from(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::from(e.into_error()))
}
