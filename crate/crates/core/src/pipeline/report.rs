use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{files, Failure, PipelineConfig, PipelineError, Sink};
use crate::clustering::PhaseAssignment;
use crate::phase_graph::{
    branching_phases, extract_cycles, Cycle, EntropyCurve, TransitionGraph, TransitionMatrix,
};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What a completed run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub root: PathBuf,
    pub k_star: usize,
    pub h_c: f64,
    pub cycles: Vec<Cycle>,
    /// Every bundle file except the manifest itself, sorted by path.
    pub files: Vec<ManifestEntry>,
    pub summary: String,
}

impl ReportBundle {
    pub fn entry(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let bad = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let header = rdr.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()).map_err(bad))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn fmt_r2(field: &str) -> String {
    field
        .parse::<f64>()
        .map_or_else(|_| field.to_string(), |v| format!("{v:.3}"))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<ManifestEntry>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let rel = path
            .strip_prefix(root)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if rel == files::MANIFEST || rel == files::LOCK || rel == files::FAILED {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path)?;
            out.push(ManifestEntry {
                path: rel,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    Ok(())
}

/// Writes `summary.txt` from the stage outputs in the sink's directory, then
/// `manifest.json` hashing every bundle file.
pub fn report_stage(
    cfg: &PipelineConfig,
    sink: &mut Sink,
) -> std::result::Result<ReportBundle, PipelineError> {
    build(cfg, sink).map_err(|f| f.at("report"))
}

fn build(cfg: &PipelineConfig, sink: &mut Sink) -> Result<ReportBundle> {
    let assignment = PhaseAssignment::read_csv(BufReader::new(File::open(sink.path(files::ASSIGNMENT))?))?;
    let curve = EntropyCurve::read_csv(BufReader::new(File::open(sink.path(files::ENTROPY_CURVE))?))?;
    let matrix =
        TransitionMatrix::read_csv(BufReader::new(File::open(sink.path(files::TRANSITION_MATRIX))?))?;
    let graph = TransitionGraph::from_json(&fs::read_to_string(sink.path(files::GRAPH_JSON))?)?;
    let cycles = extract_cycles(&graph, cfg.include_self_loops);
    let h_c = curve.value_at(curve.k_star).expect("k_star is on the curve");
    let layout = assignment.layout();

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, "phasemap report").unwrap();
    writeln!(w, "================").unwrap();
    writeln!(
        w,
        "data: {} states in {} episodes ({})",
        layout.n_states(),
        layout.spans().len(),
        match &cfg.input {
            Some(p) => format!("input {}", p.display()),
            None => format!("synthetic, {} phases", cfg.synth_phases),
        }
    )
    .unwrap();
    writeln!(w, "seed: {}", cfg.seed).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "phase identification").unwrap();
    writeln!(w, "  entropy sweep K = {}..={}", cfg.k_min, cfg.k_max).unwrap();
    writeln!(w, "  K* = {}", curve.k_star).unwrap();
    writeln!(w, "  H_c(K*) = {h_c:.6} nats").unwrap();
    let empty = matrix.empty_rows();
    if !empty.is_empty() {
        writeln!(
            w,
            "  warning: phases without successors at K* (entropy taken as 0): {empty:?}"
        )
        .unwrap();
    }
    writeln!(w, "  dominant threshold = {}", graph.threshold).unwrap();
    if cycles.is_empty() {
        writeln!(w, "  no dominant cycles").unwrap();
    }
    for (i, c) in cycles.iter().enumerate() {
        let path: Vec<String> = c
            .phases
            .iter()
            .chain(&c.phases[..1])
            .map(usize::to_string)
            .collect();
        writeln!(
            w,
            "  pattern {}: {} (min p = {:.3})",
            i + 1,
            path.join(" -> "),
            c.min_prob
        )
        .unwrap();
    }
    for (p, succ) in branching_phases(&graph) {
        writeln!(w, "  branching phase {p} -> {succ:?}").unwrap();
    }

    writeln!(w).unwrap();
    let (header, rows) = read_records(&sink.path(files::R2))?;
    let r2_kind = if cfg.holdout > 0.0 { "holdout" } else { "training" };
    writeln!(w, "surrogate R² ({r2_kind})").unwrap();
    for row in &rows {
        let cells: Vec<String> = header[2..header.len() - 1]
            .iter()
            .zip(&row[2..row.len() - 1])
            .map(|(a, v)| format!("{a} {}", fmt_r2(v)))
            .collect();
        writeln!(
            w,
            "  phase {} (n = {}): mean {} | {}",
            row[0],
            row[1],
            fmt_r2(&row[row.len() - 1]),
            cells.join(", ")
        )
        .unwrap();
    }
    writeln!(
        w,
        "  top cells: {:?}; alternate rule masks written alongside",
        cfg.top_rule()
    )
    .unwrap();

    let (_, branches) = read_records(&sink.path(files::BRANCH_SUMMARY))?;
    if !branches.is_empty() {
        writeln!(w).unwrap();
        writeln!(w, "branch analysis").unwrap();
    }
    for b in &branches {
        let (p, sa, sb) = (&b[0], &b[1], &b[2]);
        writeln!(
            w,
            "  phase {p}: ->{sa} {} runs / {} states, ->{sb} {} runs / {} states, dropped {} runs / {} states, {}",
            b[3], b[5], b[4], b[6], b[7], b[8], b[9]
        )
        .unwrap();
        if b[9] == "ok" {
            let (_, gaps) = read_records(&sink.path(&format!("branches/phase_{p}_{sa}_vs_{sb}_gap.csv")))?;
            let mut ranked: Vec<(usize, &str, f64)> = gaps
                .iter()
                .enumerate()
                .map(|(i, g)| (i, g[0].as_str(), g[1].parse().unwrap_or(f64::NAN)))
                .collect();
            ranked.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)));
            let top: Vec<String> = ranked
                .iter()
                .take(3)
                .map(|(_, n, g)| format!("{n} {g:.4}"))
                .collect();
            writeln!(w, "    largest attribution gaps: {}", top.join(", ")).unwrap();
        }
    }
    sink.write(files::SUMMARY, s.as_bytes())?;

    let mut entries = Vec::new();
    collect_files(sink.root(), sink.root(), &mut entries)?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let mut echo = cfg.clone();
    echo.out = None;
    let input = match &cfg.input {
        Some(p) => Some(serde_json::json!({
            "path": p,
            "sha256": sha256_hex(&fs::read(p)?),
        })),
        None => None,
    };
    let manifest = serde_json::json!({
        "schema_version": super::SCHEMA_VERSION,
        "tool": "phasemap",
        "version": env!("CARGO_PKG_VERSION"),
        "config": echo,
        "seeds": {
            "synth": cfg.synthetic_config().seed,
            "embed": cfg.embedding_params().seed,
            "surrogate": cfg.boosting_config().seed,
            "holdout": cfg.holdout_seed(),
        },
        "input": input,
        "files": entries,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    sink.write(files::MANIFEST, text.as_bytes())?;

    Ok(ReportBundle {
        root: sink.root().to_path_buf(),
        k_star: curve.k_star,
        h_c,
        cycles,
        files: entries,
        summary: s,
    })
}
