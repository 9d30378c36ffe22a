//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the report always prints.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    brute_force_ward, dendrogram_leaf_merges, entropy_oracle, loss_oracle, read_loss_trace, read_matrix,
    recovered_cycle, synthetic_config, table2_matrix, TABLE2,
};
use ndarray::{Array1, Array2, Axis};
use phasemap::dataset::action_rules;
use phasemap::pipeline::files;
use phasemap::surrogate::{attribution_gap, fit_phase_models};
use phasemap::{
    attribution_heatmap, branch_split, build_dendrogram, cluster_entropy, conditional_entropy, contributions,
    dominant_transitions, embedding_loss, generate_synthetic, predict, run_pipeline, BoostingConfig,
    BranchSpec, FuzzyGraph, PhaseAssignment, PipelineConfig, SyntheticConfig, TopRule, TransitionGraph,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail}; {secs:.1} s)"),
            Err(detail) => {
                self.failures += 1;
                println!("criterion {id} {name}: FAIL ({detail}; {secs:.1} s)");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Entropy fixture from the 10-cluster table.
fn entropy_fixture() -> Outcome {
    let start = Instant::now();
    let m = table2_matrix();
    let (hs, hc) = entropy_oracle(&TABLE2);
    for (i, h) in hs.iter().enumerate() {
        let got = cluster_entropy(&m, i);
        ensure((got - h).abs() <= 1e-9, || format!("H_{i} = {got}, oracle {h}"))?;
    }
    let got = conditional_entropy(&m);
    ensure((got - hc).abs() <= 1e-9, || format!("H_c = {got}, oracle {hc}"))?;
    let g = dominant_transitions(&m, 0.7).map_err(|e| e.to_string())?;
    ensure(g.dominant_successors(0) == [1], || {
        format!("row 0 dominant {:?}", g.dominant_successors(0))
    })?;
    ensure(g.dominant_successors(5) == [0, 6], || {
        format!("row 5 dominant {:?}", g.dominant_successors(5))
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("H_c = {got:.6} nats, rows within 1e-9"))
}

struct CycleRun {
    phases: usize,
    seed: u64,
    verdict: Result<(), String>,
    secs: f64,
    loss: (f64, f64),
}

fn phase_recovery(runs: &[CycleRun]) -> Outcome {
    let mut summary = Vec::new();
    let mut failed = false;
    for phases in [3, 5, 10] {
        let of_p: Vec<&CycleRun> = runs.iter().filter(|r| r.phases == phases).collect();
        let good = of_p.iter().filter(|r| r.verdict.is_ok()).count();
        let slowest = of_p.iter().map(|r| r.secs).fold(0.0, f64::max);
        summary.push(format!(
            "P={phases}: {good}/{} recovered, slowest {slowest:.1} s",
            of_p.len()
        ));
        for r in of_p.iter().filter(|r| r.verdict.is_err()) {
            summary.push(format!("seed {} {}", r.seed, r.verdict.as_ref().unwrap_err()));
        }
        failed |= good < 9 || slowest >= 120.0;
    }
    if failed {
        Err(summary.join("; "))
    } else {
        Ok(summary.join("; "))
    }
}

fn run_cycles(tmp: &Path) -> Vec<CycleRun> {
    let mut runs = Vec::new();
    for phases in [3, 5, 10] {
        for seed in 0..10 {
            let out = tmp.join(format!("cycle_{phases}_{seed}"));
            let t = Instant::now();
            let result = run_pipeline(&synthetic_config(phases, seed, &out));
            let secs = t.elapsed().as_secs_f64();
            let (verdict, loss) = match result {
                Ok(bundle) => {
                    let trace = read_loss_trace(&out.join(files::LOSS_TRACE));
                    (
                        recovered_cycle(&bundle, phases),
                        (trace[0], *trace.last().unwrap()),
                    )
                }
                Err(e) => (Err(e.to_string()), (f64::NAN, f64::NAN)),
            };
            let _ = fs::remove_dir_all(&out);
            runs.push(CycleRun {
                phases,
                seed,
                verdict,
                secs,
                loss,
            });
        }
    }
    runs
}

fn branch_detection(tmp: &Path) -> Outcome {
    let out = tmp.join("branch");
    let cfg = PipelineConfig {
        synth_branch: Some([5, 0, 6]),
        synth_branch_prob: 0.5,
        ..synthetic_config(10, 0, &out)
    };
    let bundle = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let m = read_matrix(&out.join(files::TRANSITION_MATRIX));
    let hs: Vec<f64> = (0..m.k).map(|i| cluster_entropy(&m, i)).collect();
    let high: Vec<usize> = (0..m.k).filter(|&i| hs[i] > 0.5).collect();
    let fmt = |hs: &[f64]| hs.iter().map(|h| format!("{h:.3}")).collect::<Vec<_>>().join(",");
    ensure(high.len() == 1, || {
        format!(
            "K* = {}, phases above 0.5 nats: {high:?}, H = [{}]",
            m.k,
            fmt(&hs)
        )
    })?;
    let b = high[0];
    ensure((0..m.k).all(|i| i == b || hs[i] < 0.1), || {
        format!("other rows not below 0.1: [{}]", fmt(&hs))
    })?;
    ensure((hs[b] - std::f64::consts::LN_2).abs() <= 0.1, || {
        format!("H_branch = {}", hs[b])
    })?;
    let g = TransitionGraph::from_json(&fs::read_to_string(out.join(files::GRAPH_JSON)).unwrap())
        .map_err(|e| e.to_string())?;
    let succ = g.dominant_successors(b);
    ensure(succ.len() == 2, || {
        format!("branch phase {b} dominant successors {succ:?}")
    })?;
    let lengths: BTreeSet<usize> = bundle.cycles.iter().map(|c| c.phases.len()).collect();
    ensure(
        bundle.cycles.len() == 2 && lengths == BTreeSet::from([6, 10]),
        || {
            format!(
                "cycles {:?}",
                bundle.cycles.iter().map(|c| &c.phases).collect::<Vec<_>>()
            )
        },
    )?;
    let through_branch = bundle.cycles.iter().all(|c| c.phases.contains(&b));
    ensure(through_branch, || "a cycle avoids the branch phase".into())?;
    let _ = fs::remove_dir_all(&out);
    Ok(format!(
        "K* = {}, branch phase H = {:.4} nats, successors {succ:?}, cycle lengths {lengths:?}",
        bundle.k_star, hs[b]
    ))
}

fn ward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 150;
    for inst in 0..instances {
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=4);
        let pts = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
        let dendro = build_dendrogram(pts.view()).map_err(|e| e.to_string())?;
        let got = dendrogram_leaf_merges(&dendro);
        let want = brute_force_ward(pts.view());
        for (s, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure(g.0 == w.0 && g.1 == w.1, || {
                format!("instance {inst} merge {s}: {g:?} vs {w:?}")
            })?;
            ensure((g.2 - w.2).abs() <= 1e-9 * w.2.max(1.0), || {
                format!("instance {inst} merge {s} cost")
            })?;
        }
        for w in dendro.merges.windows(2) {
            ensure(w[1].cost >= w[0].cost, || {
                format!("instance {inst}: costs decrease")
            })?;
        }
    }
    Ok(format!("{instances} instances, n <= 10"))
}

fn embedding_objective(runs: &[CycleRun]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut worst_rigid: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.35) {
                    edges.push((i, j, rng.random_range(0.001..=1.0)));
                }
            }
        }
        let g = FuzzyGraph::from_edges(n, edges).map_err(|e| e.to_string())?;
        let z = Array2::from_shape_fn((n, 2), |_| rng.random_range(-5.0..5.0));
        let loss = embedding_loss(&g, z.view());
        worst = worst.max((loss - loss_oracle(&g.edges, z.view())).abs());

        let (s, c) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
        let shift = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        let moved = Array2::from_shape_fn((n, 2), |(i, k)| {
            let (x, y) = (z[[i, 0]], z[[i, 1]]);
            (if k == 0 { c * x - s * y } else { s * x + c * y }) + shift[k]
        });
        worst_rigid = worst_rigid.max((loss - embedding_loss(&g, moved.view())).abs());
    }
    ensure(worst <= 1e-9, || {
        format!("loss differs from direct evaluation by {worst:e}")
    })?;
    ensure(worst_rigid <= 1e-9, || {
        format!("rigid motion changes loss by {worst_rigid:e}")
    })?;
    let rising: Vec<String> = runs
        .iter()
        .filter(|r| r.loss.1.partial_cmp(&r.loss.0) != Some(std::cmp::Ordering::Less))
        .map(|r| {
            format!(
                "P={} seed {}: {:.0} -> {:.0}",
                r.phases, r.seed, r.loss.0, r.loss.1
            )
        })
        .collect();
    ensure(rising.is_empty(), || {
        format!("final loss not below initial: {}", rising.join(", "))
    })?;
    let worst_ratio = runs.iter().map(|r| r.loss.1 / r.loss.0).fold(0.0, f64::max);
    Ok(format!(
        "oracle gap {worst:.1e}, rigid gap {worst_rigid:.1e}, {} runs end at most {:.0}% of their initial loss",
        runs.len(),
        worst_ratio * 100.0
    ))
}

struct PhaseFits {
    cfg: SyntheticConfig,
    truth: PhaseAssignment,
    states: Vec<Array2<f64>>,
    models: Vec<Vec<phasemap::AdditiveSurrogate>>,
}

fn fit_linear_synthetic() -> PhaseFits {
    let cfg = SyntheticConfig {
        n_phases: 5,
        seed: 31,
        ..Default::default()
    };
    let (ds, truth) = generate_synthetic(&cfg).unwrap();
    let (x, a) = (ds.state_matrix(), ds.action_matrix());
    let mut states = Vec::new();
    let mut models = Vec::new();
    for p in 0..cfg.n_phases {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&r| truth.labels()[r] == p).collect();
        let xs = x.select(Axis(0), &rows);
        let ys = a.select(Axis(0), &rows);
        models.push(fit_phase_models(p, xs.view(), ys.view(), &BoostingConfig::default()).unwrap());
        states.push(xs);
    }
    PhaseFits {
        cfg,
        truth,
        states,
        models,
    }
}

fn surrogate_fidelity(fits: &PhaseFits) -> Outcome {
    let mut lowest = f64::INFINITY;
    for (p, models) in fits.models.iter().enumerate() {
        for m in models {
            ensure(m.training_r2 >= 0.9, || {
                format!("phase {p} action {}: R² {}", m.action_dim, m.training_r2)
            })?;
            lowest = lowest.min(m.training_r2);
            ensure(m.ss_res_trace.windows(2).all(|w| w[1] <= w[0]), || {
                format!("phase {p} action {}: SS_res increases", m.action_dim)
            })?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = fits.cfg.state_dim();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let s = Array1::from_shape_fn(d, |_| rng.random_range(-3.0..3.0));
        for models in &fits.models {
            for m in models {
                let direct = m.bias + contributions(m, s.view()).iter().sum::<f64>();
                worst = worst.max((predict(m, s.view()) - direct).abs());
            }
        }
    }
    ensure(worst <= f64::EPSILON, || format!("additivity gap {worst:e}"))?;
    Ok(format!(
        "lowest R² {lowest:.4} over {} models, additivity gap {worst:e} on 10^4 states",
        fits.models.iter().map(Vec::len).sum::<usize>()
    ))
}

fn attribution_correctness(fits: &PhaseFits) -> Outcome {
    let rules = action_rules(&fits.cfg);
    for (p, models) in fits.models.iter().enumerate() {
        let h = attribution_heatmap(models, fits.states[p].view(), TopRule::FractionOfMax(0.95))
            .map_err(|e| e.to_string())?;
        let want = vec![rules.dominant[p]];
        ensure(h.masked_cells() == want, || {
            format!("phase {p}: mask {:?}, generator {:?}", h.masked_cells(), want)
        })?;
    }
    debug_assert_eq!(fits.truth.k(), fits.cfg.n_phases);

    let mut ranks = Vec::new();
    for (feature, seed) in [(3, 40), (8, 41)] {
        let cfg = SyntheticConfig {
            n_phases: 10,
            branch: Some(BranchSpec {
                feature: Some(feature),
                ..BranchSpec::coin(5, 0, 6, 0.5)
            }),
            seed,
            ..Default::default()
        };
        let (ds, truth) = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
        let split = branch_split(&truth, &ds, 5, 0, 6).map_err(|e| e.to_string())?;
        let heat = |k: usize| {
            let models = fit_phase_models(
                5,
                split.states[k].view(),
                split.actions[k].view(),
                &BoostingConfig::default(),
            )
            .unwrap();
            attribution_heatmap(&models, split.states[k].view(), TopRule::default()).unwrap()
        };
        let gap = attribution_gap(&heat(0), &heat(1));
        let top = (0..gap.len()).max_by(|&a, &b| gap[a].total_cmp(&gap[b])).unwrap();
        ensure(top == feature, || {
            format!("largest gap on feature {top}, designated {feature}: {gap:?}")
        })?;
        let runner_up = gap
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != feature)
            .map(|(_, g)| *g)
            .fold(0.0, f64::max);
        ranks.push(format!(
            "feature {feature} gap {:.3} vs next {runner_up:.3}",
            gap[feature]
        ));
    }
    Ok(format!(
        "masks equal generator cells on {} phases; {}",
        fits.models.len(),
        ranks.join(", ")
    ))
}

fn csv_hashes(root: &Path) -> Vec<(String, String)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, hex::encode(Sha256::digest(fs::read(&path).unwrap()))));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn reproducibility(tmp: &Path) -> Outcome {
    let cfg = |dir: &str| PipelineConfig {
        synth_branch: Some([2, 0, 3]),
        ..synthetic_config(6, 77, &tmp.join(dir))
    };
    run_pipeline(&cfg("rep_a")).map_err(|e| e.to_string())?;
    run_pipeline(&cfg("rep_b")).map_err(|e| e.to_string())?;
    let (a, b) = (csv_hashes(&tmp.join("rep_a")), csv_hashes(&tmp.join("rep_b")));
    ensure(a == b, || {
        let diff: Vec<&String> = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| &x.0)
            .collect();
        format!("differing CSVs: {diff:?}")
    })?;
    Ok(format!("{} CSVs hash-identical", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut report = Report { failures: 0 };
    report.check(1, "entropy fixture", entropy_fixture);
    let runs = run_cycles(tmp.path());
    report.check(2, "phase recovery", || phase_recovery(&runs));
    report.check(3, "branch detection", || branch_detection(tmp.path()));
    report.check(4, "Ward oracle", ward_oracle);
    report.check(5, "embedding objective", || embedding_objective(&runs));
    let fits = fit_linear_synthetic();
    report.check(6, "surrogate fidelity", || surrogate_fidelity(&fits));
    report.check(7, "attribution correctness", || attribution_correctness(&fits));
    report.check(8, "reproducibility", || reproducibility(tmp.path()));
    println!("acceptance: {} of 8 criteria passed", 8 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
