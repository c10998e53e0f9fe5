//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria 3-6 need the Fashion-MNIST IDX files under `data/fashion-mnist`
//! (see `scripts/`); without them those lines report SKIP. The Fashion-MNIST
//! criteria train a few dozen full runs and take most of an hour on one core;
//! `ACCEPTANCE_ONLY=1,2` restricts the gate to the listed criteria.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use colearn::data::{Batch, FashionMnistFiles};
use colearn::graph::{build_weight_matrix_from_log_scores, AgentId, DirectedGraph};
use colearn::harness::{montecarlo, write_csv, ExperimentConfig, Mode, MonteCarloOptions, MonteCarloResult};
use colearn::learner::{grad, loss, predict, ArchKind, Architecture, Model, Params};
use colearn::{proxy_labels, seed, RoundMessage};
use ndarray::{Array1, Array2};
use rand::Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Outcome = Result<Verdict, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn have_fashion_mnist() -> bool {
    FashionMnistFiles::in_dir(root().join("data/fashion-mnist")).exist()
}

fn preset(name: &str, pinned: &[(&str, &str)]) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(root().join("configs").join(name)).map_err(|e| e.to_string())?;
    for (k, v) in pinned {
        cfg = cfg.set_param(k, v).map_err(|e| e.to_string())?;
    }
    cfg.parallel = true;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<MonteCarloResult, String> {
    montecarlo(cfg, &MonteCarloOptions::default()).map_err(|e| e.to_string())
}

fn with(cfg: &ExperimentConfig, key: &str, value: &str) -> Result<ExperimentConfig, String> {
    cfg.set_param(key, value).map_err(|e| e.to_string())
}

/// Mean final test accuracy over every agent of every run.
fn final_mean(r: &MonteCarloResult) -> f64 {
    let acc: Vec<f64> = r.runs.iter().flat_map(|o| o.final_accuracy()).collect();
    acc.iter().sum::<f64>() / acc.len() as f64
}

/// Mean test accuracy over agents and runs at each recorded iteration.
fn mean_trace(r: &MonteCarloResult) -> Vec<(u64, f64)> {
    let mut by_iter: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for rec in r.records() {
        let e = by_iter.entry(rec.iter).or_default();
        e.0 += rec.test_acc;
        e.1 += 1;
    }
    by_iter.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. properties

fn closure_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= reach[i][k] && reach[k][j];
            }
        }
    }
    reach.iter().flatten().all(|&r| r)
}

fn fd_worst(arch: &Architecture, s: u64) -> f64 {
    let params: Params<f64> = arch.init_params(&mut seed::rng(s));
    let mut rng = seed::rng(s + 1);
    let x = Array2::from_shape_fn((4, arch.input_dim()), |_| rng.random_range(-1.0..1.0));
    let y = (0..4).map(|_| rng.random_range(0..arch.num_classes())).collect();
    let b = Batch::new(x, y).unwrap();
    let g = grad(arch, &params, &b).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in (0..params.len()).step_by(params.len().div_ceil(60)) {
        let at = |d: f64| {
            let mut p = params.clone();
            p.as_mut_slice()[i] += d;
            loss(arch, &p, &b).unwrap()
        };
        let (l0, lp, lm, lp2, lm2) = (at(0.0), at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        // Second-order one-sided differences; at a ReLU kink any value between them is a subgradient.
        let right = (4.0 * lp - 3.0 * l0 - lp2) / (2.0 * h);
        let left = (3.0 * l0 - 4.0 * lm + lm2) / (2.0 * h);
        let err = if g[i] >= left.min(right) - 1e-6 && g[i] <= left.max(right) + 1e-6 {
            0.0
        } else {
            let central = (lp - lm) / (2.0 * h);
            (central - g[i]).abs() / central.abs().max(g[i].abs()).max(1e-6)
        };
        worst = worst.max(err);
    }
    worst
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(1);
    let mut failures = Vec::new();

    let mut worst_row = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=10);
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| a != b).filter(|_| rng.random_bool(0.3)).collect();
        let g = DirectedGraph::from_edges(n, edges).unwrap();
        let gamma = [0.0, 1.0, 10.0, 100.0, 1000.0][rng.random_range(0..5)];
        let log: Vec<f64> = (0..n).map(|_| gamma * rng.random_range(0.0..1.0)).collect();
        let w = build_weight_matrix_from_log_scores(&g, &log).unwrap();
        for i in 0..n {
            worst_row = worst_row.max((w.row(i).sum() - 1.0).abs());
            let nbrs = g.in_neighbors(AgentId(i)).unwrap();
            if (0..n).any(|j| (w.get(i, j) > 0.0) != nbrs.contains(&AgentId(j)) || w.get(i, j) < 0.0) {
                failures.push("weight sparsity pattern".to_string());
            }
        }
    }
    if worst_row > 1e-9 {
        failures.push(format!("row sum off by {worst_row:e}"));
    }

    let mut cases = 0;
    for n in 1..=8usize {
        for _ in 0..150 {
            let p = rng.random_range(0.0..0.6);
            let edges: Vec<(usize, usize)> =
                (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| a != b).filter(|_| rng.random_bool(p)).collect();
            let g = DirectedGraph::from_edges(n, edges.iter().copied()).unwrap();
            if g.is_strongly_connected() != closure_connected(n, &edges) {
                failures.push(format!("connectivity disagrees on {edges:?}"));
            }
            cases += 1;
        }
    }

    let archs = [
        Architecture::new(ArchKind::Shl, 12, 5).unwrap(),
        Architecture::with_hidden(ArchKind::Hl1, 12, vec![9], 5).unwrap(),
        Architecture::with_hidden(ArchKind::Hl2, 12, vec![8, 6], 5).unwrap(),
    ];
    let worst_fd = archs.iter().enumerate().map(|(i, a)| fd_worst(a, 10 + i as u64)).fold(0.0, f64::max);
    if worst_fd >= 1e-4 {
        failures.push(format!("finite-difference error {worst_fd:e}"));
    }

    for a in &archs {
        let params: Params<f64> = a.init_params(&mut seed::rng(3));
        let scaled = Params::from_vec(params.as_slice().iter().map(|p| p * 100.0).collect());
        let x = Array2::from_shape_fn((8, 12), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let p = predict(a, &scaled, x.view()).unwrap();
        if p.rows().into_iter().any(|r| (r.sum() - 1.0).abs() > 1e-6 || r.iter().any(|&v| v < 0.0)) {
            failures.push("softmax rows not normalized".into());
        }
    }

    for _ in 0..200 {
        let msgs: Vec<RoundMessage<f64>> = (0..4)
            .map(|j| RoundMessage { sender: AgentId(j), predictions: Array2::from_shape_fn((3, 6), |_| rng.random_range(0.0..1.0)) })
            .collect();
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<RoundMessage<f64>> =
            msgs.iter().map(|m| RoundMessage { sender: m.sender, predictions: &m.predictions * c }).collect();
        let w = Array1::from_vec(vec![0.1, 0.4, 0.3, 0.2]);
        let a = proxy_labels(w.view(), &msgs.iter().collect::<Vec<_>>()).unwrap();
        let b = proxy_labels(w.view(), &scaled.iter().collect::<Vec<_>>()).unwrap();
        if a != b {
            failures.push("label changed under positive scaling".into());
        }
    }

    let cfg = preset("synth-benefit.toml", &[("runs", "2"), ("data.train_per_class", "200"), ("shared_epochs", "1")])?;
    let csv = |cfg: &ExperimentConfig| -> Result<Vec<u8>, String> {
        let r = run(cfg)?;
        let mut buf = Vec::new();
        write_csv(&r.records().cloned().collect::<Vec<_>>(), &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let mut sequential = cfg.clone();
    sequential.parallel = false;
    if csv(&cfg)? != csv(&sequential)? {
        failures.push("synthetic run not reproducible".into());
    }

    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("took {secs:.0}s"));
    }
    let detail = format!(
        "row sums within {worst_row:.1e}, {cases} connectivity cases, finite differences within {worst_fd:.1e}, {secs:.1}s"
    );
    Ok(if failures.is_empty() { Verdict::Pass(detail) } else { Verdict::Fail(format!("{detail}; {}", failures.join("; "))) })
}

// ---------------------------------------------------------------------------
// 2. synthetic benefit

fn criterion_2() -> Outcome {
    let cfg = preset(
        "synth-benefit.toml",
        &[
            ("runs", "5"),
            ("data.classes", "5"),
            ("data.dim", "20"),
            ("data.separation", "2.0"),
            ("train_size", "30"),
            ("val_size", "30"),
            ("shared_epochs", "2"),
        ],
    )?;
    if !cfg.agents.assign(0).iter().all(|a| matches!(a, ArchKind::Shl | ArchKind::Hl1)) || cfg.n_agents() != 4 {
        return Err("preset must hold four SHL/HL1 agents".into());
    }
    let shared = match &cfg.data {
        colearn::harness::DataConfig::Synth { classes, train_per_class, .. } => classes * train_per_class - 4 * 60,
        _ => return Err("preset must use synthetic data".into()),
    };
    if shared != 5000 {
        return Err(format!("shared pool has {shared} samples, expected 5000"));
    }
    let cl = final_mean(&run(&cfg)?);
    let st = final_mean(&run(&with(&cfg, "mode", "st")?)?);
    Ok(verdict(cl - st >= 0.03, format!("CL {cl:.4} vs ST {st:.4} (gain {:+.4}, need +0.03)", cl - st)))
}

// ---------------------------------------------------------------------------
// 3-5. Fashion-MNIST

const TABLE1: &[(&str, &str)] = &[
    ("runs", "5"),
    ("train_size", "500"),
    ("val_size", "100"),
    ("gamma", "100"),
    ("refresh_period", "100"),
    ("review_period", "300"),
    ("batch_size", "10"),
    ("collective_batch", "10"),
    ("shared_epochs", "3"),
];

fn criterion_3() -> Outcome {
    if !have_fashion_mnist() {
        return Ok(Verdict::Skip("Fashion-MNIST not downloaded".into()));
    }
    let cfg = preset("table1-desk.toml", TABLE1)?;
    let mut archs = cfg.agents.assign(0);
    archs.sort();
    let mut expected = vec![ArchKind::Hl2, ArchKind::Hl1, ArchKind::Hl1, ArchKind::Shl];
    expected.sort();
    if archs != expected
        || !matches!(cfg.graph, colearn::harness::GraphConfig::Complete)
        || !matches!(cfg.optimizer, colearn::UpdateRule::Adam { .. })
    {
        return Err("preset must be HL2/HL1/HL1/SHL with Adam on a complete graph".into());
    }
    let cl = run(&cfg)?;
    let st = run(&with(&cfg, "mode", "st")?)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for arch in [ArchKind::Hl2, ArchKind::Hl1, ArchKind::Shl] {
        let (c, s) = (cl.summary.get(Mode::Cl, arch), st.summary.get(Mode::St, arch));
        let (c, s) = match (c, s) {
            (Some(c), Some(s)) => (c, s),
            _ => return Err(format!("no {arch:?} row")),
        };
        ok &= c.mean - s.mean >= 0.02;
        parts.push(format!("{} CL {:.4}±{:.4} ST {:.4}±{:.4} ({:+.4})", arch.as_str(), c.mean, c.std, s.mean, s.std, c.mean - s.mean));
    }
    Ok(verdict(ok, format!("{}; need +0.02 each", parts.join(", "))))
}

fn criterion_4() -> Outcome {
    if !have_fashion_mnist() {
        return Ok(Verdict::Skip("Fashion-MNIST not downloaded".into()));
    }
    let base = preset("gamma-sweep-desk.toml", &[("runs", "3"), ("train_size", "500")])?;
    let mut finals = BTreeMap::new();
    let mut zero_trace = Vec::new();
    for g in ["0", "1", "10", "100", "1000"] {
        let r = run(&with(&base, "gamma", g)?)?;
        finals.insert(g, final_mean(&r));
        if g == "0" {
            zero_trace = mean_trace(&r);
        }
    }
    let worst = finals["1000"];
    let beats = ["1", "10", "100"].iter().all(|g| finals[g] - worst >= 0.02);
    let peak = zero_trace.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let last = zero_trace.last().map_or(f64::NAN, |p| p.1);
    let rise_fall = peak - last >= 0.01 && zero_trace.first().is_some_and(|p| peak > p.1);
    let fin: Vec<String> = finals.iter().map(|(g, a)| format!("γ={g}: {a:.4}")).collect();
    Ok(verdict(
        beats && rise_fall,
        format!("final {}; γ=0 peak {peak:.4} final {last:.4} (need peak − final ≥ 0.01, γ∈{{1,10,100}} ≥ γ=1000 + 0.02)", fin.join(", ")),
    ))
}

fn criterion_5() -> Outcome {
    if !have_fashion_mnist() {
        return Ok(Verdict::Skip("Fashion-MNIST not downloaded".into()));
    }
    let base = preset("review-sweep-desk.toml", &[("runs", "3")])?;
    let frequent = final_mean(&run(&with(&base, "review_period", "200")?)?);
    let rare = final_mean(&run(&with(&base, "review_period", "5000")?)?);
    Ok(verdict(
        frequent - rare >= 0.02,
        format!("T_R=200: {frequent:.4}, T_R=5000: {rare:.4} (gap {:+.4}, need +0.02)", frequent - rare),
    ))
}

// ---------------------------------------------------------------------------
// 6. paper-scale presets

fn criterion_6() -> Outcome {
    if !have_fashion_mnist() {
        return Ok(Verdict::Skip("Fashion-MNIST not downloaded".into()));
    }
    let presets = ["table1.toml", "fig3-train-size.toml", "fig4-review.toml", "fig5-gamma-500.toml", "fig6-gamma-300.toml", "large-network.toml"];
    let mut done = Vec::new();
    for name in presets {
        let cfg = preset(name, &[("runs", "1"), ("max_iterations", "200")])?;
        let r = run(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let last = r.records().map(|rec| rec.iter).max().unwrap_or(0);
        if last != 200 {
            return Ok(Verdict::Fail(format!("{name} stopped at iteration {last}")));
        }
        let agents = r.runs[0].architectures.len();
        done.push(format!("{name} ({agents} agents)"));
    }
    Ok(Verdict::Pass(format!("200 iterations each: {}", done.join(", "))))
}

fn main() -> ExitCode {
    // Honour `cargo test -- <filter>` loosely: any filter that is not a
    // substring of "acceptance" skips the gate.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("property suite", criterion_1),
        ("synthetic collective-learning benefit", criterion_2),
        ("Fashion-MNIST CL over ST", criterion_3),
        ("gamma sweep", criterion_4),
        ("review frequency", criterion_5),
        ("paper-scale presets smoke run", criterion_6),
    ];
    // ACCEPTANCE_ONLY=2,3 restricts the gate to the listed criteria.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(Verdict::Pass(d)) => format!("PASS  {d}"),
            Ok(Verdict::Skip(d)) => format!("SKIP  {d}"),
            Ok(Verdict::Fail(d)) => {
                failed += 1;
                format!("FAIL  {d}")
            }
            Err(e) => {
                failed += 1;
                format!("FAIL  error: {e}")
            }
        };
        println!("criterion {} ({name}, {secs:.0}s): {line}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
