//! Acceptance suite: every criterion runs the default configuration of its
//! experiment(s) at full size and prints one PASS/FAIL line.
//!
//! Runs without the libtest harness so the verdict lines are always shown.
//! Criteria run one after another, so wall-clock budgets are measured on an
//! otherwise idle pool. Non-flag arguments filter criteria by name.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use regnoise_lab::config::{ExperimentConfig, ExperimentKind, Resolution};
use regnoise_lab::run::read_manifest;
use regnoise_lab::{execute, run_experiment, Outcome, RunOptions};

struct Run {
    outcome: Outcome,
    seconds: f64,
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Default run of an experiment, computed once per test binary.
type RunCache = Mutex<HashMap<ExperimentKind, &'static Run>>;

fn default_run(kind: ExperimentKind) -> &'static Run {
    static CACHE: OnceLock<RunCache> = OnceLock::new();
    let _guard = serial();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&kind) {
        return r;
    }
    let cfg = ExperimentConfig::new(kind);
    let start = Instant::now();
    let outcome = run_experiment(&cfg).unwrap_or_else(|e| panic!("{} failed: {e}", kind.name()));
    let run: &'static Run = Box::leak(Box::new(Run { outcome, seconds: start.elapsed().as_secs_f64() }));
    for c in &run.outcome.checks {
        println!("    {} | {c}", kind.name());
    }
    cache.lock().unwrap().insert(kind, run);
    run
}

/// Checks of `run` whose name starts with any of `prefixes`; at least one
/// must match each prefix.
fn checks_pass(run: &Run, prefixes: &[&str]) -> bool {
    prefixes.iter().all(|p| {
        let matching: Vec<_> = run.outcome.checks.iter().filter(|c| c.name.starts_with(p)).collect();
        !matching.is_empty() && matching.iter().all(|c| c.passed)
    })
}

fn verdict(id: u32, title: &str, ok: bool, detail: String) -> bool {
    println!("{} criterion {id:>2}: {title} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}

fn budget(run: &Run, seconds: f64) -> (bool, String) {
    (run.seconds <= seconds, format!("{:.1} s of {seconds} s", run.seconds))
}

fn criterion_01_fbm_covariance() -> bool {
    let run = default_run(ExperimentKind::FbmCheck);
    let (fast, time) = budget(run, 60.0);
    let ok = checks_pass(
        run,
        &["covariance max |z| at H=0.2", "covariance max |z| at H=0.5", "covariance max |z| at H=0.8"],
    );
    verdict(1, "fBm covariance within 3 SE", ok && fast, time)
}

fn criterion_02_local_nondeterminism() -> bool {
    let run = default_run(ExperimentKind::FbmCheck);
    let (fast, time) = budget(run, 120.0);
    let ok = checks_pass(run, &["conditional variance max |z| at H=0.3", "conditional variance max |z| at H=0.7"]);
    verdict(2, "conditional variance within 3 SE", ok && fast, time)
}

fn criterion_03_ito_tanaka() -> bool {
    let run = default_run(ExperimentKind::ItoTanaka);
    let (fast, time) = budget(run, 600.0);
    let ok = checks_pass(run, &["relative deviation at n=4096", "deviation ratio after one refinement"]);
    verdict(3, "Ito-Tanaka decomposition below 5% and improving", ok && fast, time)
}

fn criterion_04_regularity_gain() -> bool {
    let run = default_run(ExperimentKind::Gain);
    let (fast, time) = budget(run, 600.0);
    let ok = checks_pass(run, &["median beta at H=0.5", "median beta nonincreasing in H"]);
    let beta = run.outcome.check("median beta at H=0.5").map_or(f64::NAN, |c| c.value);
    verdict(4, "regularity gain and H trend", ok && fast, format!("median beta {beta:.3}, {time}"))
}

fn criterion_05_sewing() -> bool {
    let run = default_run(ExperimentKind::Yde);
    let ok = checks_pass(run, &["sewing vs Riemann-Stieltjes closed form", "sewing contraction ratio relative gap"]);
    verdict(5, "sewing contraction and closed form", ok, format!("{:.1} s", run.seconds))
}

fn criterion_06_yde_oracles() -> bool {
    let run = default_run(ExperimentKind::Yde);
    let ok = checks_pass(
        run,
        &["linear drift relative error", "classical ODE sup deviation", "a-priori constant max / median"],
    );
    verdict(6, "YDE oracles and a-priori constant", ok, format!("{:.1} s", run.seconds))
}

fn criterion_07_flow_and_jacobian() -> bool {
    let run = default_run(ExperimentKind::Flow);
    let ok = checks_pass(
        run,
        &[
            "flow property deviation / scheme tolerance",
            "Jacobian identity",
            "linear drift closed forms",
            "volume preservation",
        ],
    );
    verdict(7, "flow property, Jacobian identity, closed forms", ok, format!("{:.1} s", run.seconds))
}

fn criterion_08_fractional_calculus() -> bool {
    let run = default_run(ExperimentKind::FracalcCheck);
    let ok = checks_pass(
        run,
        &[
            "round trip error at alpha=0.2",
            "round trip error at alpha=0.45",
            "K_H covariance excess over bias in SE at H=0.7",
            "Girsanov density mean",
        ],
    );
    verdict(8, "round trip, K_H covariance, Girsanov mean", ok, format!("{:.1} s", run.seconds))
}

fn criterion_09_transport_and_continuity() -> bool {
    let transport = default_run(ExperimentKind::Transport);
    let continuity = default_run(ExperimentKind::Continuity);
    let ok = checks_pass(
        transport,
        &[
            "constancy along characteristics",
            "weak residual ratio variation",
            "frozen control residual growth",
            "commutator sup, last / first",
            "commutator sup decreasing",
        ],
    ) && checks_pass(continuity, &["particle mass change"]);
    verdict(
        9,
        "transport, weak residual, mass, commutator",
        ok,
        format!("{:.1} s", transport.seconds + continuity.seconds),
    )
}

fn criterion_10_peano() -> bool {
    let run = default_run(ExperimentKind::Peano);
    let (fast, time) = budget(run, 300.0);
    let ok = checks_pass(run, &["branch separation without noise", "branch coincidence rate with noise"]);
    verdict(10, "Peano branches and selection by noise", ok && fast, time)
}

/// Reduced-size config of every experiment for the rerun comparison.
fn reduced(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    let (seeds, n_time, m_space) = match kind {
        ExperimentKind::FbmCheck => (64, 128, 8),
        ExperimentKind::Gain => (2, 1024, 1024),
        ExperimentKind::ItoTanaka => (2, 128, 256),
        ExperimentKind::Yde => (4, 256, 8),
        ExperimentKind::Flow => (1, 256, 16),
        ExperimentKind::Peano => (8, 1024, 8),
        ExperimentKind::Transport => (1, 512, 64),
        ExperimentKind::Continuity => (1, 128, 32),
        ExperimentKind::FracalcCheck => (64, 256, 8),
    };
    cfg.seeds = seeds;
    cfg.resolution = Resolution { n_time, m_space };
    cfg
}

fn criterion_11_determinism() -> bool {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let threads = 4;
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for kind in ExperimentKind::ALL {
        let cfg = reduced(kind);
        let one = dir.path().join(format!("{}-1", kind.name()));
        let (first, _, _) = execute(&cfg, &RunOptions { threads: Some(1), out_dir: Some(one.clone()) }).unwrap();
        let rerun = ExperimentConfig::load(&one.join("manifest.json")).unwrap();
        assert_eq!(rerun, cfg);
        let many = dir.path().join(format!("{}-{threads}", kind.name()));
        execute(&rerun, &RunOptions { threads: Some(threads), out_dir: Some(many.clone()) }).unwrap();
        let second = read_manifest(&many.join("manifest.json")).unwrap();
        for o in first.outputs.iter().filter(|o| o.file.ends_with(".csv")) {
            let a = std::fs::read(one.join(&o.file)).unwrap();
            let b = std::fs::read(many.join(&o.file)).unwrap();
            let listed = second.outputs.iter().find(|p| p.file == o.file).map(|p| p.sha256.as_str());
            if a != b || listed != Some(o.sha256.as_str()) {
                mismatches.push(format!("{}/{}", kind.name(), o.file));
            }
            compared += 1;
        }
    }
    verdict(
        11,
        "byte-identical CSVs from manifest at 1 and 4 threads",
        mismatches.is_empty() && compared > 0,
        format!("{compared} CSVs compared, mismatches {mismatches:?}"),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> bool);
    let criteria: [Criterion; 11] = [
        ("criterion_01_fbm_covariance", criterion_01_fbm_covariance),
        ("criterion_02_local_nondeterminism", criterion_02_local_nondeterminism),
        ("criterion_03_ito_tanaka", criterion_03_ito_tanaka),
        ("criterion_04_regularity_gain", criterion_04_regularity_gain),
        ("criterion_05_sewing", criterion_05_sewing),
        ("criterion_06_yde_oracles", criterion_06_yde_oracles),
        ("criterion_07_flow_and_jacobian", criterion_07_flow_and_jacobian),
        ("criterion_08_fractional_calculus", criterion_08_fractional_calculus),
        ("criterion_09_transport_and_continuity", criterion_09_transport_and_continuity),
        ("criterion_10_peano", criterion_10_peano),
        ("criterion_11_determinism", criterion_11_determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        // A panic inside a run counts as a failure of that criterion only.
        if !std::panic::catch_unwind(run).unwrap_or(false) {
            failed.push(name);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
