//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported, not hidden; the process exits non-zero only
//! when `NLTT_ACCEPTANCE_STRICT` is set. C6 needs a 256×256×3 test image in
//! `NLTT_C6_IMAGE` and is reported as NOT RUN otherwise.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use nltt::admm::update_m;
use nltt::analysis::{certificate_suite, rank111_approx, rank_rr1_approx, rank_rrr_approx, Certificate};
use nltt::io::load_image;
use nltt::masks::make_random_mask;
use nltt::pipeline::{run_experiment, BetaSelection};
use nltt::svt::svt;
use nltt::{
    solve, ConvergenceTrace, DenseTensor, ExperimentConfig, MaskSpec, Matricization,
    Method, SolverConfig,
};
use ndarray::Array2;
use rand::Rng;

/// 64×64×3 crop used by C5 and C7.
const C5_IMAGE: &str = "tests/data/chelsea_64.png";
const C5_RATE: f64 = 0.2;
const C5_SEED: u64 = 1;
/// Iteration cap for C5/C7; both methods run until the 1e-4 tolerance.
const C5_MAX_ITER: usize = 3000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn data_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn c1_matricization() -> Outcome {
    let mut r = rng(101);
    let mut worst_iso = 0.0f64;
    for _ in 0..50 {
        let order = r.random_range(2..=5);
        let shape = random_shape(order, 6, &mut r);
        let t = random_tensor(&shape, -100.0, 100.0, &mut r);
        for k in 1..order {
            let m = t.unfold(k).unwrap();
            if DenseTensor::fold(m.view(), &shape, k).unwrap() != t {
                return outcome(false, format!("fold∘unfold differs for shape {shape:?}, k={k}"));
            }
            let (a, b) = (m.frobenius_norm(), t.frobenius_norm());
            worst_iso = worst_iso.max((a - b).abs() / b.max(1e-300));
        }
    }
    if worst_iso > 1e-12 {
        return outcome(false, format!("Frobenius isometry off by {worst_iso:.1e}"));
    }
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let order = r.random_range(2..=5);
        let shape = random_shape(order, 7, &mut r);
        let idx: Vec<usize> = shape.iter().map(|&n| r.random_range(0..n)).collect();
        let k = r.random_range(1..order);
        if Matricization::<f64>::position(&shape, k, &idx) != direct_position(&shape, k, &idx) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("50 shapes exact, isometry err {worst_iso:.1e}, index map {mismatches}/10000 mismatches"),
    )
}

fn c2_prox() -> Outcome {
    let mut r = rng(202);
    let mut violations = 0;
    let mut trials = 0;
    while trials < 10_000 {
        let order = r.random_range(3..=4);
        let shape = random_shape(order, 4, &mut r);
        let x = random_tensor(&shape, 0.0, 255.0, &mut r);
        let y = random_tensor(&shape, -5.0, 5.0, &mut r);
        let beta = [0.05, 0.08, 0.1, 0.3, 0.5][r.random_range(0..5)];
        let k = r.random_range(1..order);
        let (m, _) = update_m(&x, &y, beta, k).unwrap();
        let best = prox_objective(&m, &x, &y, beta, k);
        for _ in 0..100 {
            let step = 10f64.powi(r.random_range(-6..=1));
            let e = random_tensor(&shape, -step, step, &mut r);
            let cand = m.zip_map(&e, |a, b| a + b).unwrap();
            if prox_objective(&cand, &x, &y, beta, k) < best - 1e-9 * (1.0 + best.abs()) {
                violations += 1;
            }
            trials += 1;
        }
    }
    let mut expansive = 0;
    for _ in 0..100 {
        let (p, q) = (r.random_range(1..30), r.random_range(1..30));
        let tau = r.random_range(0.1..50.0);
        let a = Array2::from_shape_fn((p, q), |_| r.random_range(-100.0..100.0));
        let b = Array2::from_shape_fn((p, q), |_| r.random_range(-100.0..100.0));
        let (sa, _) = svt(a.view(), tau).unwrap();
        let (sb, _) = svt(b.view(), tau).unwrap();
        let lhs = (&sa - &sb).iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs = (&a - &b).iter().map(|v| v * v).sum::<f64>().sqrt();
        if lhs > rhs * (1.0 + 1e-12) {
            expansive += 1;
        }
    }
    outcome(
        violations == 0 && expansive == 0,
        format!("{violations}/{trials} prox violations, {expansive}/100 expansive SVT pairs"),
    )
}

fn equality_cases() -> Vec<(&'static str, f64, f64)> {
    let (s, n3, h) = (4, 3, 6);
    let base = [10.0, 20.0, 30.0, 40.0];
    let eps = 0.75;
    let sign = |p: usize| if p % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = Vec::new();

    let same_fibers = DenseTensor::from_fn(&[s, s, n3, h], |i| base[i[0]]).unwrap();
    let rep = rank111_approx(&same_fibers).unwrap().1;
    out.push(("identical fibers", rep.residual, 0.0));

    // Fiber parity alternates over (i₂, i₃, i₄); the mean fiber is `base`.
    let alt_fibers = DenseTensor::from_fn(&[s, s, n3, h], |i| {
        base[i[0]] + if i[0] == 0 { sign(i[1] + s * (i[2] + n3 * i[3])) * eps } else { 0.0 }
    })
    .unwrap();
    let rep = rank111_approx(&alt_fibers).unwrap().1;
    out.push(("alternating fibers", rep.residual, rep.bound));

    let mut r = rng(303);
    let cube: Vec<f64> = (0..s * s * n3).map(|_| r.random_range(0.0..255.0)).collect();
    let at = |i: &[usize]| cube[i[0] + s * (i[1] + s * i[2])];
    let same_slices = DenseTensor::from_fn(&[s, s, n3, h], |i| at(i)).unwrap();
    let rep = rank_rr1_approx(&same_slices).unwrap().1;
    out.push(("identical slices", rep.residual, 0.0));

    // Slices alternate ±ε on one entry, so every slice is ε from the mean.
    let alt_slices = DenseTensor::from_fn(&[s, s, n3, h], |i| {
        at(i) + if i[0] + i[1] + i[2] == 0 { sign(i[3]) * eps } else { 0.0 }
    })
    .unwrap();
    let rep = rank_rr1_approx(&alt_slices).unwrap().1;
    out.push(("alternating slices", rep.residual, rep.bound));

    let rep = rank_rrr_approx(&alt_slices, h).unwrap().1;
    out.push(("all slices retained", rep.residual, 0.0));
    out
}

fn c3_certificates() -> Outcome {
    let reports = certificate_suite([8, 8, 3, 12], 200, 1000, 7).unwrap();
    let (lip, groups): (Vec<_>, Vec<_>) = reports
        .iter()
        .partition(|r| r.certificate == Certificate::NuclearLipschitz);
    let group_fail = groups.iter().filter(|r| !r.holds()).count();
    let lip_fail = lip.iter().filter(|r| !r.holds()).count();
    let min_slack = reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let mut eq_fail = Vec::new();
    for (name, residual, expected) in equality_cases() {
        if (residual - expected).abs() > 1e-9 * (1.0 + expected) {
            eq_fail.push(format!("{name}: {residual} vs {expected}"));
        }
    }
    outcome(
        group_fail == 0 && lip_fail == 0 && eq_fail.is_empty() && groups.len() == 600 && lip.len() == 1000,
        format!(
            "{group_fail}/{} group bounds violated, {lip_fail}/{} Lipschitz pairs violated, min slack {min_slack:.2e}, equality cases {}",
            groups.len(),
            lip.len(),
            if eq_fail.is_empty() { "exact".to_string() } else { eq_fail.join("; ") }
        ),
    )
}

fn c4_synthetic_recovery() -> Outcome {
    let mut r = rng(404);
    let shape = [8, 8, 3, 12];
    let (mut worst_iter, mut worst_rec, mut failures) = (0, 0.0f64, 0);
    for g in 0..20 {
        let x = if g % 2 == 0 {
            constant_fiber_group(shape, &mut r)
        } else {
            identical_slice_group(shape, 1 + (g / 2) % 3, &mut r)
        };
        let mask = bernoulli_mask(&shape, 0.5, &mut r);
        let (est, trace) = solve(&x.zero_filled(&mask).unwrap(), &mask, &SolverConfig::default()).unwrap();
        let last = trace.last().unwrap();
        let rec = relative_error(&est, &x);
        worst_iter = worst_iter.max(trace.len());
        worst_rec = worst_rec.max(rec);
        if !(last.rel_err < 1e-4 && rec < 1e-2) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/20 groups failed; max iterations {worst_iter}, max recovery error {worst_rec:.1e}"),
    )
}

struct C5Result {
    nltt_db: f64,
    base_db: f64,
    traces: Vec<ConvergenceTrace>,
}

fn c5_config(method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        mask: MaskSpec::random(C5_RATE, C5_SEED),
        solver: SolverConfig {
            max_iter: C5_MAX_ITER,
            ..SolverConfig::default()
        },
        seed: C5_SEED,
        ..ExperimentConfig::default()
    }
}

fn c5_run() -> C5Result {
    let truth = load_image(&data_path(C5_IMAGE)).unwrap();
    let mask = make_random_mask(truth.shape(), C5_RATE, C5_SEED).unwrap();
    let (_, traces, nl) = run_experiment(&c5_config(Method::Nltt), &truth, &mask).unwrap();
    let (_, _, base) = run_experiment(&c5_config(Method::SilrtcTt), &truth, &mask).unwrap();
    C5Result {
        nltt_db: nl.quality.unwrap().psnr_db,
        base_db: base.quality.unwrap().psnr_db,
        traces,
    }
}

fn c5_ordering(res: &C5Result) -> Outcome {
    let gap = res.nltt_db - res.base_db;
    outcome(
        gap >= 1.0,
        format!(
            "NL-TT {:.2} dB vs SiLRTC-TT {:.2} dB (gap {gap:+.2} dB, need ≥ +1)",
            res.nltt_db, res.base_db
        ),
    )
}

/// rel_err below 1e-4 at the end, its running maximum over the second half
/// below that of the first half, and the last ten objectives within 0.1%.
fn trace_settles(t: &ConvergenceTrace) -> (bool, bool) {
    let rel: Vec<f64> = t.records.iter().map(|r| r.rel_err).collect();
    let half = rel.len() / 2;
    let peak = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
    let trending = rel.last().is_some_and(|&v| v < 1e-4) && (half == 0 || peak(&rel[half..]) <= peak(&rel[..half]));
    let tail: Vec<f64> = t.records.iter().rev().take(10).map(|r| r.objective).collect();
    let (lo, hi) = tail.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let flat = tail.len() == 10 && hi - lo < 1e-3 * tail[0].abs();
    (trending, flat)
}

fn c7_convergence(res: &C5Result) -> Outcome {
    let (mut not_trending, mut not_flat) = (0, 0);
    for t in &res.traces {
        let (trending, flat) = trace_settles(t);
        not_trending += usize::from(!trending);
        not_flat += usize::from(!flat);
    }
    let max_iter = res.traces.iter().map(|t| t.len()).max().unwrap_or(0);
    outcome(
        not_trending == 0 && not_flat == 0,
        format!(
            "{} group traces: {not_trending} without rel_err < 1e-4 trend, {not_flat} without flat objective; longest {max_iter} iterations",
            res.traces.len()
        ),
    )
}

fn c6_spot_check(path: &Path) -> Outcome {
    let truth = load_image(path).unwrap();
    let mask = make_random_mask(truth.shape(), 0.2, 0).unwrap();
    let score = |method| {
        let cfg = ExperimentConfig {
            method,
            mask: MaskSpec::random(0.2, 0),
            beta_selection: BetaSelection::Grid,
            ..ExperimentConfig::default()
        };
        let q = run_experiment(&cfg, &truth, &mask).unwrap().2.quality.unwrap();
        (q.psnr_db, q.ssim)
    };
    let (nl, base) = (score(Method::Nltt), score(Method::SilrtcTt));
    let within = (nl.0 - 30.09).abs() <= 1.5
        && (base.0 - 24.80).abs() <= 1.5
        && (nl.1 - 0.8970).abs() <= 0.05
        && (base.1 - 0.7366).abs() <= 0.05;
    outcome(
        within,
        format!(
            "NL-TT {:.2} dB / {:.4}, SiLRTC-TT {:.2} dB / {:.4} (targets 30.09±1.5 / 0.8970±0.05, 24.80±1.5 / 0.7366±0.05)",
            nl.0, nl.1, base.0, base.1
        ),
    )
}

fn report(id: &str, name: &str, limit_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    let secs = t0.elapsed().as_secs_f64();
    let timely = secs <= limit_s;
    let pass = o.pass && timely;
    println!(
        "{id} {} {name}: {} [{secs:.1} s, limit {limit_s:.0} s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
    pass
}

fn main() {
    let mut all = true;
    all &= report("C1", "matricization", 5.0, c1_matricization);
    all &= report("C2", "prox optimality and SVT nonexpansiveness", 30.0, c2_prox);
    all &= report("C3", "perturbation certificates", 60.0, c3_certificates);
    all &= report("C4", "synthetic group recovery", 120.0, c4_synthetic_recovery);

    let mut c5 = None;
    all &= report("C5", "64×64×3 crop ordering", 600.0, || {
        let res = c5_run();
        let o = c5_ordering(&res);
        c5 = Some(res);
        o
    });
    let c5 = c5.expect("C5 ran");
    all &= report("C7", "convergence traces on the C5 instance", f64::INFINITY, || c7_convergence(&c5));

    match std::env::var_os("NLTT_C6_IMAGE") {
        Some(p) => all &= report("C6", "256×256×3 spot check", 3600.0, || c6_spot_check(Path::new(&p))),
        None => println!("C6 NOT RUN 256×256×3 spot check: set NLTT_C6_IMAGE to a 256×256 RGB image"),
    }

    println!("acceptance: {}", if all { "all run criteria pass" } else { "some criteria fail (see above)" });
    if !all && std::env::var_os("NLTT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
