//! End-to-end drivers: grouping, per-group completion, aggregation and the
//! report files written by the CLI.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{solve, ConvergenceTrace, SolverConfig, BETA_CANDIDATES};
use crate::error::{input_err, param_err, Error, Result};
use crate::grouping::{make_reference_grid, match_members_observed, stack_cubes, stack_mask, Aggregator, CubeCoord, GroupingParams};
use crate::io::{load_tensor, save_image, write_dtr1};
use crate::masks::MaskSpec;
use crate::metrics::{quality, QualityScore, PEAK, SSIM_WINDOW};
use crate::scalar::Real;
use crate::tensor::{DenseTensor, ObservationMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Nltt,
    SilrtcTt,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSelection {
    /// Use `solver.beta` as given.
    #[default]
    Fixed,
    /// Try every value of [`BETA_CANDIDATES`] on a hold-out split of the
    /// observed entries and keep the one with the lowest hold-out error.
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub mask: MaskSpec,
    pub method: Method,
    pub solver: SolverConfig,
    pub grouping: GroupingParams,
    /// Accept cube sizes, overlaps and group sizes outside the tuned ranges.
    pub custom_grouping: bool,
    pub beta_selection: BetaSelection,
    /// Fraction of observed entries withheld during β grid search.
    pub holdout: f64,
    pub out_dir: PathBuf,
    /// Seeds the hold-out split.
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            mask: MaskSpec::random(0.2, 0),
            method: Method::Nltt,
            solver: SolverConfig::default(),
            grouping: GroupingParams::default(),
            custom_grouping: false,
            beta_selection: BetaSelection::Fixed,
            holdout: 0.1,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| param_err!("bad experiment config: {e}"))
    }

    pub fn validate(&self) -> Result<()> {
        self.mask.validate()?;
        let s = &self.solver;
        if !(s.beta > 0.0 && s.beta.is_finite()) || !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(param_err!(
                "solver needs beta > 0, tol > 0 and max_iter ≥ 1, got {}, {}, {}",
                s.beta,
                s.tol,
                s.max_iter
            ));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(param_err!("holdout fraction must lie in (0, 1), got {}", self.holdout));
        }
        if self.workers == Some(0) {
            return Err(param_err!("workers must be at least 1"));
        }
        let g = &self.grouping;
        if g.cube_size == 0 || g.similar == 0 || g.overlap >= g.cube_size {
            return Err(param_err!(
                "need cube size ≥ 1, similar ≥ 1 and overlap < cube size, got s={}, o={}, h={}",
                g.cube_size,
                g.overlap,
                g.similar
            ));
        }
        if self.method == Method::Nltt && !self.custom_grouping {
            let s_ok = (10..=20).contains(&g.cube_size) && g.cube_size % 2 == 0;
            let h_ok = (30..=50).contains(&g.similar) && (g.similar - 30) % 4 == 0;
            if !s_ok || !h_ok || g.overlap != 1 {
                return Err(param_err!(
                    "grouping s={}, o={}, h={} is outside s ∈ {{10,12,…,20}}, o = 1, h ∈ {{30,34,…,50}}; \
                     set custom_grouping to use it anyway",
                    g.cube_size,
                    g.overlap,
                    g.similar
                ));
            }
        }
        Ok(())
    }
}

/// Convergence summary of one solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Reference cube of the group; absent for whole-tensor runs.
    pub reference: Option<CubeCoord>,
    pub observed: usize,
    pub iterations: usize,
    pub final_rel_err: f64,
    pub final_objective: f64,
}

impl RunSummary {
    fn new(reference: Option<CubeCoord>, observed: usize, trace: &ConvergenceTrace) -> Self {
        let last = trace.last();
        Self {
            reference,
            observed,
            iterations: trace.len(),
            final_rel_err: last.map_or(f64::NAN, |r| r.rel_err),
            final_objective: last.map_or(f64::NAN, |r| r.objective),
        }
    }
}

/// Output of an in-memory completion.
#[derive(Clone, Debug)]
pub struct Completion<T> {
    /// Aggregated estimate before clamping.
    pub estimate: DenseTensor<T>,
    pub runs: Vec<RunSummary>,
    pub traces: Vec<ConvergenceTrace>,
    pub timings: StageTimings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_s: f64,
    pub beta_search_s: f64,
    pub grouping_s: f64,
    pub solve_s: f64,
    pub aggregation_s: f64,
    pub write_s: f64,
}

fn with_group_context(e: Error, idx: usize, r: CubeCoord) -> Error {
    let ctx = format!("group {idx} (reference row {}, col {})", r.row, r.col);
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
        Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
        Error::Parameter(m) => Error::Parameter(format!("{ctx}: {m}")),
        other => other,
    }
}

/// NL-TT completion of a third-order observation.
///
/// Matching compares observed entries as set by `grouping.distance`; each
/// group is completed against the restriction of `mask` to its cubes and the
/// results are averaged back. Groups are returned in reference-grid order.
pub fn complete_nltt<T: Real>(
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    solver: &SolverConfig,
    grouping: &GroupingParams,
) -> Result<Completion<T>> {
    let &[n1, n2, n3] = t_obs.shape() else {
        return Err(input_err!("NL-TT needs a third-order tensor, got shape {:?}", t_obs.shape()));
    };
    let zf = t_obs.zero_filled(mask)?;
    let s = grouping.cube_size;

    let t0 = Instant::now();
    let grid = make_reference_grid(n1, n2, s, grouping.overlap)?;
    let members = grid
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let m = match_members_observed(&zf, mask, r, grouping.similar, s, grouping.window, grouping.distance)
                .map_err(|e| with_group_context(e, i, r))?;
            Ok(m.into_iter().map(|(c, _)| c).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let grouping_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let solved = members
        .par_iter()
        .enumerate()
        .map(|(i, mem)| {
            let r = grid[i];
            let run = || -> Result<_> {
                let stack = stack_cubes(&zf, mem, s)?;
                let gmask = stack_mask(mask, mem, s)?;
                let (x, trace) = solve(&stack, &gmask, solver)?;
                Ok((x, trace, gmask.count_known()))
            };
            run().map_err(|e| with_group_context(e, i, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let solve_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut acc = Aggregator::new([n1, n2, n3]);
    let mut runs = Vec::with_capacity(grid.len());
    let mut traces = Vec::with_capacity(grid.len());
    for ((r, mem), (x, trace, observed)) in grid.iter().zip(&members).zip(solved) {
        acc.add(&x, mem)?;
        runs.push(RunSummary::new(Some(*r), observed, &trace));
        traces.push(trace);
    }
    let estimate = acc.finish()?;
    let aggregation_s = t0.elapsed().as_secs_f64();

    Ok(Completion {
        estimate,
        runs,
        traces,
        timings: StageTimings {
            grouping_s,
            solve_s,
            aggregation_s,
            ..StageTimings::default()
        },
    })
}

/// SiLRTC-TT on the whole observation.
pub fn complete_baseline<T: Real>(
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    solver: &SolverConfig,
) -> Result<Completion<T>> {
    let zf = t_obs.zero_filled(mask)?;
    let t0 = Instant::now();
    let (estimate, trace) = solve(&zf, mask, solver)?;
    let run = RunSummary::new(None, mask.count_known(), &trace);
    Ok(Completion {
        estimate,
        runs: vec![run],
        traces: vec![trace],
        timings: StageTimings {
            solve_s: t0.elapsed().as_secs_f64(),
            ..StageTimings::default()
        },
    })
}

fn complete_with<T: Real>(
    method: Method,
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    solver: &SolverConfig,
    grouping: &GroupingParams,
) -> Result<Completion<T>> {
    match method {
        Method::Nltt => complete_nltt(t_obs, mask, solver, grouping),
        Method::SilrtcTt => complete_baseline(t_obs, mask, solver),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTrial {
    pub beta: f64,
    pub holdout_mse: f64,
}

/// Splits the observed entries into a fitting mask and a hold-out mask. Each
/// observed entry is withheld with probability `fraction`.
pub fn holdout_split(mask: &ObservationMask, fraction: f64, seed: u64) -> Result<(ObservationMask, ObservationMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = mask.known().to_vec();
    let mut held = vec![false; fit.len()];
    for (f, h) in fit.iter_mut().zip(held.iter_mut()) {
        if *f && rng.random::<f64>() < fraction {
            *f = false;
            *h = true;
        }
    }
    Ok((ObservationMask::new(mask.shape(), fit)?, ObservationMask::new(mask.shape(), held)?))
}

/// Completes once per candidate β with a hold-out split and returns the trials
/// and the β with the smallest hold-out MSE (first wins on ties).
pub fn select_beta<T: Real>(
    method: Method,
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    solver: &SolverConfig,
    grouping: &GroupingParams,
    holdout: f64,
    seed: u64,
) -> Result<(f64, Vec<BetaTrial>)> {
    let (fit, held) = holdout_split(mask, holdout, seed)?;
    let n_held = held.count_known();
    if n_held == 0 || fit.count_known() == 0 {
        return Err(input_err!("too few observed entries for a hold-out split"));
    }
    let mut trials = Vec::with_capacity(BETA_CANDIDATES.len());
    for &beta in &BETA_CANDIDATES {
        let cfg = SolverConfig { beta, ..solver.clone() };
        let c = complete_with(method, t_obs, &fit, &cfg, grouping)?;
        let se: f64 = c
            .estimate
            .data()
            .iter()
            .zip(t_obs.data())
            .zip(held.known())
            .filter(|(_, &h)| h)
            .map(|((&e, &t), _)| {
                let d = (e.to_f64_lossy().clamp(0.0, PEAK) - t.to_f64_lossy()).abs();
                d * d
            })
            .sum();
        trials.push(BetaTrial {
            beta,
            holdout_mse: se / n_held as f64,
        });
    }
    let best = trials
        .iter()
        .fold(None::<&BetaTrial>, |b, t| match b {
            Some(b) if b.holdout_mse <= t.holdout_mse => Some(b),
            _ => Some(t),
        })
        .map(|t| t.beta)
        .expect("non-empty candidate set");
    Ok((best, trials))
}

/// Report written to `report.json`; wall-clock timings go to `timings.json`
/// so that the report is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub method: Method,
    pub shape: Vec<usize>,
    pub observed_fraction: f64,
    pub beta: f64,
    pub beta_trials: Vec<BetaTrial>,
    /// Output clamped to `[0, 255]` before scoring.
    pub clamped: bool,
    /// Scores of the clamped output against the full input; absent when the
    /// image is smaller than the SSIM window.
    pub quality: Option<QualityScore>,
    pub runs: Vec<RunSummary>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub timings: StageTimings,
}

pub fn clamp_pixels<T: Real>(t: &DenseTensor<T>) -> DenseTensor<T> {
    let hi = T::lit(PEAK);
    t.map(|v| v.max(T::zero()).min(hi))
}

/// In-memory experiment: completes `truth` observed through `mask` and scores
/// the clamped result against `truth`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    truth: &DenseTensor<f64>,
    mask: &ObservationMask,
) -> Result<(DenseTensor<f64>, Vec<ConvergenceTrace>, CompletionReport)> {
    cfg.validate()?;
    truth.check_same_shape(mask.shape())?;
    let run = || -> Result<_> {
        let t0 = Instant::now();
        let (beta, beta_trials) = match cfg.beta_selection {
            BetaSelection::Fixed => (cfg.solver.beta, Vec::new()),
            BetaSelection::Grid => {
                select_beta(cfg.method, truth, mask, &cfg.solver, &cfg.grouping, cfg.holdout, cfg.seed)?
            }
        };
        let beta_search_s = t0.elapsed().as_secs_f64();
        let solver = SolverConfig { beta, ..cfg.solver.clone() };
        let c = complete_with(cfg.method, truth, mask, &solver, &cfg.grouping)?;
        Ok((beta, beta_trials, beta_search_s, c))
    };
    let (beta, beta_trials, beta_search_s, c) = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| param_err!("cannot start {n} workers: {e}"))?
            .install(run)?,
        None => run()?,
    };
    let out = clamp_pixels(&c.estimate);
    let shape = truth.shape();
    let quality = if shape.len() >= 2 && shape[0] >= SSIM_WINDOW && shape[1] >= SSIM_WINDOW {
        Some(quality(truth, &out, PEAK)?)
    } else {
        None
    };
    let report = CompletionReport {
        method: cfg.method,
        shape: shape.to_vec(),
        observed_fraction: mask.sampling_rate(),
        beta,
        beta_trials,
        clamped: true,
        quality,
        runs: c.runs,
        config: cfg.clone(),
        timings: StageTimings {
            beta_search_s,
            ..c.timings
        },
    };
    Ok((out, c.traces, report))
}

/// Loads `cfg.input`, builds the mask, completes, and writes into `cfg.out_dir`:
/// `completed.png`, `completed.dtr1`, `observed.png`, `report.json`,
/// `timings.json` and one CSV per run under `traces/`.
pub fn run(cfg: &ExperimentConfig) -> Result<CompletionReport> {
    cfg.validate()?;
    let t0 = Instant::now();
    let truth = load_tensor(&cfg.input)?;
    let mask = cfg.mask.build(truth.shape())?;
    let load_s = t0.elapsed().as_secs_f64();

    let (out, traces, mut report) = run_experiment(cfg, &truth, &mask)?;
    report.timings.load_s = load_s;

    let t0 = Instant::now();
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir.join("traces"))?;
    let image_ok = matches!(truth.shape(), [_, _] | [_, _, 1] | [_, _, 3]);
    if image_ok {
        save_image(&out, &dir.join("completed.png"))?;
        save_image(&truth.zero_filled(&mask)?, &dir.join("observed.png"))?;
    }
    write_dtr1(&out, &dir.join("completed.dtr1"))?;
    for (i, tr) in traces.iter().enumerate() {
        let name = match cfg.method {
            Method::Nltt => format!("group_{i:04}.csv"),
            Method::SilrtcTt => "global.csv".to_string(),
        };
        tr.write_csv(&dir.join("traces").join(name))?;
    }
    write_json(&dir.join("report.json"), &report)?;
    report.timings.write_s = t0.elapsed().as_secs_f64();
    write_json(&dir.join("timings.json"), &report.timings)?;
    Ok(report)
}

/// [`run`] with the method forced to NL-TT.
pub fn run_nltt(cfg: &ExperimentConfig) -> Result<CompletionReport> {
    run(&ExperimentConfig { method: Method::Nltt, ..cfg.clone() })
}

/// [`run`] with the method forced to SiLRTC-TT.
pub fn run_baseline(cfg: &ExperimentConfig) -> Result<CompletionReport> {
    run(&ExperimentConfig { method: Method::SilrtcTt, ..cfg.clone() })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
