//! ADMM for TT nuclear-norm tensor completion.
//!
//! Solves `min Σₖ αₖ‖X_[k]‖_*  s.t.  P_Ω(X) = P_Ω(T)` by splitting the norm
//! over auxiliary tensors `Mₖ` (one per canonical matricization) with
//! multipliers `Yₖ` and penalty `β`. One iteration is
//!
//! ```text
//! Mₖ ← fold_k( SVT_{1/β}( unfold_k(X + Yₖ/β) ) )     k = 1..j−1
//! X  ← P_Ωᶜ( Σₖ αₖ (Mₖ − Yₖ/β) ) + P_Ω(T)
//! Yₖ ← Yₖ + β (X − Mₖ)
//! ```
//!
//! starting from `X⁰ = P_Ω(T)`, `Yₖ⁰ = 0`, and stops once
//! `‖Xˡ⁺¹ − Xˡ‖_F / ‖Xˡ‖_F < tol` or after `max_iter` sweeps. The same solver
//! completes a single group (NL-TT) or a whole tensor (SiLRTC-TT).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, numeric_err, param_err, Error, Result};
use crate::scalar::Real;
use crate::svt::svt;
use crate::tensor::{split_dims, DenseTensor, ObservationMask};

/// Penalty values tried by grid search.
pub const BETA_CANDIDATES: [f64; 5] = [0.05, 0.08, 0.1, 0.3, 0.5];

/// Order of the `M` and `X` updates within one sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// `Mₖ` from the current `X`, then `X`, then `Yₖ`.
    #[default]
    MThenX,
    /// `X` from the previous `Mₖ`, then `Mₖ`, then `Yₖ`.
    XThenM,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub beta: f64,
    /// Split weights `αₖ`; `None` uses [`default_alpha`] for the input shape.
    pub alpha: Option<Vec<f64>>,
    pub max_iter: usize,
    pub tol: f64,
    pub order: UpdateOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            alpha: None,
            max_iter: 500,
            tol: 1e-4,
            order: UpdateOrder::MThenX,
        }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    /// Checks the scalar fields and returns the weights for `shape`.
    pub fn resolve_alpha(&self, shape: &[usize]) -> Result<Vec<f64>> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(param_err!("beta must be positive, got {}", self.beta));
        }
        if self.max_iter == 0 {
            return Err(param_err!("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(param_err!("tol must be positive, got {}", self.tol));
        }
        let alpha = match &self.alpha {
            Some(a) => a.clone(),
            None => default_alpha(shape)?,
        };
        check_alpha(&alpha, shape.len())?;
        Ok(alpha)
    }
}

pub(crate) fn check_alpha(alpha: &[f64], order: usize) -> Result<()> {
    if order < 2 {
        return Err(param_err!("TT nuclear norm needs at least 2 modes"));
    }
    if alpha.len() != order - 1 {
        return Err(param_err!(
            "expected {} weights for an order-{order} tensor, got {}",
            order - 1,
            alpha.len()
        ));
    }
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(param_err!("weights must be positive: {alpha:?}"));
    }
    let total: f64 = alpha.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(param_err!("weights must sum to 1, got {total}"));
    }
    Ok(())
}

/// Weights proportional to `δₖ = min(p_k, q_k)`, favouring balanced splits.
pub fn default_alpha(shape: &[usize]) -> Result<Vec<f64>> {
    if shape.len() < 2 {
        return Err(param_err!("TT nuclear norm needs at least 2 modes"));
    }
    let delta = (1..shape.len())
        .map(|k| split_dims(shape, k).map(|(p, q)| p.min(q) as f64))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = delta.iter().sum();
    Ok(delta.into_iter().map(|d| d / total).collect())
}

/// `Σₖ αₖ ‖unfold_k(x)‖_*`.
pub fn tt_nuclear_norm<T: Real>(x: &DenseTensor<T>, alpha: &[f64]) -> Result<T> {
    check_alpha(alpha, x.order())?;
    let mut total = T::zero();
    for (k, &a) in (1..x.order()).zip(alpha) {
        total += T::lit(a) * crate::svt::nuclear_norm(x.unfold(k)?.view())?;
    }
    Ok(total)
}

/// `Mₖ = fold_k(SVT_{1/β}(unfold_k(x + yₖ/β)))` and the nuclear norm of its
/// matricization.
pub fn update_m<T: Real>(
    x: &DenseTensor<T>,
    y_k: &DenseTensor<T>,
    beta: T,
    k: usize,
) -> Result<(DenseTensor<T>, T)> {
    if !(beta > T::zero()) {
        return Err(param_err!("beta must be positive, got {beta}"));
    }
    let inv_beta = T::one() / beta;
    let shifted = x.zip_map(y_k, |a, b| a + b * inv_beta)?;
    let (m, nuclear) = svt(shifted.unfold(k)?.view(), inv_beta).map_err(|e| match e {
        Error::Numeric(msg) => numeric_err!("{msg} (split k={k})"),
        other => other,
    })?;
    Ok((DenseTensor::fold_owned(m, x.shape(), k)?, nuclear))
}

/// `X = P_Ωᶜ(Σₖ αₖ(Mₖ − Yₖ/β)) + P_Ω(T)`.
pub fn update_x<T: Real>(
    m: &[DenseTensor<T>],
    y: &[DenseTensor<T>],
    alpha: &[T],
    beta: T,
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
) -> Result<DenseTensor<T>> {
    let splits = t_obs.order().saturating_sub(1);
    if m.len() != splits || y.len() != splits || alpha.len() != splits {
        return Err(param_err!(
            "expected {splits} auxiliaries, multipliers and weights, got {}, {}, {}",
            m.len(),
            y.len(),
            alpha.len()
        ));
    }
    t_obs.check_same_shape(mask.shape())?;
    for t in m.iter().chain(y) {
        t_obs.check_same_shape(t.shape())?;
    }
    let inv_beta = T::one() / beta;
    let mut out = vec![T::zero(); t_obs.len()];
    for ((mk, yk), &a) in m.iter().zip(y).zip(alpha) {
        for ((o, &mv), &yv) in out.iter_mut().zip(mk.data()).zip(yk.data()) {
            *o += a * (mv - yv * inv_beta);
        }
    }
    for ((o, &tv), &known) in out.iter_mut().zip(t_obs.data()).zip(mask.known()) {
        if known {
            *o = tv;
        }
    }
    Ok(DenseTensor::from_raw(t_obs.shape().to_vec(), out))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub rel_err: f64,
    pub objective: f64,
}

/// Per-iteration relative change and objective value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `iter,rel_err,objective` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,rel_err,objective\n");
        for r in &self.records {
            writeln!(s, "{},{:e},{:e}", r.iter, r.rel_err, r.objective).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("iter,rel_err,objective") {
            return Err(input_err!("trace CSV must start with 'iter,rel_err,objective'"));
        }
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || input_err!("malformed trace row '{l}'");
                if f.len() != 3 {
                    return Err(bad());
                }
                Ok(TraceRecord {
                    iter: f[0].parse().map_err(|_| bad())?,
                    rel_err: f[1].parse().map_err(|_| bad())?,
                    objective: f[2].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

/// Iterates of one ADMM run.
#[derive(Clone, Debug)]
pub struct SolverState<T> {
    pub x: DenseTensor<T>,
    pub m: Vec<DenseTensor<T>>,
    pub y: Vec<DenseTensor<T>>,
    pub iter: usize,
    pub rel_err: f64,
    pub objective: f64,
}

/// Step-wise ADMM driver; [`solve`] runs it to convergence.
#[derive(Clone, Debug)]
pub struct AdmmSolver<'a, T> {
    t_obs: &'a DenseTensor<T>,
    mask: &'a ObservationMask,
    alpha: Vec<T>,
    beta: T,
    order: UpdateOrder,
    state: SolverState<T>,
}

impl<'a, T: Real> AdmmSolver<'a, T> {
    pub fn new(t_obs: &'a DenseTensor<T>, mask: &'a ObservationMask, cfg: &SolverConfig) -> Result<Self> {
        t_obs.check_same_shape(mask.shape())?;
        let alpha = cfg.resolve_alpha(t_obs.shape())?;
        if mask.count_known() == 0 {
            return Err(input_err!("observation set is empty; nothing to complete from"));
        }
        let x = t_obs.zero_filled(mask)?;
        let zeros = DenseTensor::zeros(t_obs.shape())?;
        let splits = t_obs.order() - 1;
        let mut solver = Self {
            t_obs,
            mask,
            alpha: alpha.into_iter().map(T::lit).collect(),
            beta: T::lit(cfg.beta),
            order: cfg.order,
            state: SolverState {
                m: vec![x.clone(); splits],
                x,
                y: vec![zeros; splits],
                iter: 0,
                rel_err: f64::INFINITY,
                objective: f64::NAN,
            },
        };
        if solver.order == UpdateOrder::XThenM {
            // With Mₖ = X⁰ the first X update would reproduce X⁰ and stop the
            // run at once; seed Mₖ with one prox step instead.
            solver.update_all_m()?;
        }
        Ok(solver)
    }

    pub fn state(&self) -> &SolverState<T> {
        &self.state
    }

    pub fn into_state(self) -> SolverState<T> {
        self.state
    }

    fn update_all_m(&mut self) -> Result<T> {
        let mut objective = T::zero();
        for k in 1..self.t_obs.order() {
            let (m, nuclear) = update_m(&self.state.x, &self.state.y[k - 1], self.beta, k)?;
            self.state.m[k - 1] = m;
            objective += self.alpha[k - 1] * nuclear;
        }
        Ok(objective)
    }

    fn compute_x(&self) -> Result<DenseTensor<T>> {
        update_x(&self.state.m, &self.state.y, &self.alpha, self.beta, self.t_obs, self.mask)
    }

    /// Runs one full sweep and returns its trace record.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let iter = self.state.iter + 1;
        let x_prev_norm = self.state.x.frobenius_norm();
        let (x_new, objective) = match self.order {
            UpdateOrder::MThenX => {
                let objective = self.update_all_m()?;
                (self.compute_x()?, objective)
            }
            UpdateOrder::XThenM => {
                let x_new = self.compute_x()?;
                let x_old = std::mem::replace(&mut self.state.x, x_new);
                let objective = self.update_all_m()?;
                let x_new = std::mem::replace(&mut self.state.x, x_old);
                (x_new, objective)
            }
        };
        if x_new.data().iter().any(|v| !v.is_finite()) {
            return Err(numeric_err!("non-finite iterate at iteration {iter}"));
        }
        for (yk, mk) in self.state.y.iter_mut().zip(&self.state.m) {
            let beta = self.beta;
            for ((yv, &xv), &mv) in yk.data_mut().iter_mut().zip(x_new.data()).zip(mk.data()) {
                *yv += beta * (xv - mv);
            }
        }
        let diff = x_new.distance(&self.state.x)?.to_f64_lossy();
        let denom = x_prev_norm.to_f64_lossy();
        let rel_err = if denom > 0.0 {
            diff / denom
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.state.x = x_new;
        self.state.iter = iter;
        self.state.rel_err = rel_err;
        self.state.objective = objective.to_f64_lossy();
        Ok(TraceRecord {
            iter,
            rel_err,
            objective: self.state.objective,
        })
    }
}

/// Runs ADMM until the relative change drops below `cfg.tol` or `cfg.max_iter`
/// sweeps have been made.
pub fn solve<T: Real>(
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(DenseTensor<T>, ConvergenceTrace)> {
    let mut solver = AdmmSolver::new(t_obs, mask, cfg)?;
    let mut trace = ConvergenceTrace::default();
    for _ in 0..cfg.max_iter {
        let rec = solver.step()?;
        trace.records.push(rec);
        if rec.rel_err < cfg.tol {
            break;
        }
    }
    Ok((solver.into_state().x, trace))
}

/// Whole-tensor TT nuclear-norm completion (SiLRTC-TT).
pub fn silrtc_tt<T: Real>(
    t_obs: &DenseTensor<T>,
    mask: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(DenseTensor<T>, ConvergenceTrace)> {
    solve(t_obs, mask, cfg)
}
