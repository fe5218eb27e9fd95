//! Numerical certificates for the low-TT-rank structure of grouped tensors.
//!
//! Each constructor builds an explicit low-TT-rank approximant of a fourth-order
//! group `X` (shape `s × s × n₃ × h`), measures the residual, and reports it
//! against the closed-form bound together with the matricization ranks of the
//! approximant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{check_alpha, default_alpha, tt_nuclear_norm};
use crate::error::{param_err, Result};
use crate::scalar::Real;
use crate::svt::{numerical_rank, singular_values};
use crate::tensor::{split_dims, DenseTensor};

/// Roundoff allowance when checking `bound ≥ residual`.
pub const SLACK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// Every column fiber replaced by the mean fiber: TT-rank (1,1,1).
    MeanFiber,
    /// Every mode-4 slice replaced by the mean slice: TT-rank (r₁,r₂,1).
    MeanSlice,
    /// First `r` slices kept, the rest replaced by slice 1: TT-rank (·,·,≤r).
    RetainedSlices,
    /// Lipschitz bound of the weighted TT nuclear norm.
    NuclearLipschitz,
    /// Componentwise singular value perturbation bound.
    SingularValueShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub certificate: Certificate,
    /// Matricization ranks of the approximant (or of the unperturbed tensor).
    pub tt_ranks: Vec<usize>,
    /// Whether `tt_ranks` satisfies the structural rank claim.
    pub ranks_ok: bool,
    /// Deviation parameter (ε, ε̂ or ε̃) the bound is stated in.
    pub epsilon: f64,
    pub residual: f64,
    pub bound: f64,
    pub slack: f64,
}

impl PerturbationReport {
    fn new(certificate: Certificate, tt_ranks: Vec<usize>, ranks_ok: bool, epsilon: f64, residual: f64, bound: f64) -> Self {
        Self {
            certificate,
            tt_ranks,
            ranks_ok,
            epsilon,
            residual,
            bound,
            slack: bound - residual,
        }
    }

    pub fn holds(&self) -> bool {
        self.ranks_ok && self.slack >= -SLACK_TOL
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Ranks of every canonical matricization, zero-threshold `1e-12 · σ₁`.
pub fn tt_ranks<T: Real>(x: &DenseTensor<T>) -> Result<Vec<usize>> {
    (1..x.order())
        .map(|k| numerical_rank(x.unfold(k)?.view()))
        .collect()
}

fn group_dims<T: Real>(x: &DenseTensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [s1, s2, n3, h] => Ok((s1, s2, n3, h)),
        _ => Err(param_err!(
            "perturbation certificates need a fourth-order group, got shape {:?}",
            x.shape()
        )),
    }
}

fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Mean column fiber broadcast to every `(i₂, i₃, i₄)`.
pub fn rank111_approx<T: Real>(x: &DenseTensor<T>) -> Result<(DenseTensor<T>, PerturbationReport)> {
    let (s, s2, n3, h) = group_dims(x)?;
    let fibers = s2 * n3 * h;
    let mut mean = vec![T::zero(); s];
    for fiber in x.data().chunks(s) {
        for (m, &v) in mean.iter_mut().zip(fiber) {
            *m += v;
        }
    }
    let count = T::from_usize(fibers).unwrap();
    mean.iter_mut().for_each(|m| *m /= count);
    let eps = x
        .data()
        .chunks(s)
        .map(|f| dist2(f, &mean))
        .fold(T::zero(), T::max);
    let y = DenseTensor::from_raw(x.shape().to_vec(), mean.repeat(fibers));
    let residual = x.distance(&y)?;
    let ranks = tt_ranks(&y)?;
    let ranks_ok = ranks.iter().all(|&r| r <= 1);
    let bound = T::from_usize(fibers).unwrap().sqrt() * eps;
    let report = PerturbationReport::new(
        Certificate::MeanFiber,
        ranks,
        ranks_ok,
        eps.to_f64_lossy(),
        residual.to_f64_lossy(),
        bound.to_f64_lossy(),
    );
    Ok((y, report))
}

/// Mean mode-4 slice replicated `h` times.
pub fn rank_rr1_approx<T: Real>(x: &DenseTensor<T>) -> Result<(DenseTensor<T>, PerturbationReport)> {
    let (s, s2, n3, h) = group_dims(x)?;
    let cube = s * s2 * n3;
    let mut mean = vec![T::zero(); cube];
    for slice in x.data().chunks(cube) {
        for (m, &v) in mean.iter_mut().zip(slice) {
            *m += v;
        }
    }
    let count = T::from_usize(h).unwrap();
    mean.iter_mut().for_each(|m| *m /= count);
    let eps = x
        .data()
        .chunks(cube)
        .map(|sl| dist2(sl, &mean))
        .fold(T::zero(), T::max);
    let y = DenseTensor::from_raw(x.shape().to_vec(), mean.repeat(h));
    let residual = x.distance(&y)?;
    let ranks = tt_ranks(&y)?;
    let ranks_ok = ranks[0] <= s.min(s2 * n3 * h)
        && ranks[1] <= (s * s2).min(n3 * h)
        && ranks[2] <= 1;
    let bound = count.sqrt() * eps;
    let report = PerturbationReport::new(
        Certificate::MeanSlice,
        ranks,
        ranks_ok,
        eps.to_f64_lossy(),
        residual.to_f64_lossy(),
        bound.to_f64_lossy(),
    );
    Ok((y, report))
}

/// Keeps slices `1..=r` and fills slots `r+1..=h` with slice 1.
///
/// The deviation `ε̃` is `max_{i₄>r} ‖X(:,:,:,i₄) − X(:,:,:,1)‖_F`.
pub fn rank_rrr_approx<T: Real>(x: &DenseTensor<T>, r: usize) -> Result<(DenseTensor<T>, PerturbationReport)> {
    let (s, s2, n3, h) = group_dims(x)?;
    if r == 0 || r > h {
        return Err(param_err!("retained slice count must be in 1..={h}, got {r}"));
    }
    let cube = s * s2 * n3;
    let first = &x.data()[..cube];
    let mut data = x.data()[..r * cube].to_vec();
    for _ in r..h {
        data.extend_from_slice(first);
    }
    let eps = x.data()[r * cube..]
        .chunks(cube)
        .map(|sl| dist2(sl, first))
        .fold(T::zero(), T::max);
    let y = DenseTensor::from_raw(x.shape().to_vec(), data);
    let residual = x.distance(&y)?;
    let ranks = tt_ranks(&y)?;
    let ranks_ok = ranks[2] <= r;
    let bound = T::from_usize(h - r).unwrap().sqrt() * eps;
    let report = PerturbationReport::new(
        Certificate::RetainedSlices,
        ranks,
        ranks_ok,
        eps.to_f64_lossy(),
        residual.to_f64_lossy(),
        bound.to_f64_lossy(),
    );
    Ok((y, report))
}

/// Explicit Lipschitz constant `c = Σₖ αₖ · min(p_k, q_k)` of the weighted TT
/// nuclear norm with respect to the Frobenius norm.
pub fn lipschitz_constant(shape: &[usize], alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha, shape.len())?;
    (1..shape.len())
        .zip(alpha)
        .map(|(k, &a)| split_dims(shape, k).map(|(p, q)| a * p.min(q) as f64))
        .sum()
}

/// Checks `|s(y + e) − s(y)| ≤ c‖e‖_F` for the weighted TT nuclear norm `s`.
pub fn ttnn_lipschitz_check<T: Real>(y: &DenseTensor<T>, e: &DenseTensor<T>, alpha: &[f64]) -> Result<PerturbationReport> {
    y.check_same_shape(e.shape())?;
    let x = y.zip_map(e, |a, b| a + b)?;
    let sx = tt_nuclear_norm(&x, alpha)?.to_f64_lossy();
    let sy = tt_nuclear_norm(y, alpha)?.to_f64_lossy();
    let c = lipschitz_constant(y.shape(), alpha)?;
    let bound = c * e.frobenius_norm().to_f64_lossy();
    Ok(PerturbationReport::new(
        Certificate::NuclearLipschitz,
        tt_ranks(y)?,
        true,
        e.frobenius_norm().to_f64_lossy(),
        (sx - sy).abs(),
        bound,
    ))
}

/// Checks `max_i |σᵢ(A + E) − σᵢ(A)| ≤ ‖E‖_F` for matrices.
pub fn singular_value_shift_check<T: Real>(
    a: ndarray::ArrayView2<'_, T>,
    e: ndarray::ArrayView2<'_, T>,
) -> Result<PerturbationReport> {
    if a.dim() != e.dim() {
        return Err(param_err!("matrix shapes differ: {:?} vs {:?}", a.dim(), e.dim()));
    }
    let sa = singular_values(a)?;
    let sum = &a + &e;
    let sb = singular_values(sum.view())?;
    let shift = sa
        .iter()
        .zip(&sb)
        .map(|(&x, &y)| (x - y).abs())
        .fold(T::zero(), T::max);
    let enorm = e.iter().map(|&v| v * v).sum::<T>().sqrt();
    Ok(PerturbationReport::new(
        Certificate::SingularValueShift,
        vec![crate::svt::numerical_rank_of(sa.as_slice().unwrap())],
        true,
        enorm.to_f64_lossy(),
        shift.to_f64_lossy(),
        enorm.to_f64_lossy(),
    ))
}

/// Group made of `base` plus independent noise of amplitude `noise` per slice.
pub fn similar_group(shape: [usize; 4], noise: f64, rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    let cube = shape[0] * shape[1] * shape[2];
    let base: Vec<f64> = (0..cube).map(|_| rng.random_range(0.0..255.0)).collect();
    let mut data = Vec::with_capacity(cube * shape[3]);
    for _ in 0..shape[3] {
        data.extend(base.iter().map(|&b| b + noise * rng.random_range(-1.0..1.0)));
    }
    DenseTensor::from_raw(shape.to_vec(), data)
}

/// Runs every certificate on seeded random groups of shape `shape` and on
/// random Lipschitz pairs. Returns one report per check.
pub fn certificate_suite(shape: [usize; 4], groups: usize, pairs: usize, seed: u64) -> Result<Vec<PerturbationReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let h = shape[3];
    for g in 0..groups {
        let noise = [0.0, 1.0, 10.0, 100.0][g % 4];
        let x = similar_group(shape, noise, &mut rng);
        out.push(rank111_approx(&x)?.1);
        out.push(rank_rr1_approx(&x)?.1);
        let r = 1 + g % h;
        out.push(rank_rrr_approx(&x, r)?.1);
    }
    let alpha = default_alpha(&shape)?;
    for p in 0..pairs {
        let y = similar_group(shape, 5.0, &mut rng);
        let scale = [1e-3, 1.0, 50.0][p % 3];
        let e = DenseTensor::from_raw(
            shape.to_vec(),
            (0..y.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        );
        out.push(ttnn_lipschitz_check(&y, &e, &alpha)?);
    }
    Ok(out)
}
