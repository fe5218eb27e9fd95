//! Thin SVD and singular value thresholding.

use std::sync::OnceLock;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};

use crate::error::{numeric_err, param_err, Result};
use crate::scalar::{Real, SvdKernel};

/// Relative cutoff below which singular values count as zero for rank reporting.
pub const RANK_RTOL: f64 = 1e-12;

/// Thin SVD `A = U·diag(σ)·Vᵀ` with `r = min(m, n)` columns in `u` and `v`.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    pub u: Array2<T>,
    pub sigma: Array1<T>,
    pub v: Array2<T>,
}

impl<T: Real> SvdFactors<T> {
    /// Number of singular values above `RANK_RTOL · σ₁`.
    pub fn rank(&self) -> usize {
        numerical_rank_of(self.sigma.as_slice().expect("contiguous"))
    }

    pub fn reconstruct(&self) -> Array2<T> {
        let us = &self.u * &self.sigma.view().insert_axis(Axis(0));
        us.dot(&self.v.t())
    }
}

pub(crate) fn numerical_rank_of<T: Real>(sigma: &[T]) -> usize {
    let Some(&top) = sigma.first() else { return 0 };
    if top <= T::zero() {
        return 0;
    }
    let cut = top * T::lit(RANK_RTOL);
    sigma.iter().filter(|&&s| s > cut).count()
}

fn check_finite<T: Real>(a: &ArrayView2<'_, T>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(param_err!(
            "matrix {}×{} has non-finite entries",
            a.nrows(),
            a.ncols()
        ));
    }
    Ok(())
}

/// Factorizes a sparse, rank-deficient tall matrix once per process and checks
/// the factors. Some OpenBLAS builds select CPU kernels that silently return
/// wrong `U` for such inputs; forcing `OPENBLAS_CORETYPE=Haswell` avoids them.
pub fn lapack_self_check() -> Result<()> {
    static OK: OnceLock<bool> = OnceLock::new();
    let ok = *OK.get_or_init(|| {
        let (m, n) = (256, 126);
        let a = Array2::from_shape_fn((m, n).f(), |(i, j)| {
            if (i * 31 + j * 17) % 23 == 0 {
                ((i + j) % 5) as f64
            } else {
                0.0
            }
        });
        let Some((u, s, vt)) = f64::gesvd(a.view()) else { return false };
        let us = &u * &s.view().insert_axis(Axis(0));
        let recon = us.dot(&vt) - &a;
        let gram = u.t().dot(&u) - Array2::<f64>::eye(n);
        let worst = |x: &Array2<f64>| x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        worst(&recon) < 1e-10 && worst(&gram) < 1e-10
    });
    if ok {
        Ok(())
    } else {
        Err(numeric_err!(
            "the LAPACK backend returned inconsistent SVD factors; \
             rerun with OPENBLAS_CORETYPE=Haswell"
        ))
    }
}

/// Thin SVD `A = U·diag(σ)·Vᵀ` with `U: m×r`, `V: n×r`, `r = min(m, n)` and
/// `σ` non-increasing.
pub fn thin_svd<T: Real>(a: ArrayView2<'_, T>) -> Result<SvdFactors<T>> {
    check_finite(&a)?;
    lapack_self_check()?;
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(param_err!("empty matrix {m}×{n}"));
    }
    let (u, sigma, vt) =
        T::gesvd(a).ok_or_else(|| numeric_err!("SVD did not converge for {m}×{n} matrix"))?;
    Ok(SvdFactors {
        u,
        sigma,
        v: vt.reversed_axes(),
    })
}

/// Singular value thresholding `U·S_τ(Σ)·Vᵀ`, the proximal map of `τ‖·‖_*`.
///
/// Returns the thresholded matrix in column-major layout together with its
/// nuclear norm `Σ max(σᵢ − τ, 0)`.
pub fn svt<T: Real>(a: ArrayView2<'_, T>, tau: T) -> Result<(Array2<T>, T)> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(param_err!("threshold must be positive and finite, got {tau}"));
    }
    let (m, n) = a.dim();
    let f = thin_svd(a)?;
    let kept = f.sigma.iter().take_while(|&&s| s > tau).count();
    let mut out = Array2::<T>::zeros((m, n).f());
    if kept == 0 {
        return Ok((out, T::zero()));
    }
    let shrunk: Array1<T> = f.sigma.slice(ndarray::s![..kept]).mapv(|s| s - tau);
    let nuclear = shrunk.iter().copied().sum();
    let us = &f.u.slice(ndarray::s![.., ..kept]) * &shrunk.view().insert_axis(Axis(0));
    let v = f.v.slice(ndarray::s![.., ..kept]);
    general_mat_mul(T::one(), &us, &v.t(), T::zero(), &mut out);
    Ok((out, nuclear))
}

pub fn nuclear_norm<T: Real>(a: ArrayView2<'_, T>) -> Result<T> {
    Ok(thin_svd(a)?.sigma.iter().copied().sum())
}

pub fn singular_values<T: Real>(a: ArrayView2<'_, T>) -> Result<Array1<T>> {
    Ok(thin_svd(a)?.sigma)
}

/// Rank with singular values below `RANK_RTOL · σ₁` treated as zero.
pub fn numerical_rank<T: Real>(a: ArrayView2<'_, T>) -> Result<usize> {
    Ok(thin_svd(a)?.rank())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0))
    }

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn check_factors(a: &Array2<f64>) {
        let f = thin_svd(a.view()).unwrap();
        let r = a.nrows().min(a.ncols());
        assert_eq!(f.u.dim(), (a.nrows(), r));
        assert_eq!(f.v.dim(), (a.ncols(), r));
        assert!(f.sigma.windows(2).into_iter().all(|w| w[0] >= w[1]));
        assert!(f.sigma.iter().all(|&s| s >= 0.0));
        let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let resid = &f.reconstruct() - a;
        assert!(resid.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 * scale);
        let eye = Array2::<f64>::eye(r);
        assert!(max_abs(&(f.u.t().dot(&f.u) - &eye)) < 1e-10);
        assert!(max_abs(&(f.v.t().dot(&f.v) - &eye)) < 1e-10);
    }

    #[test]
    fn identity_and_diagonal() {
        let s = singular_values(Array2::<f64>::eye(3).view()).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let s = singular_values(array![[3.0f64, 0.0], [0.0, 1.0]].view()).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_factor_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, n) in &[(5, 3), (3, 5), (4, 4), (1, 6), (6, 1), (40, 9), (40, 40), (64, 192), (192, 64), (16, 2016)] {
            check_factors(&random(m, n, &mut rng));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let a = array![[1.0, f64::NAN]];
        assert!(matches!(thin_svd(a.view()), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn svt_diag_example() {
        let (m, nn) = svt(array![[3.0f64, 0.0], [0.0, 1.0]].view(), 2.0).unwrap();
        assert!((m[[0, 0]] - 1.0).abs() < 1e-14);
        assert!(m[[0, 1]].abs() < 1e-14 && m[[1, 0]].abs() < 1e-14 && m[[1, 1]].abs() < 1e-14);
        assert!((nn - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svt_full_shrinkage_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(4, 6, &mut rng);
        let top = singular_values(a.view()).unwrap()[0];
        let (m, nn) = svt(a.view(), top).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        assert_eq!(nn, 0.0);
    }

    #[test]
    fn svt_rejects_nonpositive_tau() {
        let a = Array2::<f64>::eye(2);
        assert!(svt(a.view(), 0.0).is_err());
        assert!(svt(a.view(), -1.0).is_err());
    }

    #[test]
    fn svt_vanishing_threshold_recovers_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(5, 4, &mut rng);
        let (m, _) = svt(a.view(), 1e-12).unwrap();
        let err = (&m - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 4.0 * 1e-12 * 1.01, "err {err}");
    }

    #[test]
    fn nuclear_norm_examples() {
        assert_eq!(nuclear_norm(Array2::<f64>::zeros((3, 2)).view()).unwrap(), 0.0);
        let nn = nuclear_norm(array![[3.0f64, 0.0], [0.0, 1.0]].view()).unwrap();
        assert!((nn - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rank_threshold() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert_eq!(numerical_rank(a.view()).unwrap(), 1);
        assert_eq!(numerical_rank(Array2::<f64>::zeros((2, 2)).view()).unwrap(), 0);
        assert_eq!(numerical_rank(Array2::<f64>::eye(3).view()).unwrap(), 3);
    }

    #[test]
    fn single_precision_path() {
        let a = array![[3.0f32, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let f = thin_svd(a.view()).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-6 && (f.sigma[1] - 1.0).abs() < 1e-6);
        let (m, nn) = svt(a.view(), 2.0f32).unwrap();
        assert!((m[[0, 0]] - 1.0).abs() < 1e-6 && (nn - 1.0).abs() < 1e-6);
    }
}
