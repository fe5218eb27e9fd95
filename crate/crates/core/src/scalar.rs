//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All tensor and solver code is written against [`Real`], a thin extension of
//! [`num_traits::Float`]. The only operation that cannot be expressed through
//! `num-traits` is the dense SVD, which is dispatched to LAPACK per concrete
//! type through [`SvdKernel`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::os::raw::{c_char, c_int};

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

// Provides the LAPACK symbols.
use openblas_src as _;

/// Raw LAPACK thin SVD (`?gesvd` with `JOBU = JOBVT = 'S'`) for a concrete
/// float type.
///
/// Returns `(u, sigma, vt)` with `u: m×r`, `vt: r×n`, `r = min(m, n)`, or
/// `None` if the backend reports a convergence failure.
pub trait SvdKernel: Sized {
    fn gesvd(a: ArrayView2<'_, Self>) -> Option<(Array2<Self>, Array1<Self>, Array2<Self>)>;
}

macro_rules! impl_svd_kernel {
    ($t:ty, $f:path) => {
        impl SvdKernel for $t {
            fn gesvd(
                a: ArrayView2<'_, Self>,
            ) -> Option<(Array2<Self>, Array1<Self>, Array2<Self>)> {
                let (m, n) = a.dim();
                let k = m.min(n);
                // Column-major copy; LAPACK overwrites it.
                let mut buf: Vec<$t> = a.t().iter().copied().collect();
                let mut s = vec![0.0 as $t; k];
                let mut u = vec![0.0 as $t; m * k];
                let mut vt = vec![0.0 as $t; k * n];
                let (mi, ni, ki) = (m as c_int, n as c_int, k as c_int);
                let job = b"S".as_ptr() as *const c_char;
                let mut info: c_int = 0;
                let mut query = [0.0 as $t];
                // SAFETY: every buffer has the extent LAPACK expects for
                // JOBU = JOBVT = 'S' with lda = ldu = m and ldvt = k.
                unsafe {
                    $f(
                        job, job, &mi, &ni, buf.as_mut_ptr(), &mi, s.as_mut_ptr(), u.as_mut_ptr(),
                        &mi, vt.as_mut_ptr(), &ki, query.as_mut_ptr(), &-1, &mut info,
                    );
                }
                if info != 0 {
                    return None;
                }
                let lwork = query[0] as c_int;
                let mut work = vec![0.0 as $t; lwork.max(1) as usize];
                unsafe {
                    $f(
                        job, job, &mi, &ni, buf.as_mut_ptr(), &mi, s.as_mut_ptr(), u.as_mut_ptr(),
                        &mi, vt.as_mut_ptr(), &ki, work.as_mut_ptr(), &lwork, &mut info,
                    );
                }
                if info != 0 {
                    return None;
                }
                Some((
                    Array2::from_shape_vec((m, k).f(), u).ok()?,
                    Array1::from(s),
                    Array2::from_shape_vec((k, n).f(), vt).ok()?,
                ))
            }
        }
    };
}

impl_svd_kernel!(f32, lapack_sys::sgesvd_);
impl_svd_kernel!(f64, lapack_sys::dgesvd_);

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + SvdKernel
    + 'static
{
    /// Lossy conversion from `f64`, used for literals and configuration values.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
