//! Dense N-way tensors, observation masks and canonical matricization.
//!
//! Storage is first-index-fastest (column-major generalised to N modes), so the
//! mode-`k` canonical matricization is a reinterpretation of the same buffer
//! as a `(n_1⋯n_k) × (n_{k+1}⋯n_j)` column-major matrix.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{param_err, Result};
use crate::scalar::Real;

/// Largest supported tensor order.
pub const MAX_ORDER: usize = 8;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_ORDER {
        return Err(param_err!(
            "tensor order must be in 1..={MAX_ORDER}, got {}",
            shape.len()
        ));
    }
    if let Some(d) = shape.iter().position(|&n| n == 0) {
        return Err(param_err!("extent of mode {} is zero", d + 1));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| param_err!("tensor shape {shape:?} overflows usize"))
}

/// Row and column counts `(p_k, q_k)` of the mode-`k` canonical matricization.
pub fn split_dims(shape: &[usize], k: usize) -> Result<(usize, usize)> {
    if k == 0 || k >= shape.len() {
        return Err(param_err!(
            "split index k={k} out of range 1..={} for order-{} tensor",
            shape.len().saturating_sub(1),
            shape.len()
        ));
    }
    Ok((shape[..k].iter().product(), shape[k..].iter().product()))
}

/// Advances a multi-index in first-index-fastest order. Returns `false` after
/// the last index.
pub(crate) fn advance_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for (i, &n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < n {
            return true;
        }
        *i = 0;
    }
    false
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> DenseTensor<T> {
    /// Wraps `data` (first-index-fastest) as a tensor of the given shape.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(param_err!(
                "data length {} does not match shape {shape:?} ({len} entries)",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(param_err!("non-finite value at linear index {i}"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        loop {
            data.push(f(&idx));
            if !advance_index(&mut idx, shape) {
                break;
            }
        }
        Self::new(shape, data)
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Linear offset of a 0-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            debug_assert!(i < n);
            off += i * stride;
            stride *= n;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other.shape())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.shape.clone(), data))
    }

    pub(crate) fn check_same_shape(&self, other: &[usize]) -> Result<()> {
        if self.shape != other {
            return Err(param_err!(
                "shape mismatch: {:?} vs {:?}",
                self.shape,
                other
            ));
        }
        Ok(())
    }

    /// Elementwise inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius(&self.data)
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt())
    }

    /// Mode-`k` canonical matricization (`1 ≤ k < order`). Zero-copy.
    pub fn unfold(&self, k: usize) -> Result<Matricization<'_, T>> {
        let (rows, cols) = split_dims(&self.shape, k)?;
        let view = ArrayView2::from_shape((rows, cols).f(), &self.data)
            .expect("buffer length matches shape");
        Ok(Matricization { k, view })
    }

    /// Inverse of [`unfold`](Self::unfold): reinterprets a `p_k × q_k` matrix
    /// as a tensor of `shape`.
    pub fn fold(matrix: ArrayView2<'_, T>, shape: &[usize], k: usize) -> Result<Self> {
        check_shape(shape)?;
        let (rows, cols) = split_dims(shape, k)?;
        if matrix.dim() != (rows, cols) {
            return Err(param_err!(
                "matrix is {}×{} but shape {shape:?} split at k={k} needs {rows}×{cols}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        // Column-major traversal of the matrix is the tensor's linear order.
        let data = match matrix.t().as_slice() {
            Some(s) => s.to_vec(),
            None => matrix.t().iter().copied().collect(),
        };
        Self::new(shape, data)
    }

    /// Folds an owned matrix, reusing its buffer when it is column-major.
    pub fn fold_owned(matrix: Array2<T>, shape: &[usize], k: usize) -> Result<Self> {
        if matrix.t().is_standard_layout() {
            check_shape(shape)?;
            let (rows, cols) = split_dims(shape, k)?;
            if matrix.dim() != (rows, cols) {
                return Self::fold(matrix.view(), shape, k);
            }
            let (data, offset) = matrix.into_raw_vec_and_offset();
            debug_assert!(matches!(offset, None | Some(0)));
            return Self::new(shape, data);
        }
        Self::fold(matrix.view(), shape, k)
    }

    /// `P_Ω(fill) + P_{Ωᶜ}(self)`: observed entries from `fill`, the rest from `self`.
    pub fn project(&self, mask: &ObservationMask, fill: &Self) -> Result<Self> {
        self.check_same_shape(mask.shape())?;
        self.check_same_shape(fill.shape())?;
        let data = self
            .data
            .iter()
            .zip(&fill.data)
            .zip(mask.known())
            .map(|((&t, &f), &known)| if known { f } else { t })
            .collect();
        Ok(Self::from_raw(self.shape.clone(), data))
    }

    /// `P_Ω(self)`: unobserved entries set to zero.
    pub fn zero_filled(&self, mask: &ObservationMask) -> Result<Self> {
        self.check_same_shape(mask.shape())?;
        let data = self
            .data
            .iter()
            .zip(mask.known())
            .map(|(&v, &known)| if known { v } else { T::zero() })
            .collect();
        Ok(Self::from_raw(self.shape.clone(), data))
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> DenseTensor<U> {
        DenseTensor::from_raw(
            self.shape.clone(),
            self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        )
    }
}

pub(crate) fn frobenius<T: Real>(data: &[T]) -> T {
    data.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Mode-`k` canonical matricization borrowed from a [`DenseTensor`].
#[derive(Clone, Debug)]
pub struct Matricization<'a, T> {
    k: usize,
    view: ArrayView2<'a, T>,
}

impl<'a, T: Real> Matricization<'a, T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.view.nrows()
    }

    pub fn cols(&self) -> usize {
        self.view.ncols()
    }

    pub fn view(&self) -> ArrayView2<'a, T> {
        self.view
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius(self.view.as_slice_memory_order().expect("contiguous"))
    }

    /// 0-based `(row, col)` position of a 0-based tensor multi-index.
    pub fn position(shape: &[usize], k: usize, idx: &[usize]) -> (usize, usize) {
        let mut a = 0;
        let mut stride = 1;
        for d in 0..k {
            a += idx[d] * stride;
            stride *= shape[d];
        }
        let mut b = 0;
        stride = 1;
        for d in k..shape.len() {
            b += idx[d] * stride;
            stride *= shape[d];
        }
        (a, b)
    }
}

/// Boolean tensor marking the observed index set Ω.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    shape: Vec<usize>,
    known: Vec<bool>,
}

impl ObservationMask {
    pub fn new(shape: &[usize], known: Vec<bool>) -> Result<Self> {
        let len = check_shape(shape)?;
        if known.len() != len {
            return Err(param_err!(
                "mask length {} does not match shape {shape:?}",
                known.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            known,
        })
    }

    pub fn filled(shape: &[usize], value: bool) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            known: vec![value; len],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> bool) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut known = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        loop {
            known.push(f(&idx));
            if !advance_index(&mut idx, shape) {
                break;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            known,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> bool {
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            off += i * stride;
            stride *= n;
        }
        self.known[off]
    }

    pub fn count_known(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.count_known() as f64 / self.known.len() as f64
    }

    /// Mask with observed and missing entries swapped.
    pub fn complement(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            known: self.known.iter().map(|&k| !k).collect(),
        }
    }
}
