//! Oracles and generators shared by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use nltt::{DenseTensor, ObservationMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| rng.random_range(lo..hi)).unwrap()
}

pub fn random_shape(order: usize, max_extent: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..order).map(|_| rng.random_range(1..=max_extent)).collect()
}

/// Row and column of entry `idx` in the mode-`k` matricization, straight from
/// `a = 1 + Σ_{d≤k} (i_d − 1) Π_{e<d} n_e` and the same over the remaining
/// modes, evaluated with 1-based indices and shifted back.
pub fn direct_position(shape: &[usize], k: usize, idx: &[usize]) -> (usize, usize) {
    let one_based: Vec<usize> = idx.iter().map(|i| i + 1).collect();
    let mut a = 1;
    for d in 0..k {
        let prod: usize = shape[..d].iter().product();
        a += (one_based[d] - 1) * prod;
    }
    let mut b = 1;
    for d in k..shape.len() {
        let prod: usize = shape[k..d].iter().product();
        b += (one_based[d] - 1) * prod;
    }
    (a - 1, b - 1)
}

/// Entry at a multi-index via explicit strides, independent of the library.
pub fn entry(t: &DenseTensor<f64>, idx: &[usize]) -> f64 {
    let mut off = 0;
    let mut stride = 1;
    for (i, n) in idx.iter().zip(t.shape()) {
        off += i * stride;
        stride *= n;
    }
    t.data()[off]
}

pub fn unfold_oracle(t: &DenseTensor<f64>, k: usize) -> DMatrix<f64> {
    let shape = t.shape();
    let p: usize = shape[..k].iter().product();
    let q: usize = shape[k..].iter().product();
    let mut m = DMatrix::zeros(p, q);
    let mut idx = vec![0; shape.len()];
    loop {
        let (a, b) = direct_position(shape, k, &idx);
        m[(a, b)] = entry(t, &idx);
        let mut d = 0;
        loop {
            if d == shape.len() {
                return m;
            }
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub fn nuclear_norm_oracle(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().sum()
}

/// `‖unfold_k(m)‖_* + β/2 ‖m − (x + y/β)‖²_F`, the objective `update_m` minimizes.
pub fn prox_objective(m: &DenseTensor<f64>, x: &DenseTensor<f64>, y: &DenseTensor<f64>, beta: f64, k: usize) -> f64 {
    let fit: f64 = m
        .data()
        .iter()
        .zip(x.data())
        .zip(y.data())
        .map(|((&mv, &xv), &yv)| (mv - xv - yv / beta).powi(2))
        .sum();
    nuclear_norm_oracle(&unfold_oracle(m, k)) + 0.5 * beta * fit
}

/// Every column fiber equal to one random fiber: TT-ranks (1,1,1).
pub fn constant_fiber_group(shape: [usize; 4], rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    let fiber: Vec<f64> = (0..shape[0]).map(|_| rng.random_range(20.0..235.0)).collect();
    DenseTensor::from_fn(&shape, |i| fiber[i[0]]).unwrap()
}

/// Every mode-4 slice equal to one random cube: last TT-rank 1.
pub fn identical_slice_group(shape: [usize; 4], rank: usize, rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    let [s1, s2, n3, _] = shape;
    let factors: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..rank)
        .map(|_| {
            let f = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            (f(s1, rng), f(s2, rng), f(n3, rng))
        })
        .collect();
    let scale = 200.0 / rank as f64;
    DenseTensor::from_fn(&shape, |i| {
        factors
            .iter()
            .map(|(a, b, c)| scale * a[i[0]] * b[i[1]] * c[i[2]])
            .sum()
    })
    .unwrap()
}

pub fn bernoulli_mask(shape: &[usize], rate: f64, rng: &mut ChaCha8Rng) -> ObservationMask {
    ObservationMask::from_fn(shape, |_| rng.random::<f64>() < rate).unwrap()
}

pub fn relative_error(est: &DenseTensor<f64>, truth: &DenseTensor<f64>) -> f64 {
    est.distance(truth).unwrap() / truth.frobenius_norm()
}

/// Image-like tensor whose rows and columns repeat with period `period`.
pub fn tiled_texture(n: usize, channels: usize, period: usize, rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    let tile: Vec<f64> = (0..period * period * channels)
        .map(|_| rng.random_range(0.0..255.0f64).round())
        .collect();
    DenseTensor::from_fn(&[n, n, channels], |i| {
        tile[(i[0] % period) + period * ((i[1] % period) + period * i[2])]
    })
    .unwrap()
}
