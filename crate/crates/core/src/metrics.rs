//! PSNR and SSIM, computed per band and averaged over bands.
//!
//! A band is a 2-D slice `(:, :, c…)` over the first two modes. SSIM is the
//! single-scale index with an 11×11 Gaussian window (σ = 1.5), `K₁ = 0.01`,
//! `K₂ = 0.03`, averaged over all window positions that fit inside the image.

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{param_err, Result};
use crate::scalar::Real;
use crate::tensor::DenseTensor;

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandScore {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// Mean per-band PSNR; `f64::INFINITY` (serialized as `"inf"`) when every
    /// band matches exactly.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_band: Vec<BandScore>,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value '{t}'"))),
    }
}

fn bands<'a, T: Real>(t: &'a DenseTensor<T>) -> (usize, usize, impl Iterator<Item = ArrayView2<'a, T>>) {
    let shape = t.shape();
    let n1 = shape[0];
    let n2 = shape.get(1).copied().unwrap_or(1);
    let iter = t.data().chunks(n1 * n2).map(move |c| {
        ArrayView2::from_shape((n1, n2).f(), c).expect("band buffer matches extents")
    });
    (n1, n2, iter)
}

fn band_psnr<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, peak: f64) -> f64 {
    let n = a.len() as f64;
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = (x - y).to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Mean over bands of `10·log₁₀(peak² / MSE_band)`.
pub fn psnr<T: Real>(truth: &DenseTensor<T>, est: &DenseTensor<T>, peak: f64) -> Result<f64> {
    truth.check_same_shape(est.shape())?;
    if !(peak > 0.0) {
        return Err(param_err!("peak must be positive, got {peak}"));
    }
    let (_, _, ta) = bands(truth);
    let (_, _, eb) = bands(est);
    let vals: Vec<f64> = ta.zip(eb).map(|(a, b)| band_psnr(a, b, peak)).collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" filtering of `img` with the Gaussian window.
fn filter_valid(img: &Array2<f64>, taps: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (n1, n2) = img.dim();
    let (o1, o2) = (n1 + 1 - SSIM_WINDOW, n2 + 1 - SSIM_WINDOW);
    let mut rows = Array2::<f64>::zeros((o1, n2));
    for j in 0..n2 {
        for i in 0..o1 {
            rows[[i, j]] = taps.iter().enumerate().map(|(t, &w)| w * img[[i + t, j]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((o1, o2));
    for j in 0..o2 {
        for i in 0..o1 {
            out[[i, j]] = taps.iter().enumerate().map(|(t, &w)| w * rows[[i, j + t]]).sum();
        }
    }
    out
}

/// Single-scale SSIM of two equally sized slices with dynamic range `peak`.
pub fn ssim<T: Real>(truth: ArrayView2<'_, T>, est: ArrayView2<'_, T>, peak: f64) -> Result<f64> {
    if truth.dim() != est.dim() {
        return Err(param_err!("slice shapes differ: {:?} vs {:?}", truth.dim(), est.dim()));
    }
    let (n1, n2) = truth.dim();
    if n1 < SSIM_WINDOW || n2 < SSIM_WINDOW {
        return Err(param_err!(
            "SSIM needs slices of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {n1}×{n2}"
        ));
    }
    let x = truth.mapv(|v| v.to_f64_lossy());
    let y = est.mapv(|v| v.to_f64_lossy());
    let taps = gaussian_taps();
    let mu_x = filter_valid(&x, &taps);
    let mu_y = filter_valid(&y, &taps);
    let xx = filter_valid(&(&x * &x), &taps);
    let yy = filter_valid(&(&y * &y), &taps);
    let xy = filter_valid(&(&x * &y), &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let mut total = 0.0;
    for ((((&mx, &my), &sxx), &syy), &sxy) in mu_x.iter().zip(&mu_y).zip(&xx).zip(&yy).zip(&xy) {
        let vx = sxx - mx * mx;
        let vy = syy - my * my;
        let cov = sxy - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// PSNR and SSIM per band, plus their band averages.
pub fn quality<T: Real>(truth: &DenseTensor<T>, est: &DenseTensor<T>, peak: f64) -> Result<QualityScore> {
    truth.check_same_shape(est.shape())?;
    if truth.order() < 2 {
        return Err(param_err!("quality metrics need at least two modes"));
    }
    let (_, _, ta) = bands(truth);
    let (_, _, eb) = bands(est);
    let per_band = ta
        .zip(eb)
        .map(|(a, b)| {
            Ok(BandScore {
                psnr_db: band_psnr(a, b, peak),
                ssim: ssim(a, b, peak)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nb = per_band.len() as f64;
    Ok(QualityScore {
        psnr_db: per_band.iter().map(|b| b.psnr_db).sum::<f64>() / nb,
        ssim: per_band.iter().map(|b| b.ssim).sum::<f64>() / nb,
        per_band,
    })
}
