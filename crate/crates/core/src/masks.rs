//! Observation regimes: random sampling, tube sampling and structural masks.
//!
//! Random draws use `ChaCha8Rng::seed_from_u64(seed)` (a counter-based stream
//! generator with a fixed, platform-independent output) and visit entries in
//! first-index-fastest order, so a `(shape, rate, seed)` triple always yields the
//! same mask.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, param_err, Result};
use crate::tensor::ObservationMask;

/// Pixel values at or above this level count as observed in mask images.
pub const OBSERVED_THRESHOLD: u8 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Random,
    Tube,
    Structural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    #[serde(default)]
    pub sampling_rate: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mask_source: Option<PathBuf>,
}

impl MaskSpec {
    pub fn random(rate: f64, seed: u64) -> Self {
        Self {
            kind: MaskKind::Random,
            sampling_rate: Some(rate),
            seed,
            mask_source: None,
        }
    }

    pub fn tube(rate: f64, seed: u64) -> Self {
        Self {
            kind: MaskKind::Tube,
            sampling_rate: Some(rate),
            seed,
            mask_source: None,
        }
    }

    pub fn structural(source: impl Into<PathBuf>) -> Self {
        Self {
            kind: MaskKind::Structural,
            sampling_rate: None,
            seed: 0,
            mask_source: Some(source.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MaskKind::Random | MaskKind::Tube => {
                let rate = self
                    .sampling_rate
                    .ok_or_else(|| param_err!("{:?} mask needs a sampling rate", self.kind))?;
                check_rate(rate)
            }
            MaskKind::Structural => {
                if self.mask_source.is_none() {
                    return Err(param_err!("structural mask needs a mask image path"));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self, shape: &[usize]) -> Result<ObservationMask> {
        self.validate()?;
        match self.kind {
            MaskKind::Random => make_random_mask(shape, self.sampling_rate.unwrap(), self.seed),
            MaskKind::Tube => make_tube_mask(shape, self.sampling_rate.unwrap(), self.seed),
            MaskKind::Structural => {
                load_structural_mask(shape, self.mask_source.as_deref().unwrap())
            }
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(param_err!("sampling rate must lie in [0, 1], got {rate}"));
    }
    Ok(())
}

/// Every entry observed independently with probability `rate`.
pub fn make_random_mask(shape: &[usize], rate: f64, seed: u64) -> Result<ObservationMask> {
    check_rate(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ObservationMask::from_fn(shape, |_| rng.random::<f64>() < rate)
}

/// One draw per spatial location `(i₁, i₂)`, shared by every channel.
pub fn make_tube_mask(shape: &[usize], rate: f64, seed: u64) -> Result<ObservationMask> {
    check_rate(rate)?;
    if shape.len() < 3 {
        return Err(param_err!(
            "tube sampling needs at least 3 modes, got shape {shape:?}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n1, n2) = (shape[0], shape[1]);
    let plane: Vec<bool> = (0..n1 * n2).map(|_| rng.random::<f64>() < rate).collect();
    broadcast_plane(shape, &plane)
}

fn broadcast_plane(shape: &[usize], plane: &[bool]) -> Result<ObservationMask> {
    let n1 = shape[0];
    ObservationMask::from_fn(shape, |idx| plane[idx[0] + n1 * idx[1]])
}

/// Reads a 2-D mask image (`0` = missing, `≥ 128` = observed) and broadcasts
/// it over all non-spatial modes. Image rows map to mode 1, columns to mode 2.
pub fn load_structural_mask(shape: &[usize], source: &Path) -> Result<ObservationMask> {
    if shape.len() < 2 {
        return Err(param_err!("structural masks need at least 2 modes"));
    }
    let img = image::open(source)
        .map_err(|e| input_err!("cannot decode mask image {}: {e}", source.display()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    if (h as usize, w as usize) != (shape[0], shape[1]) {
        return Err(input_err!(
            "mask image {} is {h}×{w} but the tensor is {}×{}",
            source.display(),
            shape[0],
            shape[1]
        ));
    }
    let n1 = shape[0];
    let mut plane = vec![false; shape[0] * shape[1]];
    for (x, y, p) in img.enumerate_pixels() {
        plane[y as usize + n1 * x as usize] = p.0[0] >= OBSERVED_THRESHOLD;
    }
    broadcast_plane(shape, &plane)
}
