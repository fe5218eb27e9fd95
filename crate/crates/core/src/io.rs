//! Image and raw tensor files.
//!
//! Images load as `(height, width, channels)` tensors with values in `[0, 255]`;
//! grayscale inputs keep a trailing channel mode of extent 1. Raw tensors use the
//! DTR1 layout: an ASCII header `DTR1 <rank> <n_1> … <n_j>\n` followed by the
//! entries as little-endian `f64` in first-index-fastest order.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat};

use crate::error::{input_err, param_err, Result};
use crate::scalar::Real;
use crate::tensor::DenseTensor;

const DTR1_MAGIC: &str = "DTR1";

/// Decodes an 8-bit PNG/PPM/PGM image. Alpha channels are dropped.
pub fn load_image(path: &Path) -> Result<DenseTensor<f64>> {
    let img = image::open(path)
        .map_err(|e| input_err!("cannot decode image {}: {e}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) => {
            (1, img.to_luma8().into_raw())
        }
        _ => (3, img.to_rgb8().into_raw()),
    };
    // `bytes` is row-major interleaved: ((y * w + x) * c + ch).
    DenseTensor::from_fn(&[h, w, channels], |idx| {
        f64::from(bytes[(idx[0] * w + idx[1]) * channels + idx[2]])
    })
}

/// Clamps to `[0, 255]` and rounds half away from zero.
pub fn to_u8<T: Real>(v: T) -> u8 {
    let v = v.to_f64_lossy();
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round() as u8
}

/// Encodes a `(h, w)`, `(h, w, 1)` or `(h, w, 3)` tensor; the format follows the
/// file extension.
pub fn save_image<T: Real>(t: &DenseTensor<T>, path: &Path) -> Result<()> {
    let shape = t.shape();
    let (h, w, c) = match *shape {
        [h, w] => (h, w, 1),
        [h, w, c] if c == 1 || c == 3 => (h, w, c),
        _ => return Err(param_err!("cannot save tensor of shape {shape:?} as an image")),
    };
    let mut buf = vec![0u8; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf[(y * w + x) * c + ch] = to_u8(t.data()[y + h * (x + w * ch)]);
            }
        }
    }
    let color = if c == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
    let format = ImageFormat::from_path(path)?;
    image::save_buffer_with_format(path, &buf, w as u32, h as u32, color, format)?;
    Ok(())
}

pub fn encode_dtr1(t: &DenseTensor<f64>) -> Vec<u8> {
    let mut header = format!("{DTR1_MAGIC} {}", t.order());
    for n in t.shape() {
        header.push_str(&format!(" {n}"));
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(8 * t.len());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dtr1(bytes: &[u8]) -> Result<DenseTensor<f64>> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| input_err!("DTR1 header is not newline-terminated"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| input_err!("DTR1 header is not ASCII"))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(DTR1_MAGIC) {
        return Err(input_err!("missing DTR1 magic"));
    }
    let nums = fields
        .map(|f| f.parse::<usize>().map_err(|_| input_err!("bad DTR1 header field '{f}'")))
        .collect::<Result<Vec<_>>>()?;
    let (&rank, shape) = nums
        .split_first()
        .ok_or_else(|| input_err!("DTR1 header lacks a rank"))?;
    if shape.len() != rank {
        return Err(input_err!("DTR1 rank {rank} but {} extents", shape.len()));
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| input_err!("DTR1 extents overflow"))?;
    let body = &bytes[nl + 1..];
    if Some(body.len()) != count.checked_mul(8) {
        return Err(input_err!("DTR1 body has {} bytes, expected {} values", body.len(), count));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseTensor::new(shape, data).map_err(|e| input_err!("DTR1 payload rejected: {e}"))
}

pub fn write_dtr1(t: &DenseTensor<f64>, path: &Path) -> Result<()> {
    fs::write(path, encode_dtr1(t))?;
    Ok(())
}

pub fn read_dtr1(path: &Path) -> Result<DenseTensor<f64>> {
    decode_dtr1(&fs::read(path)?)
}

/// Loads either a DTR1 tensor (`.dtr`, `.dtr1`) or an image.
pub fn load_tensor(path: &Path) -> Result<DenseTensor<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("dtr") | Some("dtr1") => read_dtr1(path),
        _ => load_image(path),
    }
}
