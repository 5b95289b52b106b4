//! Grayscale raster images and binary PGM (P5) I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major single-channel image. Pixel `(row, col)` lives at
/// `data[row * width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "image buffer holds {} values, expected {width}x{height} = {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Bilinear resampling with pixel-center alignment: output pixel `i`
    /// samples source coordinate `(i + 0.5) * in / out - 0.5`, clamped to
    /// the source grid.
    pub fn resize_bilinear(&self, out_width: usize, out_height: usize) -> Result<Self> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("cannot resize a zero-area image".into()));
        }
        if out_width == 0 || out_height == 0 {
            return Err(Error::Validation(format!(
                "resize target {out_width}x{out_height} has zero area"
            )));
        }
        let xs = axis_samples(self.width, out_width);
        let ys = axis_samples(self.height, out_height);
        let mut data = Vec::with_capacity(out_width * out_height);
        for &(y0, y1, fy) in &ys {
            let fy = T::of(fy);
            for &(x0, x1, fx) in &xs {
                let fx = T::of(fx);
                let top = self.get(y0, x0) * (T::one() - fx) + self.get(y0, x1) * fx;
                let bottom = self.get(y1, x0) * (T::one() - fx) + self.get(y1, x1) * fx;
                data.push(top * (T::one() - fy) + bottom * fy);
            }
        }
        Ok(Self {
            width: out_width,
            height: out_height,
            data,
        })
    }

    /// Quantize to 8 bits, clamping to `[0, 1]` first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| {
                let v = v.to_f64_lossy();
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                (v * 255.0).round() as u8
            })
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes
            .iter()
            .map(|&b| T::of(f64::from(b) / 255.0))
            .collect();
        Self::new(width, height, data)
    }
}

fn axis_samples(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Encode an image as binary PGM with maxval 255.
pub fn encode_pgm<T: Scalar>(image: &Image<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_u8());
    out
}

/// Decode a binary PGM (P5) with maxval ≤ 255; values are scaled to `[0, 1]`
/// by the declared maxval.
pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "unsupported PGM magic {:?}, expected P5",
            fields[0]
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("invalid PGM {what} {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "PGM maxval {maxval} unsupported, expected 1..=255"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Format(format!(
            "PGM raster truncated: {} bytes present, {need} expected",
            bytes.len().saturating_sub(pos)
        )));
    }
    let scale = maxval as f64;
    let data = bytes[pos..pos + need]
        .iter()
        .map(|&b| T::of((f64::from(b) / scale).min(1.0)))
        .collect();
    Image::new(width, height, data)
}

pub fn write_pgm<T: Scalar>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}
