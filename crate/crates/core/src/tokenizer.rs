//! Patch tokenization of a fingerprint image concatenated with its
//! minutiae map, plus the fixed resize-and-standardize preprocessing.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::minutiae::MinutiaeMap;
use crate::scalar::Scalar;

/// Input side length expected by the full-scale model.
pub const DEFAULT_IMAGE_SIDE: usize = 224;
pub const DEFAULT_PATCH_SIZE: usize = 16;
/// Variance guard used by [`preprocess`].
pub const NORMALIZATION_EPS: f64 = 1e-6;
/// Human-readable statement of the preprocessing contract; recorded in
/// checkpoint headers.
pub const NORMALIZATION_CONTRACT: &str =
    "bilinear resize to image_side; image standardized to zero mean, unit variance (eps 1e-6); minutiae map kept in [0,1]";

/// `num_tokens` flattened patches of width `token_dim`, row-major.
///
/// Tokens are in raster order over the patch grid. Each token holds the
/// image patch followed by one patch per map channel, every patch itself
/// flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    num_tokens: usize,
    token_dim: usize,
    patch_size: usize,
    channels: usize,
    data: Vec<T>,
}

/// Number of tokens and token width for a square image.
pub fn token_shape(image_side: usize, patch_size: usize, channels: usize) -> Result<(usize, usize)> {
    if patch_size == 0 || image_side == 0 || !image_side.is_multiple_of(patch_size) {
        return Err(Error::Shape(format!(
            "image side {image_side} is not divisible by patch size {patch_size}"
        )));
    }
    let grid = image_side / patch_size;
    Ok((grid * grid, patch_size * patch_size * (1 + channels)))
}

impl<T: Scalar> TokenSequence<T> {
    pub fn from_data(
        num_tokens: usize,
        token_dim: usize,
        patch_size: usize,
        channels: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != num_tokens * token_dim || token_dim != patch_size * patch_size * (1 + channels) {
            return Err(Error::Shape(format!(
                "token buffer of {} values does not match {num_tokens} tokens x {token_dim} (patch {patch_size}, {channels} map channels)",
                data.len()
            )));
        }
        Ok(Self {
            num_tokens,
            token_dim,
            patch_size,
            channels,
            data,
        })
    }

    #[inline]
    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    #[inline]
    pub fn token_dim(&self) -> usize {
        self.token_dim
    }

    #[inline]
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn token(&self, i: usize) -> &[T] {
        &self.data[i * self.token_dim..(i + 1) * self.token_dim]
    }

    pub fn grid_side(&self) -> usize {
        (self.num_tokens as f64).sqrt().round() as usize
    }

    pub fn cast<U: Scalar>(&self) -> TokenSequence<U> {
        TokenSequence {
            num_tokens: self.num_tokens,
            token_dim: self.token_dim,
            patch_size: self.patch_size,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Zero every minutiae-map element, leaving the image part intact.
    pub fn without_map(&self) -> Self {
        let mut out = self.clone();
        let pp = self.patch_size * self.patch_size;
        for tok in out.data.chunks_exact_mut(self.token_dim) {
            tok[pp..].iter_mut().for_each(|v| *v = T::zero());
        }
        out
    }

    /// Permute tokens: output token `i` is input token `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &src in order {
            data.extend_from_slice(self.token(src));
        }
        Self { data, ..self.clone() }
    }
}

/// Location of image pixel `(row, col)` inside a token sequence:
/// `(token index, element offset within the token)`.
pub fn pixel_to_token(row: usize, col: usize, image_width: usize, patch_size: usize) -> (usize, usize) {
    let grid = image_width / patch_size;
    let token = (row / patch_size) * grid + col / patch_size;
    let offset = (row % patch_size) * patch_size + col % patch_size;
    (token, offset)
}

/// Split `image` and `map` into square patches of `patch_size` pixels and
/// concatenate the co-located patches into tokens.
///
/// A map with zero channels yields image-only tokens.
pub fn tokenize<T: Scalar>(
    image: &Image<T>,
    map: &MinutiaeMap<T>,
    patch_size: usize,
) -> Result<TokenSequence<T>> {
    let (w, h) = (image.width(), image.height());
    if map.width() != w || map.height() != h {
        return Err(Error::Shape(format!(
            "image is {w}x{h} but minutiae map is {}x{}",
            map.width(),
            map.height()
        )));
    }
    if patch_size == 0 || w % patch_size != 0 || h % patch_size != 0 {
        return Err(Error::Shape(format!(
            "image {w}x{h} is not divisible into {patch_size}x{patch_size} patches"
        )));
    }
    let channels = map.channels();
    let (gw, gh) = (w / patch_size, h / patch_size);
    let pp = patch_size * patch_size;
    let token_dim = pp * (1 + channels);
    let num_tokens = gw * gh;
    let mut data = Vec::with_capacity(num_tokens * token_dim);
    let planes: Vec<&[T]> = std::iter::once(image.data())
        .chain((0..channels).map(|c| map.channel(c)))
        .collect();
    for gy in 0..gh {
        for gx in 0..gw {
            for plane in &planes {
                for r in 0..patch_size {
                    let start = (gy * patch_size + r) * w + gx * patch_size;
                    data.extend_from_slice(&plane[start..start + patch_size]);
                }
            }
        }
    }
    Ok(TokenSequence {
        num_tokens,
        token_dim,
        patch_size,
        channels,
        data,
    })
}

/// Scatter per-token values of one plane (image: 0, map channel `c`: c + 1)
/// back into raster geometry. `values` is laid out like the token data.
pub fn detokenize_plane<T: Scalar>(
    values: &[T],
    num_tokens: usize,
    token_dim: usize,
    patch_size: usize,
    plane: usize,
) -> Result<Image<T>> {
    let grid = (num_tokens as f64).sqrt().round() as usize;
    let pp = patch_size * patch_size;
    if grid * grid != num_tokens || values.len() != num_tokens * token_dim || token_dim < (plane + 1) * pp {
        return Err(Error::Shape(format!(
            "cannot detokenize plane {plane} from {num_tokens} tokens of width {token_dim} (patch {patch_size})"
        )));
    }
    let side = grid * patch_size;
    let mut out = Image::zeros(side, side);
    for t in 0..num_tokens {
        let (gy, gx) = (t / grid, t % grid);
        let base = t * token_dim + plane * pp;
        for r in 0..patch_size {
            for c in 0..patch_size {
                out.set(gy * patch_size + r, gx * patch_size + c, values[base + r * patch_size + c]);
            }
        }
    }
    Ok(out)
}

/// Reassemble the image and every map channel from a token sequence.
pub fn detokenize<T: Scalar>(tokens: &TokenSequence<T>) -> Result<(Image<T>, MinutiaeMap<T>)> {
    let (n, d, p) = (tokens.num_tokens, tokens.token_dim, tokens.patch_size);
    let image = detokenize_plane(&tokens.data, n, d, p, 0)?;
    let side = image.width();
    let mut map_data = Vec::with_capacity(side * side * tokens.channels);
    for c in 0..tokens.channels {
        map_data.extend(detokenize_plane(&tokens.data, n, d, p, c + 1)?.into_data());
    }
    let map = MinutiaeMap::from_data(side, side, tokens.channels, map_data)?;
    Ok((image, map))
}

/// Standardize to zero mean and unit variance; a constant image maps to
/// all zeros.
pub fn standardize<T: Scalar>(image: &Image<T>) -> Image<T> {
    let n = image.data().len().max(1) as f64;
    let mean = image.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let var = image
        .data()
        .iter()
        .map(|v| {
            let d = v.to_f64_lossy() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let inv = 1.0 / (var + NORMALIZATION_EPS).sqrt();
    let data = image
        .data()
        .iter()
        .map(|v| T::of((v.to_f64_lossy() - mean) * inv))
        .collect();
    Image::new(image.width(), image.height(), data).expect("same shape")
}

/// Bilinear resize to `side x side` followed by per-image standardization.
pub fn preprocess<T: Scalar>(image: &Image<T>, side: usize) -> Result<Image<T>> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Validation(format!(
            "cannot preprocess a zero-area {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(standardize(&image.resize_bilinear(side, side)?))
}
