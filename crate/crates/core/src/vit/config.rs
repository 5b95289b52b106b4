use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and initialization of a vision transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub image_side: usize,
    /// Token width: `patch_size² · (1 + map channels)`.
    pub in_dim_per_token: usize,
    /// Internal model width.
    pub embed_width: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Size of the output fingerprint embedding.
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Small preset used for tests and the toy corpus:
    /// side 32, patch 8, width 64, depth 2, 4 heads, 32-d embedding.
    pub fn desk(map_channels: usize, num_classes: usize) -> Self {
        Self {
            patch_size: 8,
            image_side: 32,
            in_dim_per_token: 64 * (1 + map_channels),
            embed_width: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4.0,
            embedding_dim: 32,
            num_classes,
            seed: 0,
        }
    }

    /// Full-size preset: 224x224 input, 16-px patches, a 384-wide,
    /// 12-block, 6-head encoder and a 384-d embedding.
    pub fn full_scale(map_channels: usize, num_classes: usize) -> Self {
        Self {
            patch_size: 16,
            image_side: 224,
            in_dim_per_token: 256 * (1 + map_channels),
            embed_width: 384,
            depth: 12,
            heads: 6,
            mlp_ratio: 4.0,
            embedding_dim: 384,
            num_classes,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_tokens(&self) -> usize {
        let grid = self.image_side / self.patch_size;
        grid * grid
    }

    pub fn seq_len(&self) -> usize {
        self.num_tokens() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_width / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_width as f64 * self.mlp_ratio).round() as usize
    }

    /// Minutiae-map channels implied by the token width.
    pub fn map_channels(&self) -> usize {
        let pp = self.patch_size * self.patch_size;
        self.in_dim_per_token.checked_div(pp).map_or(0, |k| k.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_side == 0 || !self.image_side.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image_side {} must be a positive multiple of patch_size {}",
                self.image_side, self.patch_size
            ));
        }
        let pp = self.patch_size * self.patch_size;
        if !self.in_dim_per_token.is_multiple_of(pp) || !(1..=3).contains(&(self.in_dim_per_token / pp)) {
            return fail(format!(
                "in_dim_per_token {} must be patch_size² x (1 + c) with c in 0..=2",
                self.in_dim_per_token
            ));
        }
        if self.embed_width == 0 || self.heads == 0 || !self.embed_width.is_multiple_of(self.heads) {
            return fail(format!(
                "embed_width {} must be divisible by heads {}",
                self.embed_width, self.heads
            ));
        }
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if !(self.mlp_ratio > 0.0 && self.mlp_ratio.is_finite()) || self.mlp_hidden() == 0 {
            return fail(format!("mlp_ratio {} gives an empty MLP", self.mlp_ratio));
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        Ok(())
    }

    /// Closed-form count of learnable scalars.
    pub fn param_count(&self) -> usize {
        let (w, e, k) = (self.embed_width, self.embedding_dim, self.num_classes);
        let hid = self.mlp_hidden();
        let stem = self.in_dim_per_token * w + w + w + self.seq_len() * w;
        let block = 4 * w + 4 * (w * w + w) + (w * hid + hid) + (hid * w + w);
        stem + self.depth * block + 2 * w + (w * e + e) + (e * k + k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::desk(2, 10).validate().unwrap();
        ModelConfig::desk(0, 10).validate().unwrap();
        ModelConfig::full_scale(2, 1000).validate().unwrap();
        assert_eq!(ModelConfig::full_scale(2, 2).num_tokens(), 196);
        assert_eq!(ModelConfig::full_scale(2, 2).in_dim_per_token, 768);
    }

    #[test]
    fn full_scale_encoder_is_near_22m_parameters() {
        // encoder + stem only, excluding the dataset-dependent classifier
        let cfg = ModelConfig::full_scale(0, 1);
        let n = cfg.param_count();
        assert!((21_000_000..23_500_000).contains(&n), "{n}");
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = ModelConfig::desk(2, 10);
        c.heads = 5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::desk(2, 10);
        c.image_side = 30;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(2, 10);
        c.in_dim_per_token = 100;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(2, 10);
        c.embedding_dim = 0;
        assert!(c.validate().is_err());
    }
}
