//! Learnable tensors of the transformer and their deterministic
//! initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use crate::error::Result;
use crate::scalar::Scalar;

/// Standard deviation of the truncated-normal initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn trunc_normal(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= 2.0 {
                    break T::of(z * std);
                }
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// `y = x W + b`, with `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    fn init(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Tensor::trunc_normal(&[input, output], INIT_STD, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub scale: Tensor<T>,
    pub offset: Tensor<T>,
}

impl<T: Scalar> LayerNorm<T> {
    fn identity(width: usize) -> Self {
        Self {
            scale: Tensor::filled(&[width], T::one()),
            offset: Tensor::zeros(&[width]),
        }
    }

    fn zeros(width: usize) -> Self {
        Self {
            scale: Tensor::zeros(&[width]),
            offset: Tensor::zeros(&[width]),
        }
    }
}

/// Pre-norm encoder block: attention and MLP sub-layers with residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub norm1: LayerNorm<T>,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub out: Linear<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub patch_embed: Linear<T>,
    pub cls_token: Tensor<T>,
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    pub norm: LayerNorm<T>,
    pub embed_head: Linear<T>,
    pub classifier: Linear<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Deterministic initialization from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (w, hid) = (config.embed_width, config.mlp_hidden());
        let patch_embed = Linear::init(config.in_dim_per_token, w, &mut rng);
        let cls_token = Tensor::trunc_normal(&[w], INIT_STD, &mut rng);
        let pos_embed = Tensor::trunc_normal(&[config.seq_len(), w], INIT_STD, &mut rng);
        let blocks = (0..config.depth)
            .map(|_| Block {
                norm1: LayerNorm::identity(w),
                query: Linear::init(w, w, &mut rng),
                key: Linear::init(w, w, &mut rng),
                value: Linear::init(w, w, &mut rng),
                out: Linear::init(w, w, &mut rng),
                norm2: LayerNorm::identity(w),
                fc1: Linear::init(w, hid, &mut rng),
                fc2: Linear::init(hid, w, &mut rng),
            })
            .collect();
        let norm = LayerNorm::identity(w);
        let embed_head = Linear::init(w, config.embedding_dim, &mut rng);
        let classifier = Linear::init(config.embedding_dim, config.num_classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            patch_embed,
            cls_token,
            pos_embed,
            blocks,
            norm,
            embed_head,
            classifier,
        })
    }

    /// All-zero tensors of the same shapes; used as a gradient buffer.
    pub fn zeros_like(config: &ModelConfig) -> Self {
        let (w, hid) = (config.embed_width, config.mlp_hidden());
        Self {
            config: config.clone(),
            patch_embed: Linear::zeros(config.in_dim_per_token, w),
            cls_token: Tensor::zeros(&[w]),
            pos_embed: Tensor::zeros(&[config.seq_len(), w]),
            blocks: (0..config.depth)
                .map(|_| Block {
                    norm1: LayerNorm::zeros(w),
                    query: Linear::zeros(w, w),
                    key: Linear::zeros(w, w),
                    value: Linear::zeros(w, w),
                    out: Linear::zeros(w, w),
                    norm2: LayerNorm::zeros(w),
                    fc1: Linear::zeros(w, hid),
                    fc2: Linear::zeros(hid, w),
                })
                .collect(),
            norm: LayerNorm::zeros(w),
            embed_head: Linear::zeros(w, config.embedding_dim),
            classifier: Linear::zeros(config.embedding_dim, config.num_classes),
        }
    }

    /// Tensor names in canonical order, matching [`Self::tensors`].
    pub fn tensor_names(config: &ModelConfig) -> Vec<String> {
        let mut names: Vec<String> = ["patch_embed.weight", "patch_embed.bias", "cls_token", "pos_embed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..config.depth {
            for part in [
                "norm1.scale",
                "norm1.offset",
                "attn.query.weight",
                "attn.query.bias",
                "attn.key.weight",
                "attn.key.bias",
                "attn.value.weight",
                "attn.value.bias",
                "attn.out.weight",
                "attn.out.bias",
                "norm2.scale",
                "norm2.offset",
                "mlp.fc1.weight",
                "mlp.fc1.bias",
                "mlp.fc2.weight",
                "mlp.fc2.bias",
            ] {
                names.push(format!("blocks.{i}.{part}"));
            }
        }
        for s in [
            "norm.scale",
            "norm.offset",
            "embed_head.weight",
            "embed_head.bias",
            "classifier.weight",
            "classifier.bias",
        ] {
            names.push(s.to_string());
        }
        names
    }

    /// Every tensor, in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![
            &self.patch_embed.weight,
            &self.patch_embed.bias,
            &self.cls_token,
            &self.pos_embed,
        ];
        for b in &self.blocks {
            v.extend([
                &b.norm1.scale,
                &b.norm1.offset,
                &b.query.weight,
                &b.query.bias,
                &b.key.weight,
                &b.key.bias,
                &b.value.weight,
                &b.value.bias,
                &b.out.weight,
                &b.out.bias,
                &b.norm2.scale,
                &b.norm2.offset,
                &b.fc1.weight,
                &b.fc1.bias,
                &b.fc2.weight,
                &b.fc2.bias,
            ]);
        }
        v.extend([
            &self.norm.scale,
            &self.norm.offset,
            &self.embed_head.weight,
            &self.embed_head.bias,
            &self.classifier.weight,
            &self.classifier.bias,
        ]);
        v
    }

    /// Mutable counterpart of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![
            &mut self.patch_embed.weight,
            &mut self.patch_embed.bias,
            &mut self.cls_token,
            &mut self.pos_embed,
        ];
        for b in &mut self.blocks {
            v.extend([
                &mut b.norm1.scale,
                &mut b.norm1.offset,
                &mut b.query.weight,
                &mut b.query.bias,
                &mut b.key.weight,
                &mut b.key.bias,
                &mut b.value.weight,
                &mut b.value.bias,
                &mut b.out.weight,
                &mut b.out.bias,
                &mut b.norm2.scale,
                &mut b.norm2.offset,
                &mut b.fc1.weight,
                &mut b.fc1.bias,
                &mut b.fc2.weight,
                &mut b.fc2.bias,
            ]);
        }
        v.extend([
            &mut self.norm.scale,
            &mut self.norm.offset,
            &mut self.embed_head.weight,
            &mut self.embed_head.bias,
            &mut self.classifier.weight,
            &mut self.classifier.bias,
        ]);
        v
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        Self::tensor_names(&self.config).into_iter().zip(self.tensors()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.data.iter_mut().zip(&src.data) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn l2_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros_like(&self.config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        // patch 8, side 32, width 64, depth 2, heads 4, mlp 4.0, embed 32, 10 classes
        ModelConfig::desk(2, 10)
    }

    /// Enumerate tensor sizes one by one from the architecture description.
    fn enumerate_sizes(c: &ModelConfig) -> usize {
        let w = c.embed_width;
        let hid = (w as f64 * c.mlp_ratio) as usize;
        let tokens = (c.image_side / c.patch_size).pow(2) + 1;
        let mut sizes = vec![c.in_dim_per_token * w, w, w, tokens * w];
        for _ in 0..c.depth {
            sizes.extend([w, w]);
            for _ in 0..4 {
                sizes.extend([w * w, w]);
            }
            sizes.extend([w, w, w * hid, hid, hid * w, w]);
        }
        sizes.extend([w, w, w * c.embedding_dim, c.embedding_dim]);
        sizes.extend([c.embedding_dim * c.num_classes, c.num_classes]);
        sizes.iter().sum()
    }

    #[test]
    fn closed_form_count_matches_enumeration() {
        let c = tiny();
        let p = ModelParams::<f32>::init(&c).unwrap();
        assert_eq!(c.param_count(), enumerate_sizes(&c));
        assert_eq!(p.param_count(), enumerate_sizes(&c));
        assert_eq!(ModelParams::<f32>::tensor_names(&c).len(), p.tensors().len());
    }

    #[test]
    fn init_is_deterministic_and_follows_rules() {
        let c = tiny().with_seed(42);
        let a = ModelParams::<f32>::init(&c).unwrap();
        let b = ModelParams::<f32>::init(&c).unwrap();
        assert_eq!(a, b);
        let other = ModelParams::<f32>::init(&tiny().with_seed(43)).unwrap();
        assert_ne!(a, other);
        for blk in &a.blocks {
            assert!(blk.norm1.scale.data.iter().all(|&v| v == 1.0));
            assert!(blk.norm2.offset.data.iter().all(|&v| v == 0.0));
            assert!(blk.fc1.bias.data.iter().all(|&v| v == 0.0));
        }
        assert!(a.norm.scale.data.iter().all(|&v| v == 1.0));
        assert!(a.patch_embed.weight.data.iter().all(|&v| v.abs() <= 0.04));
        assert!(a.is_finite());
        let n = a.patch_embed.weight.len() as f64;
        let var = a.patch_embed.weight.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n;
        // truncated at 2 std the variance shrinks to about 0.774 std²
        assert!((var.sqrt() - 0.02 * 0.774f64.sqrt()).abs() < 0.001, "{}", var.sqrt());
    }
}
