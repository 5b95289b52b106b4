//! Fingerprint embeddings from a minutiae-guided vision transformer.
//!
//! The numeric core ([`minutiae`], [`tokenizer`], [`vit`]) is generic over
//! the [`Scalar`] type: `f32` is used for training and inference, `f64`
//! for gradient verification. The matcher works on `f32` embeddings and
//! the evaluation harness on `f64` scores.

// NaN-rejecting range checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod image;
pub mod matcher;
pub mod minutiae;
pub mod pipeline;
pub mod scalar;
pub mod synthdata;
pub mod tokenizer;
pub mod vit;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ImageF32 = image::Image<f32>;
pub type ImageF64 = image::Image<f64>;
pub type MinutiaeMapF32 = minutiae::MinutiaeMap<f32>;
pub type MinutiaeMapF64 = minutiae::MinutiaeMap<f64>;
pub type TokenSequenceF32 = tokenizer::TokenSequence<f32>;
pub type TokenSequenceF64 = tokenizer::TokenSequence<f64>;
pub type ModelParamsF32 = vit::ModelParams<f32>;
pub type ModelParamsF64 = vit::ModelParams<f64>;
