//! End-to-end glue: corpus → tokens → training → embeddings → evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{build_galleries, cmc_from_scores, score_pairs, tar_at_far, GalleryPlan, Identity, Protocol};
use crate::image::{read_pgm, Image};
use crate::matcher::{score_all, EmbeddingStore, FusionWeights, RecordId, ScoreSet};
use crate::minutiae::{build_minutiae_map, read_minutiae_file, MinutiaeMap, MinutiaeSet};
use crate::synthdata::{read_manifest, Impression};
use crate::tokenizer::{preprocess, tokenize, TokenSequence};
use crate::vit::{extract_embedding, LabeledSample, ModelConfig, ModelParams};

/// Token layout: image patches alone, or with minutiae-map patches appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Concat,
}

impl Mode {
    pub fn map_channels(self) -> usize {
        match self {
            Mode::Vanilla => 0,
            Mode::Concat => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Concat => "concat",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "vanilla" => Ok(Mode::Vanilla),
            "concat" => Ok(Mode::Concat),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected vanilla or concat)"))),
        }
    }
}

/// One labeled impression with its ground-truth minutiae.
#[derive(Debug, Clone)]
pub struct Sample {
    pub identity: u64,
    pub impression: u32,
    pub image: Image<f32>,
    pub minutiae: MinutiaeSet,
}

impl Sample {
    pub fn record_id(&self) -> RecordId {
        RecordId::new(self.identity, self.impression)
    }
}

impl From<Impression> for Sample {
    fn from(i: Impression) -> Self {
        Self {
            identity: i.identity,
            impression: i.index,
            image: i.image,
            minutiae: i.minutiae,
        }
    }
}

/// Load every impression listed in a corpus manifest.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    read_manifest(dir)?
        .par_iter()
        .map(|e| {
            Ok(Sample {
                identity: e.identity,
                impression: e.impression,
                image: read_pgm(dir.join(&e.image_path))?,
                minutiae: read_minutiae_file(dir.join(&e.minutiae_path))?,
            })
        })
        .collect()
}

/// Input preparation shared by training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub image_side: usize,
    pub patch_size: usize,
    /// Gaussian spread of map hot-spots, in pixels of the resized frame.
    pub map_sigma: f64,
}

impl Preprocessing {
    pub fn for_model(config: &ModelConfig, map_sigma: f64) -> Self {
        Self {
            image_side: config.image_side,
            patch_size: config.patch_size,
            map_sigma,
        }
    }
}

/// Resize and standardize the image, rescale the minutiae into the same
/// frame and tokenize in the requested mode.
pub fn sample_tokens(sample: &Sample, prep: &Preprocessing, mode: Mode) -> Result<TokenSequence<f32>> {
    let side = prep.image_side;
    let image = preprocess(&sample.image, side)?;
    let map = match mode {
        Mode::Vanilla => MinutiaeMap::empty(side, side),
        Mode::Concat => build_minutiae_map(&sample.minutiae.rescaled(side, side), mode.map_channels(), prep.map_sigma)?,
    };
    tokenize(&image, &map, prep.patch_size)
}

pub fn tokenize_all(samples: &[Sample], prep: &Preprocessing, mode: Mode) -> Result<Vec<TokenSequence<f32>>> {
    samples.par_iter().map(|s| sample_tokens(s, prep, mode)).collect()
}

/// Training samples with labels `0..k` assigned in ascending identity order.
pub fn labeled(samples: &[Sample], tokens: Vec<TokenSequence<f32>>) -> (Vec<LabeledSample<f32>>, Vec<u64>) {
    let mut ids: Vec<u64> = samples.iter().map(|s| s.identity).collect();
    ids.sort_unstable();
    ids.dedup();
    let out = samples
        .iter()
        .zip(tokens)
        .map(|(s, tokens)| LabeledSample {
            tokens,
            label: ids.binary_search(&s.identity).expect("identity listed"),
        })
        .collect();
    (out, ids)
}

/// Unit-norm embeddings of every sample, in input order.
pub fn embed_samples(
    params: &ModelParams<f32>,
    samples: &[Sample],
    prep: &Preprocessing,
    mode: Mode,
) -> Result<EmbeddingStore> {
    let vectors = samples
        .par_iter()
        .map(|s| extract_embedding(params, &sample_tokens(s, prep, mode)?))
        .collect::<Result<Vec<_>>>()?;
    let mut store = EmbeddingStore::with_capacity(params.config.embedding_dim, samples.len())?;
    for (s, v) in samples.iter().zip(&vectors) {
        store.insert(s.record_id(), v)?;
    }
    Ok(store)
}

/// Probe-by-gallery score table with records looked up by id.
pub fn score_table(store: &EmbeddingStore, gallery: &[RecordId], probes: &[RecordId]) -> Result<Vec<Vec<f64>>> {
    let index: std::collections::HashMap<RecordId, usize> =
        store.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let lookup = |id: &RecordId| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("record {}:{} missing from store", id.subject_id, id.impression_id)))
    };
    let gallery_rows = gallery.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    // keep the requested gallery order
    let mut ordered = EmbeddingStore::with_capacity(store.dim(), gallery.len())?;
    for &row in &gallery_rows {
        ordered.insert(store.ids()[row], store.vector(row))?;
    }
    probes
        .iter()
        .map(|p| Ok(score_all(&ordered, store.vector(lookup(p)?))?.into_iter().map(f64::from).collect()))
        .collect()
}

/// Element-wise weighted sum of two score tables.
pub fn fuse_tables(a: &[Vec<f64>], b: &[Vec<f64>], w: FusionWeights) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| w.w1() * x + w.w2() * y).collect())
        .collect()
}

/// Summary numbers for one matcher on a test corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherMetrics {
    pub rank1: f64,
    pub tar: f64,
}

/// Closed-set search plan over test identities: enrollments per the
/// protocol, remaining impressions probe.
pub fn closed_set_plan(samples: &[Sample], protocol: &Protocol, seed: u64) -> Result<GalleryPlan> {
    let mut by_id: std::collections::BTreeMap<u64, Vec<u32>> = Default::default();
    for s in samples {
        by_id.entry(s.identity).or_default().push(s.impression);
    }
    let tests: Vec<Identity> = by_id.into_iter().map(|(id, imps)| Identity::new(id, imps)).collect();
    build_galleries(&tests, &[], protocol, seed)
}

/// Rank-1 and TAR at `far` from a score table and pair scores.
pub fn metrics_from(plan: &GalleryPlan, table: &[Vec<f64>], pairs: &ScoreSet, far: f64) -> Result<MatcherMetrics> {
    let gallery_subjects: Vec<u64> = plan.closed_gallery.iter().map(|r| r.subject_id).collect();
    let probe_subjects: Vec<u64> = plan.probes.iter().map(|r| r.subject_id).collect();
    let cmc = cmc_from_scores(&probe_subjects, &gallery_subjects, table, 1)?;
    Ok(MatcherMetrics {
        rank1: cmc[0].hit_rate,
        tar: tar_at_far(pairs, &[far])?[0].tar,
    })
}

/// Vanilla, concat and fused metrics on one test corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub vanilla: MatcherMetrics,
    pub concat: MatcherMetrics,
    pub fused: MatcherMetrics,
}

/// Evaluate two stores embedding the same test records and their fusion
/// (`weights.w1` on concat, `weights.w2` on vanilla).
pub fn compare_stores(
    vanilla: &EmbeddingStore,
    concat: &EmbeddingStore,
    test: &[Sample],
    weights: FusionWeights,
    far: f64,
    seed: u64,
) -> Result<ComparisonResult> {
    let plan = closed_set_plan(test, &Protocol::default(), seed)?;
    let tv = score_table(vanilla, &plan.closed_gallery, &plan.probes)?;
    let tc = score_table(concat, &plan.closed_gallery, &plan.probes)?;
    let pv = score_pairs(vanilla)?;
    let pc = score_pairs(concat)?;
    let tf = fuse_tables(&tc, &tv, weights);
    let pf = pc.fuse(&pv, weights, false)?;
    Ok(ComparisonResult {
        vanilla: metrics_from(&plan, &tv, &pv, far)?,
        concat: metrics_from(&plan, &tc, &pc, far)?,
        fused: metrics_from(&plan, &tf, &pf, far)?,
    })
}

/// Identity split of a corpus into train/val/test samples.
pub fn split_samples(samples: &[Sample], split: &crate::eval::FoldSplit) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let pick = |ids: &[u64]| samples.iter().filter(|s| ids.binary_search(&s.identity).is_ok()).cloned().collect();
    (pick(&split.train), pick(&split.val), pick(&split.test))
}

/// Settings of the vanilla-versus-concat comparison on a toy corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub folds: usize,
    pub val_identities: usize,
    pub split_seed: u64,
    pub fold: usize,
    pub map_sigma: f64,
    pub schedule: crate::vit::Schedule,
    pub far: f64,
    pub weights: FusionWeights,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            folds: 4,
            val_identities: 10,
            split_seed: 0,
            fold: 0,
            map_sigma: 1.0,
            schedule: crate::vit::Schedule::default(),
            far: 0.01,
            weights: FusionWeights::DEFAULT,
        }
    }
}

/// Train a vanilla and a concat model with `model_seed` on the training
/// identities and compare them on the test identities.
pub fn run_comparison(corpus: &[Sample], cfg: &ComparisonConfig, model_seed: u64) -> Result<ComparisonResult> {
    let mut ids: Vec<u64> = corpus.iter().map(|s| s.identity).collect();
    ids.sort_unstable();
    ids.dedup();
    let splits = crate::eval::kfold_split(&ids, cfg.folds, cfg.val_identities, cfg.split_seed)?;
    let split = splits
        .get(cfg.fold)
        .ok_or_else(|| Error::Config(format!("fold {} out of range", cfg.fold)))?;
    let (train, val, test) = split_samples(corpus, split);
    let mut stores = Vec::new();
    for mode in [Mode::Vanilla, Mode::Concat] {
        let config = ModelConfig::desk(mode.map_channels(), split.train.len()).with_seed(model_seed);
        let prep = Preprocessing::for_model(&config, cfg.map_sigma);
        let (data, _) = labeled(&train, tokenize_all(&train, &prep, mode)?);
        let (val_data, _) = labeled(&val, tokenize_all(&val, &prep, mode)?);
        let schedule = crate::vit::Schedule {
            shuffle_seed: model_seed,
            ..cfg.schedule.clone()
        };
        let (params, _) = crate::vit::train(&config, None, &data, Some(&val_data), &schedule)?;
        stores.push(embed_samples(&params, &test, &prep, mode)?);
    }
    compare_stores(&stores[0], &stores[1], &test, cfg.weights, cfg.far, cfg.split_seed)
}

/// Parameters for `config` initialized from a pretrained model: every
/// tensor is copied except the classifier, which is freshly initialized
/// when the number of identities changes.
pub fn warm_start(pretrained: &ModelParams<f32>, config: &ModelConfig) -> Result<ModelParams<f32>> {
    let mut fresh = ModelParams::<f32>::init(config)?;
    let names = ModelParams::<f32>::tensor_names(config);
    let source = pretrained.named_tensors();
    if source.len() != names.len() {
        return Err(Error::Config(format!(
            "pretrained model has {} tensors, configuration needs {}",
            source.len(),
            names.len()
        )));
    }
    for ((name, dst), (src_name, src)) in names.iter().zip(fresh.tensors_mut()).zip(source) {
        if *name != src_name {
            return Err(Error::Config(format!("tensor '{src_name}' where '{name}' was expected")));
        }
        if name.starts_with("classifier") && dst.shape != src.shape {
            continue;
        }
        if dst.shape != src.shape {
            return Err(Error::Config(format!(
                "pretrained tensor '{name}' has shape {:?}, configuration needs {:?}",
                src.shape, dst.shape
            )));
        }
        dst.data.clone_from(&src.data);
    }
    Ok(fresh)
}
