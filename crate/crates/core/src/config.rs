//! Run configuration: flat `key = value` text grouped in `[sections]`.
//!
//! ```text
//! [model]
//! preset = desk
//! depth = 2
//! ```
//!
//! `#` starts a comment. Every key has a default; unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::pipeline::Mode;
use crate::synthdata::{ImpressionParams, SynthConfig};
use crate::vit::{ModelConfig, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// `desk` or `full`; explicit keys below override the preset.
    pub preset: String,
    pub image_side: Option<usize>,
    pub patch_size: Option<usize>,
    pub embed_width: Option<usize>,
    pub depth: Option<usize>,
    pub heads: Option<usize>,
    pub mlp_ratio: Option<f64>,
    pub embedding_dim: Option<usize>,
    pub map_sigma: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            image_side: None,
            patch_size: None,
            embed_width: None,
            depth: None,
            heads: None,
            mlp_ratio: None,
            embedding_dim: None,
            map_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSection {
    pub protocol: Protocol,
    pub val_identities: usize,
    pub fold: usize,
    /// Seed of the identity shuffle behind the fold split.
    pub split_seed: u64,
    pub far_targets: Vec<f64>,
    pub max_rank: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            protocol: Protocol {
                folds: 4,
                ..Protocol::default()
            },
            val_identities: 10,
            fold: 0,
            split_seed: 0,
            far_targets: vec![0.001, 0.01],
            max_rank: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub identities: usize,
    pub impressions: usize,
    pub config: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            identities: 80,
            impressions: 10,
            config: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub mode: Mode,
    pub model: ModelSection,
    pub schedule: Schedule,
    pub protocol: ProtocolSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            mode: Mode::Concat,
            model: ModelSection::default(),
            schedule: Schedule::default(),
            protocol: ProtocolSection::default(),
            synth: SynthSection::default(),
        }
    }
}

fn value<T: std::str::FromStr>(line: usize, key: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value '{text}' for '{key}'"),
    })
}

fn list(line: usize, key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',').map(|t| value(line, key, t.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::from("run");
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, val) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            cfg.set(&format!("{section}.{}", key.trim()), val.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Set one `section.key`; `line` is used for error reporting (0 for flags).
    pub fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let p = &mut self.synth.config.params;
        let s = &mut self.schedule;
        let m = &mut self.model;
        let pr = &mut self.protocol;
        match key {
            "run.seed" => self.seed = value(line, key, v)?,
            "run.threads" => self.threads = value(line, key, v)?,
            "run.mode" => self.mode = Mode::parse(v)?,
            "model.preset" => m.preset = v.to_string(),
            "model.image_side" => m.image_side = Some(value(line, key, v)?),
            "model.patch_size" => m.patch_size = Some(value(line, key, v)?),
            "model.embed_width" => m.embed_width = Some(value(line, key, v)?),
            "model.depth" => m.depth = Some(value(line, key, v)?),
            "model.heads" => m.heads = Some(value(line, key, v)?),
            "model.mlp_ratio" => m.mlp_ratio = Some(value(line, key, v)?),
            "model.embedding_dim" => m.embedding_dim = Some(value(line, key, v)?),
            "model.map_sigma" => m.map_sigma = value(line, key, v)?,
            "schedule.epochs" => s.epochs = value(line, key, v)?,
            "schedule.batch_size" => s.batch_size = value(line, key, v)?,
            "schedule.peak_lr" => s.peak_lr = value(line, key, v)?,
            "schedule.min_lr" => s.min_lr = value(line, key, v)?,
            "schedule.warmup_steps" => s.warmup_steps = value(line, key, v)?,
            "schedule.weight_decay" => s.weight_decay = value(line, key, v)?,
            "schedule.clip_norm" => {
                s.clip_norm = if v == "none" { None } else { Some(value(line, key, v)?) }
            }
            "protocol.folds" => pr.protocol.folds = value(line, key, v)?,
            "protocol.enroll" => pr.protocol.enroll_impressions_per_finger = value(line, key, v)?,
            "protocol.unmated_fraction" => pr.protocol.unmated_fraction = value(line, key, v)?,
            "protocol.val_identities" => pr.val_identities = value(line, key, v)?,
            "protocol.fold" => pr.fold = value(line, key, v)?,
            "protocol.split_seed" => pr.split_seed = value(line, key, v)?,
            "protocol.far_targets" => pr.far_targets = list(line, key, v)?,
            "protocol.max_rank" => pr.max_rank = value(line, key, v)?,
            "synth.identities" => self.synth.identities = value(line, key, v)?,
            "synth.impressions" => self.synth.impressions = value(line, key, v)?,
            "synth.side" => self.synth.config.side = value(line, key, v)?,
            "synth.first_id" => self.synth.config.first_id = value(line, key, v)?,
            "synth.max_translation" => p.max_translation = value(line, key, v)?,
            "synth.max_rotation_deg" => p.max_rotation_deg = value(line, key, v)?,
            "synth.dropout" => p.dropout = value(line, key, v)?,
            "synth.noise_std" => p.noise_std = value(line, key, v)?,
            "synth.contrast_jitter" => p.contrast_jitter = value(line, key, v)?,
            "synth.max_occlusions" => p.max_occlusions = value(line, key, v)?,
            "synth.max_occlusion_size" => p.max_occlusion_size = value(line, key, v)?,
            _ => {
                let message = format!("unknown key '{key}'");
                return Err(if line > 0 { Error::Parse { line, message } } else { Error::Config(message) });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.protocol.protocol.validate()?;
        self.synth.config.params.validate()?;
        if !(self.model.map_sigma > 0.0) {
            return Err(Error::Config("model.map_sigma must be positive".into()));
        }
        if self.protocol.far_targets.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config("protocol.far_targets must lie in (0, 1)".into()));
        }
        self.model_config(1)?;
        Ok(())
    }

    /// Model configuration for the run's mode and `num_classes` identities.
    pub fn model_config(&self, num_classes: usize) -> Result<ModelConfig> {
        let channels = self.mode.map_channels();
        let m = &self.model;
        let mut c = match m.preset.as_str() {
            "desk" => ModelConfig::desk(channels, num_classes),
            "full" => ModelConfig::full_scale(channels, num_classes),
            other => return Err(Error::Config(format!("unknown model preset '{other}'"))),
        };
        c.image_side = m.image_side.unwrap_or(c.image_side);
        c.patch_size = m.patch_size.unwrap_or(c.patch_size);
        c.embed_width = m.embed_width.unwrap_or(c.embed_width);
        c.depth = m.depth.unwrap_or(c.depth);
        c.heads = m.heads.unwrap_or(c.heads);
        c.mlp_ratio = m.mlp_ratio.unwrap_or(c.mlp_ratio);
        c.embedding_dim = m.embedding_dim.unwrap_or(c.embedding_dim);
        c.in_dim_per_token = c.patch_size * c.patch_size * (1 + channels);
        c.seed = self.seed;
        c.validate()?;
        Ok(c)
    }

    /// The effective configuration in the file format; parsing it back
    /// yields an equal config.
    pub fn echo(&self) -> String {
        let mut o = String::new();
        let opt = |v: Option<String>| v.unwrap_or_default();
        let m = &self.model;
        let s = &self.schedule;
        let pr = &self.protocol;
        let p = &self.synth.config.params;
        let _ = writeln!(o, "[run]\nseed = {}\nthreads = {}\nmode = {}", self.seed, self.threads, self.mode.name());
        let _ = writeln!(o, "\n[model]\npreset = {}", m.preset);
        for (k, v) in [
            ("image_side", m.image_side.map(|v| v.to_string())),
            ("patch_size", m.patch_size.map(|v| v.to_string())),
            ("embed_width", m.embed_width.map(|v| v.to_string())),
            ("depth", m.depth.map(|v| v.to_string())),
            ("heads", m.heads.map(|v| v.to_string())),
            ("mlp_ratio", m.mlp_ratio.map(|v| v.to_string())),
            ("embedding_dim", m.embedding_dim.map(|v| v.to_string())),
        ] {
            if v.is_some() {
                let _ = writeln!(o, "{k} = {}", opt(v));
            }
        }
        let _ = writeln!(o, "map_sigma = {}", m.map_sigma);
        let _ = writeln!(
            o,
            "\n[schedule]\nepochs = {}\nbatch_size = {}\npeak_lr = {}\nmin_lr = {}\nwarmup_steps = {}\nweight_decay = {}\nclip_norm = {}",
            s.epochs,
            s.batch_size,
            s.peak_lr,
            s.min_lr,
            s.warmup_steps,
            s.weight_decay,
            s.clip_norm.map_or("none".to_string(), |c| c.to_string())
        );
        let fars: Vec<String> = pr.far_targets.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(
            o,
            "\n[protocol]\nfolds = {}\nenroll = {}\nunmated_fraction = {}\nval_identities = {}\nfold = {}\nsplit_seed = {}\nfar_targets = {}\nmax_rank = {}",
            pr.protocol.folds,
            pr.protocol.enroll_impressions_per_finger,
            pr.protocol.unmated_fraction,
            pr.val_identities,
            pr.fold,
            pr.split_seed,
            fars.join(","),
            pr.max_rank
        );
        let _ = writeln!(
            o,
            "\n[synth]\nidentities = {}\nimpressions = {}\nside = {}\nfirst_id = {}\nmax_translation = {}\nmax_rotation_deg = {}\ndropout = {}\nnoise_std = {}\ncontrast_jitter = {}\nmax_occlusions = {}\nmax_occlusion_size = {}",
            self.synth.identities,
            self.synth.impressions,
            self.synth.config.side,
            self.synth.config.first_id,
            p.max_translation,
            p.max_rotation_deg,
            p.dropout,
            p.noise_std,
            p.contrast_jitter,
            p.max_occlusions,
            p.max_occlusion_size
        );
        o
    }

    pub fn impression_params(&self) -> &ImpressionParams {
        &self.synth.config.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("model.depth", "3", 0).unwrap();
        c.set("protocol.far_targets", "0.001, 0.05", 0).unwrap();
        c.set("schedule.clip_norm", "none", 0).unwrap();
        assert_eq!(RunConfig::parse(&c.echo()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# comment\n[schedule]\nepochs = many\n";
        assert!(matches!(RunConfig::parse(text), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(RunConfig::parse("[model]\nwidth = 3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(RunConfig::parse("nonsense\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("[model]\npreset = huge\n"), Err(Error::Config(_))));
    }

    #[test]
    fn presets_resolve() {
        let mut c = RunConfig::default();
        assert_eq!(c.model_config(50).unwrap().in_dim_per_token, 192);
        c.mode = Mode::Vanilla;
        c.model.preset = "full".into();
        let m = c.model_config(10).unwrap();
        assert_eq!((m.image_side, m.in_dim_per_token, m.embed_width), (224, 256, 384));
    }
}
