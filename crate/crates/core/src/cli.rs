//! Command-line front end. Every command writes a provenance block next to
//! its outputs; errors become one structured line on stderr and an exit
//! code (1 usage/config, 2 data/format, 3 numerical/training).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    closed_set_search_eval, kfold_split, open_set_search_eval, score_pairs, tar_at_far, EvalReport, FoldSplit,
};
use crate::image::{read_pgm, write_pgm};
use crate::matcher::{bench_throughput, search_batch, BenchConfig, EmbeddingStore, FusionWeights, RecordId};
use crate::minutiae::{read_minutiae_file, MinutiaeSet};
use crate::pipeline::{embed_samples, labeled, load_corpus, sample_tokens, tokenize_all, warm_start, Mode, Preprocessing, Sample};
use crate::synthdata::generate_dataset;
use crate::vit::{load_checkpoint, save_checkpoint, saliency, train, ModelParams, SaliencyTarget};

#[derive(Debug, Parser)]
#[command(name = "fpvit", version, about = "Minutiae-guided ViT fingerprint embeddings, matching and evaluation")]
pub struct Cli {
    /// Run configuration file (`key = value` with sections); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus (PGM images, MNT minutiae, manifest).
    Generate(GenerateArgs),
    /// Train a vanilla or minutiae-concatenated model on a corpus fold.
    Train(TrainArgs),
    /// Embed corpus impressions into an embedding store.
    Embed(EmbedArgs),
    /// Top-k search of probe embeddings against a gallery store.
    Search(SearchArgs),
    /// 1:1 authentication: TAR at fixed FAR for one or two matchers and their fusion.
    Authenticate(AuthenticateArgs),
    /// 1:N identification: closed-set CMC or open-set FPIR/FNIR.
    Identify(IdentifyArgs),
    /// Matcher throughput benchmark.
    Bench(BenchArgs),
    /// Input-gradient saliency heatmap for one impression.
    Saliency(SaliencyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub impressions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// First identity id, to draw disjoint identities from the same seed.
    #[arg(long)]
    pub first_id: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// vanilla | concat
    #[arg(long)]
    pub mode: Option<String>,
    /// Warm-start from a pretrained checkpoint (fine-tuning).
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train on every identity in the corpus instead of a fold split.
    #[arg(long)]
    pub all_identities: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Identities to embed: test | val | train | all.
    #[arg(long, default_value = "test")]
    pub subset: String,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuthenticateArgs {
    /// Embedding store(s); with two stores and --fuse a fused row is added.
    #[arg(long = "store", required = true, num_args = 1)]
    pub stores: Vec<PathBuf>,
    /// Fusion weights `w1,w2` for the first and second store.
    #[arg(long)]
    pub fuse: Option<String>,
    /// Min-max normalize each matcher's scores before fusing.
    #[arg(long)]
    pub normalize: bool,
    /// Comma-separated FAR targets.
    #[arg(long)]
    pub far: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Explicit probe store; the whole `--store` then serves as gallery.
    #[arg(long)]
    pub probes: Option<PathBuf>,
    #[arg(long, conflicts_with = "open", required_unless_present = "open")]
    pub closed: bool,
    #[arg(long)]
    pub open: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub gallery_size: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 8)]
    pub probes: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON report path; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// MNT minutiae file; required for concat models.
    #[arg(long)]
    pub minutiae: Option<PathBuf>,
    /// Class logit to explain; the embedding norm when absent.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if code == 0 {
                let _ = e.print();
            } else {
                report_error_line("usage", 1, &e.to_string());
            }
            return code;
        }
    };
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            report_error_line(e.kind(), code, &e.to_string());
            code
        }
    }
}

fn report_error_line(kind: &str, code: i32, message: &str) {
    let flat: Vec<&str> = message.split_whitespace().collect();
    eprintln!("error kind={kind} exit={code} message={:?}", flat.join(" "));
}

/// Effective configuration and timing shared by a command run.
pub struct Context {
    config: RunConfig,
    argv: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl Context {
    fn provenance(&self, command: &str, extra: serde_json::Value) -> String {
        let value = json!({
            "command": command,
            "argv": self.argv,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.config.seed,
            "threads": rayon::current_num_threads(),
            "started_unix": self.started_unix,
            "elapsed_seconds": self.started.elapsed().as_secs_f64(),
            "config": self.config.echo(),
            "details": extra,
        });
        serde_json::to_string_pretty(&value).expect("provenance serializes")
    }

    /// Write the provenance block as `provenance.json` in `dir`.
    fn write_provenance_dir(&self, dir: &Path, command: &str, extra: serde_json::Value) -> Result<()> {
        write_text(&dir.join("provenance.json"), &self.provenance(command, extra))
    }

    /// Write the provenance block next to a single output file.
    fn write_provenance_file(&self, file: &Path, command: &str, extra: serde_json::Value) -> Result<()> {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".provenance.json");
        write_text(&file.with_file_name(name), &self.provenance(command, extra))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    if config.threads > 0 {
        // fails only if a pool was already installed, e.g. when called twice in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut ctx = Context {
        config,
        argv: argv.to_vec(),
        started: Instant::now(),
        started_unix,
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Embed(a) => cmd_embed(&ctx, a),
        Command::Search(a) => cmd_search(&ctx, a),
        Command::Authenticate(a) => cmd_authenticate(&ctx, a),
        Command::Identify(a) => cmd_identify(&mut ctx, a),
        Command::Bench(a) => cmd_bench(&mut ctx, a),
        Command::Saliency(a) => cmd_saliency(&ctx, a),
    }
}

pub fn cmd_generate(ctx: &mut Context, a: GenerateArgs) -> Result<()> {
    let c = &mut ctx.config;
    if let Some(v) = a.identities {
        c.synth.identities = v;
    }
    if let Some(v) = a.impressions {
        c.synth.impressions = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.first_id {
        c.synth.config.first_id = v;
    }
    create_dir(&a.out)?;
    let entries = generate_dataset(&c.synth.config, c.synth.identities, c.synth.impressions, c.seed, &a.out)?;
    println!("generated {} impressions of {} identities in {}", entries.len(), c.synth.identities, a.out.display());
    ctx.write_provenance_dir(&a.out, "generate", json!({ "impressions": entries.len() }))
}

fn identities(samples: &[Sample]) -> Vec<u64> {
    let mut ids: Vec<u64> = samples.iter().map(|s| s.identity).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn subset(samples: &[Sample], ids: &[u64]) -> Vec<Sample> {
    samples.iter().filter(|s| ids.binary_search(&s.identity).is_ok()).cloned().collect()
}

pub fn cmd_train(ctx: &mut Context, a: TrainArgs) -> Result<()> {
    let c = &mut ctx.config;
    if let Some(m) = &a.mode {
        c.mode = Mode::parse(m)?;
    }
    if let Some(v) = a.fold {
        c.protocol.fold = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.epochs {
        c.schedule.epochs = v;
    }
    c.validate()?;
    let c = ctx.config.clone();
    let corpus = load_corpus(&a.corpus)?;
    let ids = identities(&corpus);
    let split = if a.all_identities {
        FoldSplit { fold: 0, train: ids.clone(), val: Vec::new(), test: Vec::new() }
    } else {
        let splits = kfold_split(&ids, c.protocol.protocol.folds, c.protocol.val_identities, c.protocol.split_seed)?;
        splits
            .get(c.protocol.fold)
            .cloned()
            .ok_or_else(|| Error::Config(format!("fold {} out of range for {} folds", c.protocol.fold, splits.len())))?
    };
    let train_samples = subset(&corpus, &split.train);
    let val_samples = subset(&corpus, &split.val);
    let config = c.model_config(split.train.len())?;
    let prep = Preprocessing::for_model(&config, c.model.map_sigma);
    let (data, _) = labeled(&train_samples, tokenize_all(&train_samples, &prep, c.mode)?);
    let (val, _) = labeled(&val_samples, tokenize_all(&val_samples, &prep, c.mode)?);
    let init = match &a.init_from {
        Some(p) => Some(warm_start(&load_checkpoint::<f32>(p)?.0, &config)?),
        None => None,
    };
    let schedule = crate::vit::Schedule {
        shuffle_seed: c.seed,
        ..c.schedule.clone()
    };
    let val_ref = (val.len() > 1).then_some(val.as_slice());
    let (params, log) = train(&config, init, &data, val_ref, &schedule)?;

    create_dir(&a.out)?;
    let mut meta = BTreeMap::new();
    meta.insert("mode".to_string(), c.mode.name().to_string());
    meta.insert("map_sigma".to_string(), c.model.map_sigma.to_string());
    meta.insert("split".to_string(), serde_json::to_string(&split).expect("split serializes"));
    meta.insert("seed".to_string(), c.seed.to_string());
    save_checkpoint(&params, &meta, a.out.join("model.fpvt"))?;
    write_text(&a.out.join("train_log.json"), &to_json(&log))?;
    write_text(&a.out.join("split.json"), &to_json(&split))?;
    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} model: {} epochs, final loss {:.4}, train acc {:.3}, val rank-1 {}",
            c.mode.name(),
            log.epochs.len(),
            last.mean_loss,
            last.train_accuracy,
            last.val_rank1.map_or("n/a".to_string(), |v| format!("{v:.3}"))
        );
    }
    ctx.write_provenance_dir(
        &a.out,
        "train",
        json!({ "init_from": a.init_from, "train_identities": split.train.len(), "parameters": params.param_count() }),
    )
}

struct LoadedModel {
    params: ModelParams<f32>,
    mode: Mode,
    prep: Preprocessing,
    split: Option<FoldSplit>,
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let (params, header) = load_checkpoint::<f32>(path)?;
    let mode = match header.meta.get("mode") {
        Some(m) => Mode::parse(m)?,
        None if params.config.map_channels() == 0 => Mode::Vanilla,
        None => Mode::Concat,
    };
    let sigma = match header.meta.get("map_sigma") {
        Some(s) => s.parse().map_err(|_| Error::Format(format!("bad map_sigma '{s}' in checkpoint")))?,
        None => 1.0,
    };
    let split = match header.meta.get("split") {
        Some(s) => Some(serde_json::from_str(s).map_err(|e| Error::Format(format!("bad split in checkpoint: {e}")))?),
        None => None,
    };
    Ok(LoadedModel {
        prep: Preprocessing::for_model(&params.config, sigma),
        params,
        mode,
        split,
    })
}

pub fn cmd_embed(ctx: &Context, a: EmbedArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let chosen = match a.subset.as_str() {
        "all" => corpus,
        name => {
            let split = model
                .split
                .as_ref()
                .ok_or_else(|| Error::Config("checkpoint carries no split; use --subset all".into()))?;
            let ids = match name {
                "test" => &split.test,
                "val" => &split.val,
                "train" => &split.train,
                other => return Err(Error::Config(format!("unknown subset '{other}'"))),
            };
            subset(&corpus, ids)
        }
    };
    if chosen.is_empty() {
        return Err(Error::Empty(format!("subset '{}' selects no impressions", a.subset)));
    }
    let store = embed_samples(&model.params, &chosen, &model.prep, model.mode)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    store.write(&a.out)?;
    println!("embedded {} impressions ({} mode, dim {})", store.len(), model.mode.name(), store.dim());
    ctx.write_provenance_file(&a.out, "embed", json!({ "records": store.len(), "subset": a.subset }))
}

pub fn cmd_search(ctx: &Context, a: SearchArgs) -> Result<()> {
    let gallery = EmbeddingStore::read(&a.gallery)?;
    let probes = EmbeddingStore::read(&a.probes)?;
    let vectors: Vec<Vec<f32>> = probes.iter().map(|(_, v)| v.to_vec()).collect();
    let hits = search_batch(&gallery, &vectors, a.top_k)?;
    let mut csv = String::from("probe_subject,probe_impression,rank,subject,impression,score\n");
    for ((pid, _), list) in probes.iter().zip(&hits) {
        for (r, h) in list.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                pid.subject_id,
                pid.impression_id,
                r + 1,
                h.subject_id,
                h.impression_id,
                h.score
            );
        }
    }
    match &a.out {
        Some(path) => {
            write_text(path, &csv)?;
            ctx.write_provenance_file(path, "search", json!({ "probes": probes.len(), "gallery": gallery.len() }))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn store_name(path: &Path) -> String {
    path.file_stem().map_or("store".to_string(), |s| s.to_string_lossy().into_owned())
}

fn parse_fars(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad FAR target '{t}'"))))
        .collect()
}

pub fn cmd_authenticate(ctx: &Context, a: AuthenticateArgs) -> Result<()> {
    let fars = match &a.far {
        Some(t) => parse_fars(t)?,
        None => ctx.config.protocol.far_targets.clone(),
    };
    if a.stores.len() > 2 {
        return Err(Error::Config("authenticate takes one or two stores".into()));
    }
    let weights = a.fuse.as_deref().map(FusionWeights::parse).transpose()?;
    if weights.is_some() && a.stores.len() != 2 {
        return Err(Error::Config("--fuse needs exactly two --store arguments".into()));
    }
    let stores = a.stores.iter().map(EmbeddingStore::read).collect::<Result<Vec<_>>>()?;
    if stores.len() == 2 && stores[0].ids() != stores[1].ids() {
        return Err(Error::Protocol("the two stores must hold the same records in the same order".into()));
    }
    let mut rows = Vec::new();
    let mut sets = Vec::new();
    for (path, store) in a.stores.iter().zip(&stores) {
        let scores = score_pairs(store)?;
        rows.push((store_name(path), tar_at_far(&scores, &fars)?));
        sets.push(scores);
    }
    if let Some(w) = weights {
        let fused = sets[0].fuse(&sets[1], w, a.normalize)?;
        rows.push((format!("fused({},{})", w.w1(), w.w2()), tar_at_far(&fused, &fars)?));
    }
    create_dir(&a.out)?;
    let reports: Vec<EvalReport> = rows
        .into_iter()
        .map(|(name, tar)| EvalReport { name, tar_at_far: tar, ..EvalReport::default() })
        .collect();
    let mut table = String::from("matcher,far,tar,threshold,far_achieved,resolution_limited\n");
    for r in &reports {
        r.validate()?;
        for p in &r.tar_at_far {
            let _ = writeln!(table, "{},{},{},{},{},{}", r.name, p.far_target, p.tar, p.threshold, p.far, p.resolution_limited);
        }
        write_text(&a.out.join(format!("tar_{}.csv", r.name)), &r.tar_csv())?;
    }
    write_text(&a.out.join("report.json"), &to_json(&json!({ "matchers": reports })))?;
    write_text(&a.out.join("tar.csv"), &table)?;
    print!("{table}");
    ctx.write_provenance_dir(
        &a.out,
        "authenticate",
        json!({ "genuine": sets[0].genuine.len(), "imposter": sets[0].imposter.len() }),
    )
}

fn labeled_vectors(store: &EmbeddingStore, ids: impl Iterator<Item = RecordId>) -> Vec<(u64, Vec<f32>)> {
    let index: std::collections::HashMap<RecordId, usize> =
        store.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    ids.filter_map(|id| index.get(&id).map(|&i| (id.subject_id, store.vector(i).to_vec())))
        .collect()
}

pub fn cmd_identify(ctx: &mut Context, a: IdentifyArgs) -> Result<()> {
    if let Some(s) = a.seed {
        ctx.config.seed = s;
    }
    let c = &ctx.config;
    let store = EmbeddingStore::read(&a.store)?;
    create_dir(&a.out)?;
    let mut report = EvalReport::new(store_name(&a.store));
    let gallery_subjects = |g: &EmbeddingStore| g.subjects().len();
    if let Some(probe_path) = &a.probes {
        if a.open {
            return Err(Error::Config("--probes supports closed-set identification only".into()));
        }
        let probes = EmbeddingStore::read(probe_path)?;
        let labeled: Vec<(u64, Vec<f32>)> = probes.iter().map(|(id, v)| (id.subject_id, v.to_vec())).collect();
        let max_rank = c.protocol.max_rank.min(gallery_subjects(&store));
        report.cmc = closed_set_search_eval(&store, &labeled, max_rank)?;
    } else {
        let samples_by_subject = {
            let mut m: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
            for id in store.ids() {
                m.entry(id.subject_id).or_default().push(id.impression_id);
            }
            m
        };
        let tests: Vec<crate::eval::Identity> =
            samples_by_subject.into_iter().map(|(s, i)| crate::eval::Identity::new(s, i)).collect();
        let plan = crate::eval::build_galleries(&tests, &[], &c.protocol.protocol, c.seed)?;
        if a.closed {
            let keep: HashSet<RecordId> = plan.closed_gallery.iter().copied().collect();
            let gallery = store.filtered(|id| keep.contains(&id));
            let probes = labeled_vectors(&store, plan.probes.iter().copied());
            let max_rank = c.protocol.max_rank.min(gallery_subjects(&gallery));
            report.cmc = closed_set_search_eval(&gallery, &probes, max_rank)?;
        } else {
            let keep: HashSet<RecordId> = plan.open_gallery.iter().copied().collect();
            let gallery = store.filtered(|id| keep.contains(&id));
            let mated = labeled_vectors(&store, plan.mated_probes());
            let unmated = labeled_vectors(&store, plan.unmated_probes());
            report.det_open = open_set_search_eval(&gallery, &mated, &unmated, None)?;
        }
    }
    report.validate()?;
    if a.open {
        write_text(&a.out.join("det.csv"), &report.det_csv())?;
        println!("open-set: {} thresholds written to {}", report.det_open.len(), a.out.join("det.csv").display());
    } else {
        write_text(&a.out.join("cmc.csv"), &report.cmc_csv())?;
        println!("closed-set rank-1: {:.4}", report.cmc.first().map_or(0.0, |p| p.hit_rate));
    }
    report.write_json(a.out.join("report.json"))?;
    ctx.write_provenance_dir(&a.out, "identify", json!({ "open": a.open }))
}

pub fn cmd_bench(ctx: &mut Context, a: BenchArgs) -> Result<()> {
    if let Some(s) = a.seed {
        ctx.config.seed = s;
    }
    let config = BenchConfig {
        dim: a.dim,
        gallery_size: a.gallery_size,
        repetitions: a.repetitions,
        probes_per_repetition: a.probes,
        top_k: a.top_k,
        threads: ctx.config.threads,
        seed: ctx.config.seed,
    };
    let report = bench_throughput(&config)?;
    let text = to_json(&report);
    println!("{text}");
    if let Some(path) = &a.out {
        write_text(path, &text)?;
        ctx.write_provenance_file(path, "bench", json!({}))?;
    }
    Ok(())
}

pub fn cmd_saliency(ctx: &Context, a: SaliencyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let image = read_pgm::<f32>(&a.image)?;
    let minutiae = match (&a.minutiae, model.mode) {
        (Some(p), _) => read_minutiae_file(p)?,
        (None, Mode::Vanilla) => MinutiaeSet::empty(image.width(), image.height()),
        (None, Mode::Concat) => return Err(Error::Config("concat models need --minutiae".into())),
    };
    let sample = Sample { identity: 0, impression: 0, image, minutiae };
    let tokens = sample_tokens(&sample, &model.prep, model.mode)?;
    let target = a.class.map_or(SaliencyTarget::EmbeddingNorm, SaliencyTarget::ClassLogit);
    let heat = saliency(&model.params, &tokens, target)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_pgm(&heat, &a.out)?;
    println!("saliency map {}x{} written to {}", heat.width(), heat.height(), a.out.display());
    ctx.write_provenance_file(&a.out, "saliency", json!({ "target": format!("{target:?}") }))
}
