//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach stdout.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::oracles::{naive_det, naive_rank, naive_tar};
use common::{random_params, random_tokens, rel_err};
use fpvit::eval::{
    build_galleries, cmc_from_scores, count_pairs, det_from_scores, labels_from_counts, pair_counts, tar_at_far,
    Identity, Protocol,
};
use fpvit::image::Image;
use fpvit::matcher::{bench_throughput, normalized, search_batch, BenchConfig, EmbeddingStore, RecordId, ScoreSet};
use fpvit::minutiae::{build_minutiae_map, recover_minutiae, Minutia, MinutiaeMap, MinutiaeSet};
use fpvit::pipeline::{run_comparison, ComparisonConfig, Sample};
use fpvit::synthdata::{generate_corpus, SynthConfig};
use fpvit::tokenizer::tokenize;
use fpvit::vit::model::cross_entropy;
use fpvit::vit::{forward, input_gradient, loss_and_backward, read_checkpoint, write_checkpoint, ModelConfig, ModelParams, SaliencyTarget};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    check(start.elapsed() <= budget, format!("took {:.1?}, budget {budget:?}", start.elapsed()))
}

fn token_math() -> Outcome {
    let t0 = Instant::now();
    let img = Image::<f32>::zeros(224, 224);
    let concat = tokenize(&img, &MinutiaeMap::<f32>::zeros(224, 224, 2), 16).map_err(|e| e.to_string())?;
    let vanilla = tokenize(&img, &MinutiaeMap::<f32>::empty(224, 224), 16).map_err(|e| e.to_string())?;
    let got = (concat.num_tokens(), concat.token_dim(), vanilla.num_tokens(), vanilla.token_dim());
    check(got == (196, 768, 196, 256), format!("got {got:?}"))?;
    within(t0, Duration::from_secs(1))?;
    Ok("c=2: 196 x 768, c=0: 196 x 256".into())
}

fn map_invertibility() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..100 {
        let n = rng.gen_range(5..40);
        let mut pts: Vec<Minutia> = Vec::new();
        while pts.len() < n {
            let (x, y) = (rng.gen_range(0..224) as f64, rng.gen_range(0..224) as f64);
            if pts.iter().all(|p| (p.x - x).hypot(p.y - y) >= 12.0) {
                pts.push(Minutia::new(x, y, rng.gen_range(0.0..360.0)));
            }
        }
        let set = MinutiaeSet::new(224, 224, pts).map_err(|e| e.to_string())?;
        let map: MinutiaeMap<f32> = build_minutiae_map(&set, 2, 3.0).map_err(|e| e.to_string())?;
        let rec = recover_minutiae(&map, 0.5).map_err(|e| e.to_string())?;
        let key = |p: &Minutia| (p.x as i64, p.y as i64, p.channel(2));
        let mut a: Vec<_> = set.points().iter().map(key).collect();
        let mut b: Vec<_> = rec.points().iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        check(a == b, format!("trial {trial}: {} in, {} recovered", a.len(), b.len()))?;
    }
    for (theta, ch) in [(0.0, 0), (179.99, 0), (180.0, 1), (359.99, 1)] {
        let set = MinutiaeSet::new(32, 32, vec![Minutia::new(10.0, 10.0, theta)]).unwrap();
        let map: MinutiaeMap<f32> = build_minutiae_map(&set, 2, 3.0).unwrap();
        check(map.get(ch, 10, 10) == 1.0 && map.get(1 - ch, 10, 10) == 0.0, format!("theta {theta} misbinned"))?;
    }
    within(t0, Duration::from_secs(5))?;
    Ok("100 random sets exact; boundary angles 0, 179.99, 180, 359.99 binned correctly".into())
}

fn gradient_correctness() -> Outcome {
    const H: f64 = 1e-4;
    let t0 = Instant::now();
    let cfg = ModelConfig::desk(2, 10).with_seed(1);
    let params = random_params(&cfg, 5);
    let tokens = random_tokens(&cfg, 9);
    let label = 3;
    let loss = |p: &ModelParams<f64>| cross_entropy(&forward(p, &tokens).unwrap().logits, label).0;
    let (_, grads) = loss_and_backward(&params, &tokens, label).map_err(|e| e.to_string())?;
    let names = ModelParams::<f64>::tensor_names(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for (t, name) in names.iter().enumerate() {
        let len = grads.tensors()[t].len();
        let idx: Vec<usize> = if len <= 200 { (0..len).collect() } else { sample(&mut rng, len, 200).into_vec() };
        for i in idx {
            let mut p = params.clone();
            p.tensors_mut()[t].data[i] += H;
            let up = loss(&p);
            p.tensors_mut()[t].data[i] -= 2.0 * H;
            let numeric = (up - loss(&p)) / (2.0 * H);
            let e = rel_err(grads.tensors()[t].data[i], numeric);
            check(e <= 1e-5, format!("{name}[{i}] relative error {e:e}"))?;
            worst = worst.max(e);
            checked += 1;
        }
    }
    // input pixels: the image part of every token
    let pixels = cfg.patch_size * cfg.patch_size;
    let image_coords: Vec<usize> = (0..tokens.data().len()).filter(|i| i % cfg.in_dim_per_token < pixels).collect();
    for target in [SaliencyTarget::EmbeddingNorm, SaliencyTarget::ClassLogit(4)] {
        let grad = input_gradient(&params, &tokens, target).map_err(|e| e.to_string())?;
        for &i in image_coords.choose_multiple(&mut rng, 200) {
            let mut t = tokens.clone();
            t.data_mut()[i] += H;
            let up = forward(&params, &t).unwrap().target_value(target);
            t.data_mut()[i] -= 2.0 * H;
            let n = (up - forward(&params, &t).unwrap().target_value(target)) / (2.0 * H);
            let e = rel_err(grad[i], n);
            check(e <= 1e-5, format!("{target:?} pixel {i} relative error {e:e}"))?;
            worst = worst.max(e);
            checked += 1;
        }
    }
    within(t0, Duration::from_secs(120))?;
    Ok(format!("{checked} coordinates over {} tensors + 400 input pixels, worst {worst:.2e}", names.len()))
}

fn architectural_invariants() -> Outcome {
    let cfg = ModelConfig::desk(2, 5).with_seed(4);
    let params = ModelParams::<f32>::init(&cfg).map_err(|e| e.to_string())?;
    let out = forward(&params, &random_tokens(&cfg, 1).cast::<f32>()).map_err(|e| e.to_string())?;
    let seq = cfg.seq_len();
    let mut worst_row = 0.0f64;
    for blk in out.cache.blocks() {
        for h in 0..cfg.heads {
            for row in blk.attention(h, seq).chunks_exact(seq) {
                worst_row = worst_row.max((row.iter().map(|&p| p as f64).sum::<f64>() - 1.0).abs());
            }
        }
    }
    check(worst_row <= 1e-6, format!("attention row sum off by {worst_row:e}"))?;

    let mut p64 = random_params(&cfg, 8);
    p64.pos_embed.data.iter_mut().for_each(|v| *v = 0.0);
    let tokens = random_tokens(&cfg, 3);
    let mut order: Vec<usize> = (0..cfg.num_tokens()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let a = forward(&p64, &tokens).unwrap().embedding_raw;
    let b = forward(&p64, &tokens.permuted(&order)).unwrap().embedding_raw;
    let perm = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    check(perm <= 1e-5, format!("permutation changed the embedding by {perm:e}"))?;

    let p32 = random_params(&cfg, 21).cast::<f32>();
    let t32 = random_tokens(&cfg, 8).cast::<f32>();
    let bytes = write_checkpoint(&p32, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let (loaded, _) = read_checkpoint::<f32>(&bytes).map_err(|e| e.to_string())?;
    let (x, y) = (forward(&p32, &t32).unwrap(), forward(&loaded, &t32).unwrap());
    let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    check(bits(&x.embedding_raw) == bits(&y.embedding_raw) && bits(&x.logits) == bits(&y.logits), "checkpoint forward differs")?;
    Ok(format!("row sums within {worst_row:.1e}, permutation delta {perm:.1e}, checkpoint forward bit-identical"))
}

fn metric_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = |rng: &mut ChaCha8Rng| rng.gen_range(0..25) as f64 / 25.0;
    let instances = 25;
    for _ in 0..instances {
        let g: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| grid(&mut rng)).collect();
        let i: Vec<f64> = (0..rng.gen_range(5..60)).map(|_| grid(&mut rng)).collect();
        let targets = [0.02, 0.1, 0.3, 0.7];
        let got = tar_at_far(&ScoreSet::new(g.clone(), i.clone()), &targets).map_err(|e| e.to_string())?;
        for (p, &t) in got.iter().zip(&targets) {
            check((p.threshold, p.tar) == naive_tar(&g, &i, t), format!("TAR mismatch at target {t}"))?;
        }

        let subjects = rng.gen_range(2..8u64);
        let gallery: Vec<u64> = (0..subjects).flat_map(|s| vec![s; rng.gen_range(1..4)]).collect();
        let probes: Vec<u64> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..subjects)).collect();
        let table: Vec<Vec<f64>> = probes.iter().map(|_| gallery.iter().map(|_| grid(&mut rng)).collect()).collect();
        let cmc = cmc_from_scores(&probes, &gallery, &table, subjects as usize).map_err(|e| e.to_string())?;
        for p in &cmc {
            let hits = probes.iter().zip(&table).filter(|(&t, r)| naive_rank(t, r, &gallery) <= p.rank).count();
            check(p.hit_rate == hits as f64 / probes.len() as f64, format!("CMC mismatch at rank {}", p.rank))?;
        }

        let unmated: Vec<u64> = (0..rng.gen_range(1..6)).map(|k| 100 + k).collect();
        let us: Vec<Vec<f64>> = unmated.iter().map(|_| gallery.iter().map(|_| grid(&mut rng)).collect()).collect();
        let thresholds = [-1.0, 0.2, 0.5, 0.8, 2.0];
        let det = det_from_scores(&probes, &table, &unmated, &us, &gallery, &thresholds).map_err(|e| e.to_string())?;
        for p in &det {
            check((p.fpir, p.fnir) == naive_det(&probes, &table, &us, &gallery, p.threshold), "DET mismatch")?;
        }
    }
    for _ in 0..50 {
        let counts: Vec<u64> = (0..rng.gen_range(2..15)).map(|_| rng.gen_range(1..10)).collect();
        let n: u64 = counts.iter().sum();
        let (g, i) = pair_counts(&counts);
        check(g + i == n * (n - 1) / 2, "partition identity violated")?;
        if let Ok(walked) = count_pairs(&labels_from_counts(&counts)) {
            check(walked == (g, i), "walked pair count differs")?;
        }
    }
    let counts: Vec<u64> = [(37usize, 12u64), (150, 13), (11, 14)]
        .iter()
        .flat_map(|&(f, n)| std::iter::repeat_n(n, f))
        .collect();
    let totals = count_pairs(&labels_from_counts(&counts)).map_err(|e| e.to_string())?;
    check(totals == (15_143, 3_229_735), format!("first-split totals {totals:?}"))?;
    within(t0, Duration::from_secs(30))?;
    Ok(format!("{instances} random instances each for TAR/CMC/DET; 50 count vectors; 2548 images -> 15143 / 3229735"))
}

fn gallery_arithmetic() -> Outcome {
    let plan_sizes = |tests: usize, impressions: u32, distractors: usize| {
        let t: Vec<Identity> = (0..tests as u64).map(|s| Identity::with_count(s, impressions)).collect();
        let d: Vec<Identity> = (0..distractors as u64).map(|s| Identity::with_count(1_000_000 + s, 2)).collect();
        let plan = build_galleries(&t, &d, &Protocol::default(), 3).map_err(|e| e.to_string())?;
        let closed: HashSet<RecordId> = plan.closed_gallery.iter().copied().collect();
        check(plan.probes.iter().all(|p| !closed.contains(p)), "a probe is enrolled")?;
        Ok::<_, String>((plan.closed_gallery.len(), plan.open_gallery.len(), plan.probes.len(), plan.unmated_subjects.len()))
    };
    let full = plan_sizes(200, 12, 3499)?;
    check(full.0 == 7398 && full.1 == 7198 && full.3 == 100, format!("full-scale counts gave {full:?}"))?;
    let toy = plan_sizes(4, 12, 10)?;
    check((toy.0, toy.2, toy.1) == (28, 40, 24), format!("toy counts gave {toy:?}"))?;
    Ok("closed 7398, open 7198 (100 unmated); toy gallery 28, probes 40, open 24".into())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn directional_replication() -> Outcome {
    let t0 = Instant::now();
    let corpus: Vec<Sample> = generate_corpus(&SynthConfig::default(), 80, 10, 7)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(Sample::from)
        .collect();
    let cfg = ComparisonConfig::default();
    let mut runs = Vec::new();
    for seed in 0..3 {
        let r = run_comparison(&corpus, &cfg, seed).map_err(|e| e.to_string())?;
        println!(
            "    seed {seed}: rank-1 vanilla {:.4} concat {:.4} fused {:.4} | TAR@1%FAR vanilla {:.4} concat {:.4} fused {:.4}",
            r.vanilla.rank1, r.concat.rank1, r.fused.rank1, r.vanilla.tar, r.concat.tar, r.fused.tar
        );
        runs.push(r);
    }
    let m = |f: &dyn Fn(&fpvit::pipeline::ComparisonResult) -> f64| median(runs.iter().map(f).collect());
    let (vr, cr, fr) = (m(&|r| r.vanilla.rank1), m(&|r| r.concat.rank1), m(&|r| r.fused.rank1));
    let (vt, ct, ft) = (m(&|r| r.vanilla.tar), m(&|r| r.concat.tar), m(&|r| r.fused.tar));
    let summary = format!(
        "median rank-1 V {vr:.4} C {cr:.4} F {fr:.4}; TAR@1%FAR V {vt:.4} C {ct:.4} F {ft:.4}; {:.0?}",
        t0.elapsed()
    );
    check(cr >= vr && ct >= vt, format!("concat below vanilla: {summary}"))?;
    check(fr >= vr.max(cr) - 0.005 && ft >= vt.max(ct) - 0.005, format!("fusion below best - 0.5pp: {summary}"))?;
    within(t0, Duration::from_secs(20 * 60))?;
    Ok(summary)
}

fn matcher_throughput() -> Outcome {
    // exactness first: kernel rankings against a plain f64 loop
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let unit = |rng: &mut ChaCha8Rng| normalized(&(0..384).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>()).unwrap();
    let mut store = EmbeddingStore::new(384).unwrap();
    for i in 0..1000u64 {
        store.insert(RecordId::new(i, 0), &unit(&mut rng)).unwrap();
    }
    let probes: Vec<Vec<f32>> = (0..16).map(|_| unit(&mut rng)).collect();
    let hits = search_batch(&store, &probes, 1000).map_err(|e| e.to_string())?;
    for (p, got) in probes.iter().zip(&hits) {
        let mut naive: Vec<(f64, u64)> = store
            .iter()
            .map(|(id, v)| (v.iter().zip(p).map(|(&a, &b)| a as f64 * b as f64).sum(), id.subject_id))
            .collect();
        naive.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let ours: Vec<u64> = got.iter().map(|h| h.subject_id).collect();
        let theirs: Vec<u64> = naive.iter().map(|x| x.1).collect();
        check(ours == theirs, "ranking differs from the naive reference")?;
    }

    let report = bench_throughput(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let summary = format!(
        "{:.2}M/s with {} threads (single-thread {:.2}M/s) on {}; 1000-record rankings identical to naive",
        report.multi_thread.mean / 1e6,
        report.multi_thread.threads,
        report.single_thread.mean / 1e6,
        report.hardware
    );
    check(report.multi_thread.mean >= 2.5e6, summary.clone())?;
    Ok(summary)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fpvit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), format!("fpvit {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn pipeline_once(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let cfg = d("run.cfg");
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    std::fs::write(
        &cfg,
        "[run]\nthreads = 1\n[schedule]\nepochs = 3\n[synth]\nidentities = 16\nimpressions = 5\n[protocol]\nval_identities = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let base = ["--config", cfg.as_str(), "--threads", "1"];
    fn join<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
        base.iter().chain(extra).copied().collect()
    }
    let with = |extra: &[&str]| run_cli(&join(&base, extra));
    with(&["generate", "--out", &d("corpus"), "--seed", "11"])?;
    for mode in ["concat", "vanilla"] {
        with(&["train", "--corpus", &d("corpus"), "--mode", mode, "--seed", "3", "--out", &d(mode)])?;
        let model = d(&format!("{mode}/model.fpvt"));
        with(&["embed", "--corpus", &d("corpus"), "--model", &model, "--out", &d(&format!("{mode}.fpem"))])?;
    }
    with(&[
        "authenticate", "--store", &d("concat.fpem"), "--store", &d("vanilla.fpem"), "--fuse", "0.7,0.3", "--out", &d("auth"),
    ])?;
    ["concat/model.fpvt", "vanilla/model.fpvt", "concat.fpem", "vanilla.fpem", "auth/report.json", "auth/tar.csv"]
        .iter()
        .map(|f| Ok((f.to_string(), std::fs::read(dir.join(f)).map_err(|e| e.to_string())?)))
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline_once(&tmp.path().join("a"))?;
    let b = pipeline_once(&tmp.path().join("b"))?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        check(x == y, format!("{name} differs between runs"))?;
    }
    let report = String::from_utf8_lossy(&a[4].1).into_owned();
    let rows = ["\"concat\"", "\"vanilla\"", "\"fused(0.7,0.3)\""];
    check(rows.iter().all(|r| report.contains(r)), "report lacks the three TAR rows")?;
    Ok("generate -> train -> embed -> authenticate twice with --threads 1: checkpoints, stores and reports byte-identical".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("token math", token_math),
        ("minutiae-map invertibility", map_invertibility),
        ("gradient correctness", gradient_correctness),
        ("architectural invariants", architectural_invariants),
        ("metric oracles", metric_oracles),
        ("gallery arithmetic", gallery_arithmetic),
        ("directional replication", directional_replication),
        ("matcher throughput", matcher_throughput),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| label.contains(x.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {label}: PASS ({detail}) [{:.1?}]", t0.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {label}: FAIL ({detail}) [{:.1?}]", t0.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
