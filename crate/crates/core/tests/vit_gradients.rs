mod common;

use common::{rel_err, random_params, random_tokens};
use fpvit::vit::{forward, input_gradient, loss_and_backward, ModelConfig, SaliencyTarget};
use fpvit::vit::model::cross_entropy;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

#[test]
fn parameter_gradients_match_central_differences() {
    let cfg = ModelConfig::desk(2, 10).with_seed(1);
    let params = random_params(&cfg, 5);
    let tokens = random_tokens(&cfg, 9);
    let label = 3;
    let loss = |p: &fpvit::vit::ModelParams<f64>| {
        let out = forward(p, &tokens).unwrap();
        cross_entropy(&out.logits, label).0
    };
    let (_, grads) = loss_and_backward(&params, &tokens, label).unwrap();
    let names = fpvit::vit::ModelParams::<f64>::tensor_names(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = (0.0f64, String::new());
    for (t, name) in names.iter().enumerate() {
        let len = grads.tensors()[t].len();
        let idx: Vec<usize> = if len <= 200 { (0..len).collect() } else { sample(&mut rng, len, 200).into_vec() };
        for i in idx {
            let mut p = params.clone();
            p.tensors_mut()[t].data[i] += H;
            let up = loss(&p);
            p.tensors_mut()[t].data[i] -= 2.0 * H;
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.tensors()[t].data[i];
            let e = rel_err(analytic, numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e}"));
            }
        }
    }
    println!("worst relative error {:e} at {}", worst.0, worst.1);
    assert!(worst.0 <= 1e-5, "{}", worst.1);
}

#[test]
fn input_gradients_match_central_differences() {
    let cfg = ModelConfig::desk(2, 6).with_seed(2);
    let params = random_params(&cfg, 6);
    let tokens = random_tokens(&cfg, 10);
    for target in [SaliencyTarget::EmbeddingNorm, SaliencyTarget::ClassLogit(4)] {
        let grad = input_gradient(&params, &tokens, target).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for i in sample(&mut rng, tokens.data().len(), 200).into_vec() {
            let mut t = tokens.clone();
            t.data_mut()[i] += H;
            let up = forward(&params, &t).unwrap().target_value(target);
            t.data_mut()[i] -= 2.0 * H;
            let down = forward(&params, &t).unwrap().target_value(target);
            let n = (up - down) / (2.0 * H);
            if rel_err(grad[i], n) > worst {
                println!("  {i}: analytic {:e} numeric {n:e}", grad[i]);
            }
            worst = worst.max(rel_err(grad[i], n));
        }
        println!("{target:?}: worst relative error {worst:e}");
        assert!(worst <= 1e-5);
    }
}
