//! Quick kernel timing: one LM train step and one SAE backward batch.

use std::time::Instant;

use tsae_core::corpus::{gen_corpus, CorpusConfig};
use tsae_core::lm::{lm_train, LmConfig, LmParams, LmTrainConfig};
use tsae_core::numerics::{matmul, Matrix, Rng};
use tsae_core::sae::{backward_batch, init_sae, SaeConfig, SaeVariant};

fn main() {
    let mut rng = Rng::seed_from(1);
    // Raw matmul: 1024x64 @ 64x1024.
    let mut a = Matrix::<f32>::zeros(1024, 64);
    let mut b = Matrix::<f32>::zeros(64, 1024);
    for v in a.data_mut() {
        *v = rng.normal_f64() as f32;
    }
    for v in b.data_mut() {
        *v = rng.normal_f64() as f32;
    }
    let t = Instant::now();
    let iters = 50;
    for _ in 0..iters {
        let c = matmul(&a, &b).unwrap();
        std::hint::black_box(c);
    }
    let el = t.elapsed().as_secs_f64();
    let gmac = (1024.0 * 64.0 * 1024.0 * iters as f64) / el / 1e9;
    println!("matmul 1024x64x1024: {:.2} GMAC/s", gmac);

    // LM step timing.
    let corpus = gen_corpus(&CorpusConfig { length: 200_000, ..CorpusConfig::default() }).unwrap();
    let mut lm = LmParams::init(LmConfig::default(), &mut Rng::seed_from(7)).unwrap();
    let t = Instant::now();
    lm_train(
        &mut lm,
        &corpus,
        &LmTrainConfig { steps: 20, batch: 8, lr: 1e-3, log_every: 100 },
        &mut Rng::seed_from(3),
    )
    .unwrap();
    println!("lm step: {:.1} ms", t.elapsed().as_millis() as f64 / 20.0);

    // SAE backward batch timing.
    let cfg = SaeConfig {
        d_model: 64,
        expansion: 16,
        variant: SaeVariant::TopK,
        k: 8,
        lambda: 0.0,
        tokenized: false,
        alpha: 0.5,
        lookup_lr_multiplier: 100.0,
        lookup_truncation: None,
    };
    let sae = init_sae::<f32>(&cfg, None, None, &mut Rng::seed_from(2)).unwrap();
    let mut acts = Matrix::<f32>::zeros(1024, 64);
    for v in acts.data_mut() {
        *v = rng.normal_f64() as f32 * 5.0;
    }
    let toks = vec![1u32; 1024];
    let t = Instant::now();
    for _ in 0..10 {
        let g = backward_batch(&sae, &acts, &toks).unwrap();
        std::hint::black_box(g);
    }
    println!("sae topk backward 1024 rows: {:.1} ms", t.elapsed().as_millis() as f64 / 10.0);
}
