//! Scratch probe for desk-scale timing and directional behavior.

use std::time::Instant;

use tsae_core::analysis::{complexity_scan, dead_feature_scan, encoder_unigram_similarity, final_token_closeness, patching_curve};
use tsae_core::corpus::{count_ngrams, gen_corpus, CorpusConfig};
use tsae_core::eval::mse_vs_frequency;
use tsae_core::lm::{lm_train, sample_window, unigram_table, LmConfig, LmParams, LmTrainConfig, Region, TapLocation};
use tsae_core::numerics::Rng;
use tsae_core::sae::{SaeConfig, SaeVariant};
use tsae_core::stats::{pearson, rank_sum_p_less, spearman};
use tsae_core::training::{eval_rows, train_sae, BufferConfig, SaeTrainConfig};

fn main() {
    let t0 = Instant::now();
    let corpus = gen_corpus(&CorpusConfig::default()).unwrap();
    let uni = count_ngrams(&corpus, 1).unwrap();

    let mut lm = LmParams::init(LmConfig::default(), &mut Rng::seed_from(7)).unwrap();
    let t = Instant::now();
    lm_train(
        &mut lm,
        &corpus,
        &LmTrainConfig { steps: 1200, batch: 8, lr: 1e-3, log_every: 400 },
        &mut Rng::seed_from(13),
    )
    .unwrap();
    println!("lm 1200 steps: {:?}", t.elapsed());

    let buf = BufferConfig { buffer_rows: 65536, batch_rows: 1024, ctx_len: 64, refill_threshold: 0.5, include_bos: false };
    let p = TapLocation(2);

    // Memorization margin at longer training.
    for (steps, lambda) in [(2000usize, 1.6e-3f64), (2000, 4e-3)] {
        let cfg = SaeConfig {
            d_model: 64, expansion: 16, variant: SaeVariant::Vanilla, k: 0,
            lambda, tokenized: false, alpha: 0.5, lookup_lr_multiplier: 100.0, lookup_truncation: None,
        };
        let t = Instant::now();
        let (sae, log) = train_sae(&lm, &corpus, &cfg, &buf, &SaeTrainConfig { steps, lr0: 3e-4, log_every: 500, ..Default::default() }, p, &mut Rng::seed_from(42)).unwrap();
        let (rows, _) = mse_vs_frequency(&lm, &sae, &uni, p, 255).unwrap();
        let xs: Vec<f64> = rows.iter().map(|r| r.rel_freq.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.recon_mse).collect();
        println!(
            "vanilla λ={lambda:.1e} {steps} steps: {:?} nmse {:.3} l0 {:.0} memcorr {:.3}",
            t.elapsed(),
            log.rows.last().unwrap().nmse,
            log.rows.last().unwrap().l0,
            pearson(&xs, &ys).unwrap()
        );
    }

    // Analysis directional checks on a trained pair (topk k=8, 400 steps).
    let mk = |tokenized: bool| SaeConfig {
        d_model: 64, expansion: 16, variant: SaeVariant::TopK, k: 8, lambda: 0.0,
        tokenized, alpha: 0.5, lookup_lr_multiplier: 100.0, lookup_truncation: None,
    };
    let tr = SaeTrainConfig { steps: 400, lr0: 1e-4, log_every: 100, ..Default::default() };
    let (plain, _) = train_sae(&lm, &corpus, &mk(false), &buf, &tr, p, &mut Rng::seed_from(42)).unwrap();
    let (tok, _) = train_sae(&lm, &corpus, &mk(true), &buf, &tr, p, &mut Rng::seed_from(42)).unwrap();

    let mut rng = Rng::seed_from(77);
    let prompts: Vec<Vec<u32>> = (0..24)
        .map(|_| sample_window(&corpus, 64, Region::Heldout, &mut rng).unwrap().tokens)
        .collect();

    let t = Instant::now();
    let curve = patching_curve(&lm, &prompts, p, 8).unwrap();
    let ns: Vec<f64> = curve.points.iter().map(|(n, _)| *n as f64).collect();
    let cs: Vec<f64> = curve.points.iter().map(|(_, c)| *c).collect();
    println!("patching ({:?}): {:?} spearman {:.3}", t.elapsed(), curve.points.iter().map(|(n, c)| (*n, (c * 1000.0).round() / 1000.0)).collect::<Vec<_>>(), spearman(&ns, &cs).unwrap());

    let unigrams = unigram_table(&lm, p).unwrap();
    for tap in [1, 2, 3] {
        let u = unigram_table(&lm, TapLocation(tap)).unwrap();
        let r = final_token_closeness(&lm, &prompts, TapLocation(tap), &u).unwrap();
        println!("final-token tap {tap}: near {:.3} final {:.3} first {:.3} pct {:.3}", r.mean_cos_nearest, r.mean_cos_final, r.mean_cos_first, r.pct_final_nearest);
    }

    // Complexity scan cost + direction.
    let t = Instant::now();
    let short_prompts: Vec<Vec<u32>> = prompts.iter().take(12).map(|p| p[..32].to_vec()).collect();
    let cp = complexity_scan(&plain, &lm, p, &short_prompts, 10.0).unwrap();
    let ct = complexity_scan(&tok, &lm, p, &short_prompts, 10.0).unwrap();
    println!(
        "complexity ({:?}): plain n={} frac>2 {:.3}; tok n={} frac>2 {:.3}",
        t.elapsed(),
        cp.rows.len(),
        cp.frac_above(2),
        ct.rows.len(),
        ct.frac_above(2)
    );

    // Enc-unigram distribution shift.
    let ep = encoder_unigram_similarity(&plain, &unigrams).unwrap();
    let et = encoder_unigram_similarity(&tok, &unigrams).unwrap();
    let pv = rank_sum_p_less(&et.max_cosine, &ep.max_cosine).unwrap();
    println!("enc-unigram rank-sum p (tok < plain) = {:.2e}", pv);

    // Dead feature counts on the pair.
    let (eacts, _) = eval_rows(&lm, &corpus, p, 64, 4096, &mut Rng::seed_from(9)).unwrap();
    let dp = dead_feature_scan(&plain, &eacts, 3.0, 0.85).unwrap();
    let dt = dead_feature_scan(&tok, &eacts, 3.0, 0.85).unwrap();
    println!(
        "dead: plain {} dead, detector P {:.2} R {:.2}; tok {} dead, P {:.2} R {:.2}",
        dp.rows.iter().filter(|r| r.2).count(), dp.precision, dp.recall,
        dt.rows.iter().filter(|r| r.2).count(), dt.precision, dt.recall
    );

    println!("total: {:?}", t0.elapsed());
}
