//! Central finite-difference verification of the SAE gradients, in f64, for
//! every variant: vanilla and top-k, plain and tokenized.

use tsae_core::corpus::TokenId;
use tsae_core::numerics::{Matrix, Rng};
use tsae_core::sae::{backward_batch, SaeConfig, SaeParams, SaeVariant};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix<f64> {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.normal_f64() * scale;
    }
    m
}

fn setup(variant: SaeVariant, tokenized: bool, seed: u64) -> (SaeParams<f64>, Matrix<f64>, Vec<TokenId>) {
    let cfg = SaeConfig {
        d_model: 8,
        expansion: 2,
        variant,
        k: 3,
        lambda: if variant == SaeVariant::Vanilla { 0.05 } else { 0.0 },
        tokenized,
        alpha: 0.5,
        lookup_lr_multiplier: 100.0,
        lookup_truncation: None,
    };
    let mut rng = Rng::seed_from(seed);
    let params = SaeParams {
        w_enc: random_matrix(8, 16, 0.6, &mut rng),
        b_enc: random_matrix(1, 16, 0.3, &mut rng),
        w_dec: random_matrix(16, 8, 0.6, &mut rng),
        b_dec: random_matrix(1, 8, 0.3, &mut rng),
        w_lookup: tokenized.then(|| random_matrix(11, 8, 0.4, &mut rng)),
        config: cfg,
    };
    let acts = random_matrix(4, 8, 1.0, &mut rng);
    let tokens = vec![2u32, 7, 2, 10];
    (params, acts, tokens)
}

/// Batch loss: mean over rows of the per-row total loss.
fn batch_loss(params: &SaeParams<f64>, acts: &Matrix<f64>, tokens: &[TokenId]) -> f64 {
    let mut total = 0.0;
    for r in 0..acts.rows() {
        let t = params.config.tokenized.then(|| tokens[r]);
        total += params.loss(acts.row(r), t).unwrap().0;
    }
    total / acts.rows() as f64
}

fn check_variant(variant: SaeVariant, tokenized: bool, seed: u64) {
    let (mut params, acts, tokens) = setup(variant, tokenized, seed);
    let (grads, _) = backward_batch(&params, &acts, &tokens).unwrap();

    let h = 1e-6;
    let mut checked = 0usize;

    // (name, analytic grads, accessor for the live parameter)
    let slots: Vec<(&str, Vec<f64>)> = {
        let mut v = vec![
            ("w_enc", grads.w_enc.data().to_vec()),
            ("b_enc", grads.b_enc.data().to_vec()),
            ("w_dec", grads.w_dec.data().to_vec()),
            ("b_dec", grads.b_dec.data().to_vec()),
        ];
        if let Some(gl) = &grads.w_lookup {
            v.push(("w_lookup", gl.data().to_vec()));
        }
        v
    };

    for (name, analytic) in &slots {
        for idx in 0..analytic.len() {
            let read = |p: &mut SaeParams<f64>, delta: f64| -> f64 {
                {
                    let slot: &mut Matrix<f64> = match *name {
                        "w_enc" => &mut p.w_enc,
                        "b_enc" => &mut p.b_enc,
                        "w_dec" => &mut p.w_dec,
                        "b_dec" => &mut p.b_dec,
                        "w_lookup" => p.w_lookup.as_mut().unwrap(),
                        _ => unreachable!(),
                    };
                    slot.data_mut()[idx] += delta;
                }
                batch_loss(p, &acts, &tokens)
            };
            let up = read(&mut params, h);
            let down = read(&mut params, -2.0 * h);
            read(&mut params, h); // restore
            let numeric = (up - down) / (2.0 * h);
            let ana = analytic[idx];
            let err = rel_err(numeric, ana);
            assert!(
                err < 1e-3,
                "{variant:?} tokenized={tokenized} {name}[{idx}]: analytic {ana:e} vs numeric {numeric:e} (rel {err:e})"
            );
            checked += 1;
        }
    }
    assert!(checked >= 280, "only {checked} entries checked");
}

#[test]
fn vanilla_plain_gradients_match_finite_differences() {
    check_variant(SaeVariant::Vanilla, false, 101);
}

#[test]
fn vanilla_tokenized_gradients_match_finite_differences() {
    check_variant(SaeVariant::Vanilla, true, 102);
}

#[test]
fn topk_plain_gradients_match_finite_differences() {
    check_variant(SaeVariant::TopK, false, 103);
}

#[test]
fn topk_tokenized_gradients_match_finite_differences() {
    check_variant(SaeVariant::TopK, true, 104);
}
