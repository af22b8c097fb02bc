//! Per-feature scans: unigram activation sets, dead features, suffix-n-gram
//! complexity, activation/cosine coupling, and encoder/unigram similarity.

use std::io::Write;

use serde_json::json;

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::lm::{truncated_activation, unigram_table, LmParams, TapLocation};
use crate::numerics::Matrix;
use crate::sae::SaeParams;
use crate::stats::pearson;

use super::cosine_f32;

// --- unigram activation scan --------------------------------------------------

#[derive(Debug, Clone)]
pub struct UnigramScanFeature {
    pub feature: usize,
    pub live: bool,
    pub max_unigram_act: f64,
    /// Tokens whose context-free activation pushes this feature above the
    /// threshold.
    pub strong_unigrams: Vec<TokenId>,
    pub max_eval_act: f64,
    pub top_eval_token: TokenId,
    pub top_token_is_strong: bool,
}

#[derive(Debug, Clone)]
pub struct UnigramScanReport {
    pub threshold: f64,
    pub live_floor: f64,
    pub features: Vec<UnigramScanFeature>,
    pub n_live: usize,
    /// Fraction of live features strongly activated by >= 1 unigram.
    pub frac_live_strong_unigram: f64,
    /// Fraction of live features whose top eval row's token is in their
    /// strong-unigram set.
    pub frac_live_top_token_strong: f64,
}

/// Encode every token's context-free activation and record which unigrams
/// strongly activate each feature; eval rows decide liveness and the
/// top-activating input.
pub fn unigram_activation_scan(
    sae: &SaeParams<f32>,
    lm: &LmParams<f32>,
    p: TapLocation,
    threshold: f64,
    live_floor: f64,
    eval_acts: &Matrix<f32>,
    eval_tokens: &[TokenId],
) -> Result<UnigramScanReport> {
    if threshold <= 0.0 {
        return Err(Error::Argument("threshold must be > 0".into()));
    }
    if eval_acts.rows() != eval_tokens.len() || eval_acts.rows() == 0 {
        return Err(Error::shape(
            "unigram_activation_scan",
            eval_acts.rows(),
            eval_tokens.len(),
        ));
    }
    let table = unigram_table(lm, p)?;
    let uni_feats = sae.encode_batch(&table)?; // V × F
    let eval_feats = sae.encode_batch(eval_acts)?; // B × F
    let n_f = sae.n_features();
    let v = table.rows();
    let b = eval_acts.rows();

    let mut features = Vec::with_capacity(n_f);
    let mut n_live = 0usize;
    let mut live_strong = 0usize;
    let mut live_top_match = 0usize;
    for j in 0..n_f {
        let mut strong = Vec::new();
        let mut max_uni = f64::NEG_INFINITY;
        for t in 0..v {
            let a = uni_feats.get(t, j) as f64;
            if a > max_uni {
                max_uni = a;
            }
            if a > threshold {
                strong.push(t as TokenId);
            }
        }
        let mut max_eval = f64::NEG_INFINITY;
        let mut argmax = 0usize;
        for r in 0..b {
            let a = eval_feats.get(r, j) as f64;
            if a > max_eval {
                max_eval = a;
                argmax = r;
            }
        }
        let live = max_eval >= live_floor;
        let top_tok = eval_tokens[argmax];
        let top_match = strong.contains(&top_tok);
        if live {
            n_live += 1;
            if !strong.is_empty() {
                live_strong += 1;
            }
            if top_match {
                live_top_match += 1;
            }
        }
        features.push(UnigramScanFeature {
            feature: j,
            live,
            max_unigram_act: max_uni,
            strong_unigrams: strong,
            max_eval_act: max_eval,
            top_eval_token: top_tok,
            top_token_is_strong: top_match,
        });
    }
    let denom = n_live.max(1) as f64;
    Ok(UnigramScanReport {
        threshold,
        live_floor,
        features,
        n_live,
        frac_live_strong_unigram: live_strong as f64 / denom,
        frac_live_top_token_strong: live_top_match as f64 / denom,
    })
}

impl UnigramScanReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "feature,live,max_unigram_act,n_strong_unigrams,strong_unigrams,max_eval_act,top_eval_token,top_token_is_strong"
        )?;
        for f in &self.features {
            let strong = f
                .strong_unigrams
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                f.feature,
                f.live,
                f.max_unigram_act,
                f.strong_unigrams.len(),
                strong,
                f.max_eval_act,
                f.top_eval_token,
                f.top_token_is_strong
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "threshold": self.threshold,
            "live_floor": self.live_floor,
            "n_features": self.features.len(),
            "n_live": self.n_live,
            "frac_live_strong_unigram": self.frac_live_strong_unigram,
            "frac_live_top_token_strong": self.frac_live_top_token_strong,
        })
    }
}

// --- dead feature scan ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DeadFeatureReport {
    pub act_threshold: f64,
    pub cosine_cut: f64,
    /// Per feature: (max eval activation, enc/dec cosine, empirically dead).
    pub rows: Vec<(f64, f64, bool)>,
    /// Detector = {cosine > cut} scored against {empirically dead}.
    pub precision: f64,
    pub recall: f64,
    pub agreement: f64,
}

/// A feature is empirically dead if its max activation over the eval rows is
/// below `act_threshold`. Under transpose initialization, dead features keep
/// a high encoder/decoder cosine, which this scan scores as a detector.
pub fn dead_feature_scan(
    sae: &SaeParams<f32>,
    eval_acts: &Matrix<f32>,
    act_threshold: f64,
    cosine_cut: f64,
) -> Result<DeadFeatureReport> {
    if eval_acts.rows() == 0 {
        return Err(Error::Argument("dead_feature_scan: empty eval set".into()));
    }
    let feats = sae.encode_batch(eval_acts)?;
    let cosines = sae.enc_dec_cosines();
    let n_f = sae.n_features();
    let mut rows = Vec::with_capacity(n_f);
    let (mut tp, mut fp, mut fn_, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..n_f {
        let mut max_act = f64::NEG_INFINITY;
        for r in 0..feats.rows() {
            let a = feats.get(r, j) as f64;
            if a > max_act {
                max_act = a;
            }
        }
        let dead = max_act < act_threshold;
        let flagged = cosines[j] > cosine_cut;
        match (flagged, dead) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        if flagged == dead {
            agree += 1;
        }
        rows.push((max_act, cosines[j], dead));
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    Ok(DeadFeatureReport {
        act_threshold,
        cosine_cut,
        rows,
        precision,
        recall,
        agreement: agree as f64 / n_f as f64,
    })
}

impl DeadFeatureReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "feature,max_eval_act,enc_dec_cosine,dead")?;
        for (j, (max_act, cos, dead)) in self.rows.iter().enumerate() {
            writeln!(w, "{j},{max_act},{cos},{dead}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        let n_dead = self.rows.iter().filter(|r| r.2).count();
        json!({
            "act_threshold": self.act_threshold,
            "cosine_cut": self.cosine_cut,
            "n_features": self.rows.len(),
            "n_dead": n_dead,
            "precision": self.precision,
            "recall": self.recall,
            "agreement": self.agreement,
        })
    }
}

// --- suffix n-gram feature complexity -------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSuffix {
    /// Smallest suffix width with a positive activation.
    pub n_positive: usize,
    /// Smallest suffix width reaching 90% of the full-context activation.
    pub n_90: usize,
    /// True when a criterion never fired and its value is the full width.
    pub saturated: bool,
}

/// Grow BOS-prepended suffix n-grams of `prompt` ending at `position` until
/// feature `feature` activates (a) positively and (b) within 90% of its
/// full-context activation.
pub fn min_suffix_ngram(
    sae: &SaeParams<f32>,
    lm: &LmParams<f32>,
    feature: usize,
    prompt: &[TokenId],
    position: usize,
    p: TapLocation,
) -> Result<MinSuffix> {
    if feature >= sae.n_features() {
        return Err(Error::Range(format!("feature {feature} out of range")));
    }
    if position >= prompt.len() || position == 0 {
        return Err(Error::Range(format!(
            "position {position} invalid for prompt of length {}",
            prompt.len()
        )));
    }
    let full_act = {
        let act = truncated_activation(lm, prompt, position, position, p)?;
        sae.encode(&act)?.0[feature] as f64
    };
    let mut n_positive = None;
    let mut n_90 = None;
    for n in 1..=position {
        let act = truncated_activation(lm, prompt, position, n, p)?;
        let f = sae.encode(&act)?.0[feature] as f64;
        if n_positive.is_none() && f > 0.0 {
            n_positive = Some(n);
        }
        if n_90.is_none() && f >= 0.9 * full_act {
            n_90 = Some(n);
        }
        if n_positive.is_some() && n_90.is_some() {
            break;
        }
    }
    let saturated = n_positive.is_none() || n_90.is_none();
    Ok(MinSuffix {
        n_positive: n_positive.unwrap_or(position),
        n_90: n_90.unwrap_or(position),
        saturated,
    })
}

#[derive(Debug, Clone)]
pub struct ComplexityReport {
    pub floor: f64,
    /// (feature, max activation, result) for every qualifying feature.
    pub rows: Vec<(usize, f64, MinSuffix)>,
    /// Histogram over n_positive (index 0 unused).
    pub hist_positive: Vec<usize>,
    pub hist_90: Vec<usize>,
}

/// Find each feature's top-activating (window, position) over the prompts,
/// then measure its minimum suffix n-grams. Only features whose max
/// activation reaches `floor` qualify.
pub fn complexity_scan(
    sae: &SaeParams<f32>,
    lm: &LmParams<f32>,
    p: TapLocation,
    prompts: &[Vec<TokenId>],
    floor: f64,
) -> Result<ComplexityReport> {
    if prompts.is_empty() {
        return Err(Error::Argument("complexity_scan: no prompts".into()));
    }
    let n_f = sae.n_features();
    let mut best: Vec<(f64, usize, usize)> = vec![(f64::NEG_INFINITY, 0, 0); n_f];
    for (wi, prompt) in prompts.iter().enumerate() {
        let taps = crate::lm::resid_pre_at(lm, prompt, p)?;
        for i in 1..prompt.len() {
            let f = sae.encode(taps.row(i))?;
            for (j, &v) in f.0.iter().enumerate() {
                let v = v as f64;
                if v > best[j].0 {
                    best[j] = (v, wi, i);
                }
            }
        }
    }
    let mut rows = Vec::new();
    let max_n = prompts.iter().map(|p| p.len()).max().unwrap_or(2);
    let mut hist_positive = vec![0usize; max_n + 1];
    let mut hist_90 = vec![0usize; max_n + 1];
    for (j, &(act, wi, pos)) in best.iter().enumerate() {
        if act < floor {
            continue;
        }
        let ms = min_suffix_ngram(sae, lm, j, &prompts[wi], pos, p)?;
        hist_positive[ms.n_positive] += 1;
        hist_90[ms.n_90] += 1;
        rows.push((j, act, ms));
    }
    Ok(ComplexityReport {
        floor,
        rows,
        hist_positive,
        hist_90,
    })
}

impl ComplexityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "feature,max_act,n_positive,n_90,saturated")?;
        for (j, act, ms) in &self.rows {
            writeln!(
                w,
                "{j},{act},{},{},{}",
                ms.n_positive, ms.n_90, ms.saturated
            )?;
        }
        Ok(())
    }

    /// Fraction of qualifying features with n_positive > `n`.
    pub fn frac_above(&self, n: usize) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let above = self.rows.iter().filter(|(_, _, ms)| ms.n_positive > n).count();
        above as f64 / self.rows.len() as f64
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "floor": self.floor,
            "n_qualifying": self.rows.len(),
            "hist_n_positive": self.hist_positive,
            "hist_n_90": self.hist_90,
            "frac_n_positive_gt_2": self.frac_above(2),
        })
    }
}

// --- activation vs cosine similarity --------------------------------------------

#[derive(Debug, Clone)]
pub struct ActCosReport {
    /// Pearson correlation between activation and input/encoder cosine over
    /// positively-activating (feature, input) pairs.
    pub r: f64,
    pub n_pairs: usize,
    pub activations: Vec<f64>,
    pub cosines: Vec<f64>,
}

/// Over every (feature, input) pair with positive activation, correlate the
/// activation with cos(input - b_dec, encoder column).
pub fn activation_vs_cossim(
    sae: &SaeParams<f32>,
    eval_acts: &Matrix<f32>,
) -> Result<ActCosReport> {
    if eval_acts.rows() == 0 {
        return Err(Error::Argument("activation_vs_cossim: empty eval set".into()));
    }
    let d = sae.config.d_model;
    let n_f = sae.n_features();
    let feats = sae.encode_batch(eval_acts)?;
    // Encoder columns, materialized row-major for cache-friendly reuse.
    let mut enc_cols = Matrix::<f32>::zeros(n_f, d);
    for i in 0..d {
        for j in 0..n_f {
            enc_cols.set(j, i, sae.w_enc.get(i, j));
        }
    }
    let mut activations = Vec::new();
    let mut cosines = Vec::new();
    let mut centered = vec![0.0f32; d];
    for r in 0..eval_acts.rows() {
        let row = eval_acts.row(r);
        for i in 0..d {
            centered[i] = row[i] - sae.b_dec.get(0, i);
        }
        for j in 0..n_f {
            let act = feats.get(r, j);
            if act > 0.0 {
                activations.push(act as f64);
                cosines.push(cosine_f32(&centered, enc_cols.row(j)));
            }
        }
    }
    if activations.is_empty() {
        return Err(Error::Undefined(
            "activation_vs_cossim: no positive activations".into(),
        ));
    }
    let r = pearson(&activations, &cosines)?;
    Ok(ActCosReport {
        r,
        n_pairs: activations.len(),
        activations,
        cosines,
    })
}

impl ActCosReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "activation,cosine")?;
        for (a, c) in self.activations.iter().zip(&self.cosines) {
            writeln!(w, "{a},{c}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({ "pearson_r": self.r, "n_pairs": self.n_pairs })
    }
}

// --- encoder/unigram similarity ---------------------------------------------------

#[derive(Debug, Clone)]
pub struct EncUnigramReport {
    /// Per feature: max over tokens of cos(encoder column, unigram - b_dec).
    pub max_cosine: Vec<f64>,
}

pub fn encoder_unigram_similarity(
    sae: &SaeParams<f32>,
    unigrams: &Matrix<f32>,
) -> Result<EncUnigramReport> {
    if unigrams.cols() != sae.config.d_model {
        return Err(Error::shape(
            "encoder_unigram_similarity",
            sae.config.d_model,
            unigrams.cols(),
        ));
    }
    let d = sae.config.d_model;
    let n_f = sae.n_features();
    let v = unigrams.rows();
    // Centered unigram rows.
    let mut centered = unigrams.clone();
    for t in 0..v {
        let row = centered.row_mut(t);
        for i in 0..d {
            row[i] -= sae.b_dec.get(0, i);
        }
    }
    let mut max_cosine = vec![f64::NEG_INFINITY; n_f];
    let mut col = vec![0.0f32; d];
    for j in 0..n_f {
        for i in 0..d {
            col[i] = sae.w_enc.get(i, j);
        }
        for t in 0..v {
            let c = cosine_f32(&col, centered.row(t));
            if c > max_cosine[j] {
                max_cosine[j] = c;
            }
        }
    }
    Ok(EncUnigramReport { max_cosine })
}

impl EncUnigramReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "feature,max_unigram_cosine")?;
        for (j, c) in self.max_cosine.iter().enumerate() {
            writeln!(w, "{j},{c}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        let mean = self.max_cosine.iter().sum::<f64>() / self.max_cosine.len().max(1) as f64;
        json!({ "n_features": self.max_cosine.len(), "mean_max_cosine": mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::LmConfig;
    use crate::numerics::Rng;
    use crate::sae::{init_sae, SaeConfig, SaeVariant};

    fn lm() -> LmParams<f32> {
        let cfg = LmConfig {
            vocab_size: 12,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_mlp: 16,
            ctx_len: 8,
        };
        LmParams::init(cfg, &mut Rng::seed_from(7)).unwrap()
    }

    fn sae(seed: u64) -> SaeParams<f32> {
        let cfg = SaeConfig {
            d_model: 8,
            expansion: 2,
            variant: SaeVariant::Vanilla,
            k: 4,
            lambda: 0.0,
            tokenized: false,
            alpha: 0.5,
            lookup_lr_multiplier: 100.0,
            lookup_truncation: None,
        };
        init_sae(&cfg, None, None, &mut Rng::seed_from(seed)).unwrap()
    }

    fn eval_rows(lm: &LmParams<f32>) -> (Matrix<f32>, Vec<TokenId>) {
        let mut acts = Vec::new();
        let mut toks = Vec::new();
        let prompts: [&[u32]; 3] = [&[0, 3, 5, 2], &[0, 1, 4, 4], &[0, 7, 2, 9]];
        for tokens in prompts {
            let taps = crate::lm::resid_pre_at(lm, tokens, TapLocation(1)).unwrap();
            for i in 1..tokens.len() {
                acts.extend_from_slice(taps.row(i));
                toks.push(tokens[i]);
            }
        }
        (
            Matrix::from_vec(toks.len(), 8, acts).unwrap(),
            toks,
        )
    }

    #[test]
    fn infinite_threshold_empties_all_strong_sets() {
        let lm = lm();
        let sae = sae(1);
        let (acts, toks) = eval_rows(&lm);
        let report = unigram_activation_scan(
            &sae,
            &lm,
            TapLocation(1),
            1e30,
            0.0,
            &acts,
            &toks,
        )
        .unwrap();
        assert!(report.features.iter().all(|f| f.strong_unigrams.is_empty()));
        assert_eq!(report.frac_live_strong_unigram, 0.0);
    }

    #[test]
    fn higher_thresholds_give_subset_strong_sets() {
        let lm = lm();
        let sae = sae(2);
        let (acts, toks) = eval_rows(&lm);
        let lo = unigram_activation_scan(&sae, &lm, TapLocation(1), 0.05, 0.0, &acts, &toks)
            .unwrap();
        let hi = unigram_activation_scan(&sae, &lm, TapLocation(1), 0.2, 0.0, &acts, &toks)
            .unwrap();
        for (a, b) in hi.features.iter().zip(&lo.features) {
            for t in &a.strong_unigrams {
                assert!(b.strong_unigrams.contains(t));
            }
        }
    }

    #[test]
    fn orthogonal_encoder_feature_is_dead_and_transpose_init_has_cosine_one() {
        let mut s = sae(3);
        // Feature 0's encoder column zeroed: it can never activate (b_enc=0).
        for i in 0..8 {
            s.w_enc.set(i, 0, 0.0);
        }
        let lm = lm();
        let (acts, _) = eval_rows(&lm);
        let report = dead_feature_scan(&s, &acts, 1e-9, 0.85).unwrap();
        assert!(report.rows[0].2, "feature 0 should be dead");

        // Untouched transpose-initialized features have enc/dec cosine 1.
        let fresh = sae(4);
        for c in fresh.enc_dec_cosines() {
            assert!((c - 1.0).abs() < 1e-5, "cosine {c}");
        }
    }

    #[test]
    fn min_suffix_of_a_final_token_feature_is_one() {
        let lm = lm();
        let mut s = sae(5);
        // Point feature 0's encoder at token 5's unigram direction, centered.
        let uni = crate::lm::unigram_activation(&lm, 5, TapLocation(1)).unwrap();
        let norm: f32 = uni.iter().map(|v| v * v).sum::<f32>().sqrt();
        for i in 0..8 {
            s.w_enc.set(i, 0, uni[i] / norm.max(1e-6));
        }
        s.b_enc.set(0, 0, 0.0);
        let prompt = [0u32, 3, 2, 5];
        let ms = min_suffix_ngram(&s, &lm, 0, &prompt, 3, TapLocation(1)).unwrap();
        assert_eq!(ms.n_positive, 1, "{ms:?}");
        assert!(ms.n_90 >= ms.n_positive);
    }

    #[test]
    fn n90_is_never_below_n_positive() {
        let lm = lm();
        let s = sae(6);
        let prompts: Vec<Vec<u32>> = vec![vec![0, 3, 5, 2, 9, 1], vec![0, 2, 2, 7, 4, 11]];
        let report = complexity_scan(&s, &lm, TapLocation(1), &prompts, 1e-6).unwrap();
        for (_, _, ms) in &report.rows {
            assert!(ms.n_90 >= ms.n_positive);
            assert!(ms.n_positive >= 1);
        }
    }

    #[test]
    fn single_feature_fixed_norm_inputs_give_correlation_one() {
        // With b_enc = b_dec = 0 and unit-norm inputs, the activation of one
        // feature is ||w_enc|| · cos(input, w_enc): Pearson r is exactly 1.
        let mut s = sae(7);
        s.b_dec.fill(0.0);
        s.b_enc.fill(0.0);
        // Keep only feature 0.
        for i in 0..8 {
            for j in 1..16 {
                s.w_enc.set(i, j, 0.0);
            }
        }
        let col: Vec<f32> = (0..8).map(|i| s.w_enc.get(i, 0)).collect();
        let norm: f32 = col.iter().map(|v| v * v).sum::<f32>().sqrt();
        let dir: Vec<f32> = col.iter().map(|v| v / norm).collect();
        // An orthogonal unit direction via Gram-Schmidt on e0.
        let mut orth = vec![0.0f32; 8];
        orth[0] = 1.0;
        let proj: f32 = orth.iter().zip(&dir).map(|(a, b)| a * b).sum();
        for i in 0..8 {
            orth[i] -= proj * dir[i];
        }
        let onorm: f32 = orth.iter().map(|v| v * v).sum::<f32>().sqrt();
        orth.iter_mut().for_each(|v| *v /= onorm);

        let mut acts = Matrix::<f32>::zeros(5, 8);
        for r in 0..5 {
            let theta = 0.2 + 0.25 * r as f32;
            for i in 0..8 {
                acts.set(r, i, theta.cos() * dir[i] + theta.sin() * orth[i]);
            }
        }
        let report = activation_vs_cossim(&s, &acts).unwrap();
        assert_eq!(report.n_pairs, 5);
        assert!((report.r - 1.0).abs() < 1e-6, "r = {}", report.r);
    }

    #[test]
    fn act_cossim_positive_on_random_sae() {
        let lm = lm();
        let s = sae(8);
        let (acts, _) = eval_rows(&lm);
        let report = activation_vs_cossim(&s, &acts).unwrap();
        assert!(report.n_pairs > 0);
        assert!(report.r > 0.0, "r = {}", report.r);
    }

    #[test]
    fn encoder_matching_a_centered_unigram_scores_cosine_one() {
        let lm = lm();
        let mut s = sae(9);
        let unigrams = unigram_table(&lm, TapLocation(1)).unwrap();
        for i in 0..8 {
            s.w_enc.set(i, 3, unigrams.get(6, i) - s.b_dec.get(0, i));
        }
        let report = encoder_unigram_similarity(&s, &unigrams).unwrap();
        assert!((report.max_cosine[3] - 1.0).abs() < 1e-6);
        for &c in &report.max_cosine {
            assert!((-1.0..=1.0 + 1e-9).contains(&c));
        }
    }
}
