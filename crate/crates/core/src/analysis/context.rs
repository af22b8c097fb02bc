//! Context-locality analyses: how well truncated contexts approximate full
//! activations, and how close final-token unigram residuals sit.

use std::io::Write;

use serde_json::json;

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::lm::{resid_pre_at, truncated_activation, LmParams, TapLocation};
use crate::numerics::Matrix;

use super::cosine_f32;

#[derive(Debug, Clone)]
pub struct PatchingCurve {
    /// (n, mean cosine between width-n truncated and full activations).
    pub points: Vec<(usize, f64)>,
    pub n_positions: usize,
}

/// Mean cosine between `truncated_activation(n)` and the full activation,
/// over all prompts and non-BOS positions, for n in 1..=n_max.
pub fn patching_curve(
    lm: &LmParams<f32>,
    prompts: &[Vec<TokenId>],
    p: TapLocation,
    n_max: usize,
) -> Result<PatchingCurve> {
    if prompts.is_empty() || n_max == 0 {
        return Err(Error::Argument("patching_curve: empty input".into()));
    }
    let mut sums = vec![0.0f64; n_max + 1];
    let mut count = 0usize;
    for prompt in prompts {
        let taps = resid_pre_at(lm, prompt, p)?;
        for i in 1..prompt.len() {
            let full = taps.row(i);
            for n in 1..=n_max {
                let tr = truncated_activation(lm, prompt, i, n, p)?;
                sums[n] += cosine_f32(&tr, full);
            }
            count += 1;
        }
    }
    Ok(PatchingCurve {
        points: (1..=n_max).map(|n| (n, sums[n] / count as f64)).collect(),
        n_positions: count,
    })
}

impl PatchingCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,mean_cosine")?;
        for (n, c) in &self.points {
            writeln!(w, "{n},{c}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "n_positions": self.n_positions,
            "points": self.points,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FinalTokenReport {
    pub mean_cos_nearest: f64,
    pub mean_cos_final: f64,
    pub mean_cos_first: f64,
    /// Fraction of prompts whose final-token unigram is the single nearest.
    pub pct_final_nearest: f64,
    pub n_prompts: usize,
    /// Per prompt: (cos nearest, cos final-token, cos first-token, final is nearest).
    pub rows: Vec<(f64, f64, f64, bool)>,
}

/// Compare each prompt's last-row activation to the unigram activation rows:
/// the nearest unigram, the prompt's own final token, and (as a control) the
/// prompt's first token.
pub fn final_token_closeness(
    lm: &LmParams<f32>,
    prompts: &[Vec<TokenId>],
    p: TapLocation,
    unigrams: &Matrix<f32>,
) -> Result<FinalTokenReport> {
    if prompts.is_empty() {
        return Err(Error::Argument("final_token_closeness: no prompts".into()));
    }
    let mut rows = Vec::with_capacity(prompts.len());
    let (mut s_near, mut s_final, mut s_first) = (0.0, 0.0, 0.0);
    let mut n_final_nearest = 0usize;
    for prompt in prompts {
        if prompt.len() < 2 {
            return Err(Error::Argument(
                "final_token_closeness needs prompts of length >= 2".into(),
            ));
        }
        let taps = resid_pre_at(lm, prompt, p)?;
        let act = taps.row(taps.rows() - 1);
        let final_tok = *prompt.last().expect("non-empty") as usize;
        let first_tok = prompt[1] as usize;
        let mut best = f64::NEG_INFINITY;
        let mut best_tok = 0usize;
        for t in 0..unigrams.rows() {
            let c = cosine_f32(act, unigrams.row(t));
            if c > best {
                best = c;
                best_tok = t;
            }
        }
        let cos_final = cosine_f32(act, unigrams.row(final_tok));
        let cos_first = cosine_f32(act, unigrams.row(first_tok));
        let final_nearest = best_tok == final_tok;
        if final_nearest {
            n_final_nearest += 1;
        }
        s_near += best;
        s_final += cos_final;
        s_first += cos_first;
        rows.push((best, cos_final, cos_first, final_nearest));
    }
    let n = prompts.len() as f64;
    Ok(FinalTokenReport {
        mean_cos_nearest: s_near / n,
        mean_cos_final: s_final / n,
        mean_cos_first: s_first / n,
        pct_final_nearest: n_final_nearest as f64 / n,
        n_prompts: prompts.len(),
        rows,
    })
}

impl FinalTokenReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "prompt,cos_nearest,cos_final_token,cos_first_token,final_is_nearest")?;
        for (i, (a, b, c, d)) in self.rows.iter().enumerate() {
            writeln!(w, "{i},{a},{b},{c},{d}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "n_prompts": self.n_prompts,
            "mean_cos_nearest": self.mean_cos_nearest,
            "mean_cos_final": self.mean_cos_final,
            "mean_cos_first": self.mean_cos_first,
            "pct_final_nearest": self.pct_final_nearest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{unigram_table, LmConfig};
    use crate::numerics::Rng;

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

    #[test]
    fn full_width_positions_contribute_exactly_one() {
        let lm = lm();
        let prompts = vec![vec![0u32, 3, 5, 2]];
        let curve = patching_curve(&lm, &prompts, TapLocation(1), 5).unwrap();
        // n=3 covers every position of a 4-token prompt; wider n likewise.
        let at = |n: usize| curve.points.iter().find(|(m, _)| *m == n).unwrap().1;
        assert!((at(3) - 1.0).abs() < 1e-7);
        assert!((at(4) - 1.0).abs() < 1e-7);
        assert!((at(5) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn pair_prompt_final_token_is_exactly_nearest() {
        let lm = lm();
        let unigrams = unigram_table(&lm, TapLocation(1)).unwrap();
        let prompts = vec![vec![0u32, 4], vec![0u32, 9]];
        let report =
            final_token_closeness(&lm, &prompts, TapLocation(1), &unigrams).unwrap();
        assert!((report.mean_cos_final - 1.0).abs() < 1e-6);
        assert_eq!(report.pct_final_nearest, 1.0);
    }

    #[test]
    fn short_prompts_are_rejected() {
        let lm = lm();
        let unigrams = unigram_table(&lm, TapLocation(1)).unwrap();
        let prompts = vec![vec![0u32]];
        assert!(final_token_closeness(&lm, &prompts, TapLocation(1), &unigrams).is_err());
    }
}
