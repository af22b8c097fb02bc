//! The SAE training loop: Adam on all parameters with one schedule, the
//! lookup table in its own Adam group at `lookup_lr_multiplier × lr0`, both
//! cosine-annealed (so the ratio of the two rates is constant).

use std::io::Write;

use crate::corpus::{count_ngrams, TokenCorpus};
use crate::error::{Error, Result};
use crate::lm::{unigram_table, LmParams, Region, TapLocation};
use crate::numerics::{lr_at, AdamState, Matrix, Rng};
use crate::sae::{estimate_alpha, init_sae, SaeConfig, SaeParams};

use super::buffer::{fill_buffer, BufferConfig};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SaeTrainConfig {
    pub steps: usize,
    /// Base learning rate; the lookup group runs at
    /// `lookup_lr_multiplier × lr0` (0.01 with the defaults).
    pub lr0: f64,
    pub log_every: usize,
    /// Diagnostic harness: features whose gradients are zeroed every step,
    /// keeping them exactly at their initialization (planted-dead
    /// experiments).
    #[serde(default)]
    pub frozen_features: Vec<usize>,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        SaeTrainConfig {
            steps: 3000,
            lr0: 1e-4,
            log_every: 25,
            frozen_features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub lr: f64,
    pub nmse: f64,
    pub l0: f64,
    /// Lookup balance estimate; `None` for non-tokenized SAEs.
    pub alpha_hat: Option<f64>,
    pub mse_part: f64,
    pub sparsity_part: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    /// CSV export with the documented header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,lr,nmse,l0,alpha_hat,mse_part,sparsity_part")?;
        for r in &self.rows {
            let alpha = r.alpha_hat.map_or(String::new(), |a| a.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.step, r.lr, r.nmse, r.l0, alpha, r.mse_part, r.sparsity_part
            )?;
        }
        Ok(())
    }

    pub fn final_nmse(&self) -> Option<f64> {
        self.rows.last().map(|r| r.nmse)
    }
}

/// Train an SAE against tap `p` of the LM on the corpus's training region.
///
/// Initialization, buffer filling, and batch order are fully determined by
/// `rng`; identical seeds give bit-identical parameters.
pub fn train_sae(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    sae_cfg: &SaeConfig,
    buf_cfg: &BufferConfig,
    train_cfg: &SaeTrainConfig,
    p: TapLocation,
    rng: &mut Rng,
) -> Result<(SaeParams<f32>, TrainLog)> {
    sae_cfg.validate()?;
    buf_cfg.validate()?;
    if sae_cfg.d_model != lm.config.d_model {
        return Err(Error::Config(format!(
            "SAE d_model {} does not match LM d_model {}",
            sae_cfg.d_model, lm.config.d_model
        )));
    }

    // Balanced init needs each token's context-free activation.
    let unigrams = sae_cfg
        .tokenized
        .then(|| unigram_table(lm, p))
        .transpose()?;
    let token_counts = if sae_cfg.lookup_truncation.is_some() {
        Some(count_ngrams(corpus, 1)?.token_counts(corpus.vocab)?)
    } else {
        None
    };
    let mut params = init_sae(sae_cfg, unigrams.as_ref(), token_counts.as_deref(), rng)?;
    // Rows excluded by lookup truncation stay structurally zero.
    let lookup_frozen_rows: Vec<usize> = match (&params.w_lookup, sae_cfg.lookup_truncation) {
        (Some(_), Some(m)) => {
            let keep = crate::sae::top_m_mask(sae_cfg, token_counts.as_deref(), corpus.vocab.size, m)?;
            (0..corpus.vocab.size).filter(|&t| !keep[t]).collect()
        }
        _ => Vec::new(),
    };

    let mut st_w_enc = AdamState::for_param(&params.w_enc);
    let mut st_b_enc = AdamState::for_param(&params.b_enc);
    let mut st_w_dec = AdamState::for_param(&params.w_dec);
    let mut st_b_dec = AdamState::for_param(&params.b_dec);
    let mut st_lookup = params.w_lookup.as_ref().map(AdamState::for_param);

    let mut buffer = fill_buffer(lm, corpus, p, buf_cfg, Region::Train, rng)?;
    let mut log = TrainLog::default();

    for &j in &train_cfg.frozen_features {
        if j >= params.n_features() {
            return Err(Error::Config(format!("frozen feature {j} out of range")));
        }
    }

    for step in 0..train_cfg.steps {
        let (acts, toks) = buffer.next_batch(lm, corpus, p, buf_cfg, Region::Train, rng)?;
        let (mut grads, stats) = crate::sae::backward_batch(&params, &acts, &toks)?;
        for &j in &train_cfg.frozen_features {
            grads.w_dec.row_mut(j).iter_mut().for_each(|v| *v = 0.0);
            grads.b_enc.row_mut(0)[j] = 0.0;
            for i in 0..sae_cfg.d_model {
                grads.w_enc.set(i, j, 0.0);
            }
        }
        if !stats.mse.is_finite() {
            return Err(Error::Training {
                step,
                detail: format!("mse became {}", stats.mse),
            });
        }

        let lr = lr_at(step, train_cfg.steps, train_cfg.lr0)?;
        if step % train_cfg.log_every == 0 || step + 1 == train_cfg.steps {
            let alpha_hat = match (&params.w_lookup, &unigrams) {
                (Some(lookup), Some(orig)) => Some(estimate_alpha(lookup, orig)?),
                _ => None,
            };
            log.rows.push(TrainLogRow {
                step,
                lr,
                nmse: stats.nmse,
                l0: stats.l0,
                alpha_hat,
                mse_part: stats.mse,
                sparsity_part: stats.sparsity,
            });
        }

        let lr32 = lr as f32;
        st_w_enc.update(&mut params.w_enc, &grads.w_enc, lr32)?;
        st_b_enc.update(&mut params.b_enc, &grads.b_enc, lr32)?;
        st_w_dec.update(&mut params.w_dec, &grads.w_dec, lr32)?;
        st_b_dec.update(&mut params.b_dec, &grads.b_dec, lr32)?;
        if let (Some(lookup), Some(state), Some(glookup)) = (
            params.w_lookup.as_mut(),
            st_lookup.as_mut(),
            grads.w_lookup.as_mut(),
        ) {
            for &row in &lookup_frozen_rows {
                glookup.row_mut(row).iter_mut().for_each(|v| *v = 0.0);
            }
            let lookup_lr = (lr * sae_cfg.lookup_lr_multiplier) as f32;
            state.update(lookup, glookup, lookup_lr)?;
            for &row in &lookup_frozen_rows {
                debug_assert!(lookup.row(row).iter().all(|&v| v == 0.0));
            }
        }
        if !params.w_enc.is_all_finite() || !params.w_dec.is_all_finite() {
            return Err(Error::Training {
                step,
                detail: "parameters became non-finite".into(),
            });
        }
    }
    Ok((params, log))
}

/// Build an eval activation matrix from the held-out region (thin wrapper
/// over the buffer machinery, re-exported here for trainer callers).
pub fn heldout_rows(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    p: TapLocation,
    ctx_len: usize,
    rows: usize,
    rng: &mut Rng,
) -> Result<(Matrix<f32>, Vec<crate::corpus::TokenId>)> {
    super::buffer::eval_rows(lm, corpus, p, ctx_len, rows, rng)
}
