//! Activation buffer: harvests residual-stream rows from random corpus
//! windows, shuffles them, and serves batches without replacement.

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenCorpus, TokenId};
use crate::error::{Error, Result};
use crate::lm::{resid_pre_at, sample_window, LmParams, Region, TapLocation};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub buffer_rows: usize,
    pub batch_rows: usize,
    /// Window length for activation harvesting.
    pub ctx_len: usize,
    /// Refill when the unconsumed fraction drops below this.
    pub refill_threshold: f64,
    /// Also store position-0 (pure BOS) rows, tagged with the BOS id.
    pub include_bos: bool,
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_rows == 0 || self.batch_rows > self.buffer_rows {
            return Err(Error::Config(format!(
                "batch_rows {} outside 1..={}",
                self.batch_rows, self.buffer_rows
            )));
        }
        if !(0.0..1.0).contains(&self.refill_threshold) || self.refill_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "refill_threshold {} outside (0,1)",
                self.refill_threshold
            )));
        }
        if self.ctx_len < 2 {
            return Err(Error::Config("buffer ctx_len must be at least 2".into()));
        }
        Ok(())
    }
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            buffer_rows: 131_072,
            batch_rows: 4096,
            ctx_len: 64,
            refill_threshold: 0.5,
            include_bos: false,
        }
    }
}

/// Shuffled pool of (activation row, token id) pairs with a consumption
/// cursor. Every row is consumed at most once per fill.
#[derive(Debug, Clone)]
pub struct ActivationBuffer {
    d_model: usize,
    data: Vec<f32>,
    tokens: Vec<TokenId>,
    cursor: usize,
}

impl ActivationBuffer {
    pub fn remaining(&self) -> usize {
        self.tokens.len() - self.cursor
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn shuffle(&mut self, rng: &mut Rng) {
        let d = self.d_model;
        let n = self.tokens.len();
        for i in (1..n).rev() {
            let j = rng.usize_below(i + 1);
            if i != j {
                self.tokens.swap(i, j);
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                let (a, b) = self.data.split_at_mut(hi * d);
                a[lo * d..(lo + 1) * d].swap_with_slice(&mut b[..d]);
            }
        }
    }

    /// Append rows from freshly sampled windows until `target` rows total.
    fn generate_into(
        &mut self,
        lm: &LmParams<f32>,
        corpus: &TokenCorpus,
        p: TapLocation,
        cfg: &BufferConfig,
        region: Region,
        target: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        let d = self.d_model;
        while self.tokens.len() < target {
            let window = sample_window(corpus, cfg.ctx_len, region, rng)?;
            let taps = resid_pre_at(lm, &window.tokens, p)?;
            let start = if cfg.include_bos { 0 } else { 1 };
            for i in start..window.tokens.len() {
                if self.tokens.len() >= target {
                    break;
                }
                self.data.extend_from_slice(taps.row(i));
                self.tokens.push(window.tokens[i]);
            }
            debug_assert_eq!(self.data.len(), self.tokens.len() * d);
        }
        Ok(())
    }

    /// Serve the next batch, refilling and reshuffling first if the
    /// unconsumed remainder fell below the threshold.
    #[allow(clippy::too_many_arguments)]
    pub fn next_batch(
        &mut self,
        lm: &LmParams<f32>,
        corpus: &TokenCorpus,
        p: TapLocation,
        cfg: &BufferConfig,
        region: Region,
        rng: &mut Rng,
    ) -> Result<(Matrix<f32>, Vec<TokenId>)> {
        let threshold = (cfg.refill_threshold * cfg.buffer_rows as f64) as usize;
        if self.remaining() < threshold.max(cfg.batch_rows) {
            // Compact the unconsumed remainder, top up with fresh rows, reshuffle.
            let d = self.d_model;
            self.data.copy_within(self.cursor * d.., 0);
            self.data.truncate(self.remaining() * d);
            self.tokens.drain(..self.cursor);
            self.cursor = 0;
            self.generate_into(lm, corpus, p, cfg, region, cfg.buffer_rows, rng)?;
            self.shuffle(rng);
        }
        let d = self.d_model;
        let n = cfg.batch_rows;
        let start = self.cursor;
        let acts = Matrix::from_vec(n, d, self.data[start * d..(start + n) * d].to_vec())?;
        let toks = self.tokens[start..start + n].to_vec();
        self.cursor += n;
        Ok((acts, toks))
    }

    /// Read-only view of all rows (used by eval-set construction).
    pub fn all_rows(&self) -> Result<(Matrix<f32>, &[TokenId])> {
        let m = Matrix::from_vec(self.tokens.len(), self.d_model, self.data.clone())?;
        Ok((m, &self.tokens))
    }
}

/// Fill a fresh buffer to `cfg.buffer_rows` and shuffle it.
pub fn fill_buffer(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    p: TapLocation,
    cfg: &BufferConfig,
    region: Region,
    rng: &mut Rng,
) -> Result<ActivationBuffer> {
    cfg.validate()?;
    p.validate(&lm.config)?;
    if lm.config.ctx_len < cfg.ctx_len {
        return Err(Error::Config(format!(
            "buffer ctx_len {} exceeds model ctx_len {}",
            cfg.ctx_len, lm.config.ctx_len
        )));
    }
    let mut buf = ActivationBuffer {
        d_model: lm.config.d_model,
        data: Vec::with_capacity(cfg.buffer_rows * lm.config.d_model),
        tokens: Vec::with_capacity(cfg.buffer_rows),
        cursor: 0,
    };
    buf.generate_into(lm, corpus, p, cfg, region, cfg.buffer_rows, rng)?;
    buf.shuffle(rng);
    Ok(buf)
}

/// Harvest a fixed number of held-out evaluation rows (no shuffling needed
/// beyond the buffer's own).
pub fn eval_rows(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    p: TapLocation,
    ctx_len: usize,
    rows: usize,
    rng: &mut Rng,
) -> Result<(Matrix<f32>, Vec<TokenId>)> {
    let cfg = BufferConfig {
        buffer_rows: rows,
        batch_rows: rows.min(1).max(1),
        ctx_len,
        refill_threshold: 0.5,
        include_bos: false,
    };
    let buf = fill_buffer(lm, corpus, p, &cfg, Region::Heldout, rng)?;
    let (m, toks) = buf.all_rows()?;
    Ok((m, toks.to_vec()))
}
