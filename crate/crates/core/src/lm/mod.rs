//! A small trainable decoder-only transformer (pre-norm, learned positional
//! embeddings, causal masking) exposing the residual stream entering each
//! layer as tap locations, plus patched and truncated forward passes.

mod backward;
mod forward;
mod params;
mod train;

pub use backward::{backward, LmGrads};
pub use forward::{
    ce_from_logits, lm_forward, logits_dgrad, patched_forward, resid_pre_at, truncated_activation,
    unigram_activation, unigram_table, ForwardCache,
};
pub use params::{LayerParams, LmConfig, LmParams, TapLocation, load_lm, save_lm};
pub use train::{lm_train, unigram_entropy, LmTrainConfig, LmTrainLog};

use crate::corpus::{TokenCorpus, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// A training/eval window: BOS-prepended inputs and the next-token targets.
#[derive(Debug, Clone)]
pub struct Window {
    /// `tokens[0] == BOS`, length `ctx_len`.
    pub tokens: Vec<TokenId>,
    /// `targets[i]` is the token position `i` must predict; same length.
    pub targets: Vec<TokenId>,
}

/// Region of the corpus to sample windows from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// The leading training fraction of the corpus.
    Train,
    /// The held-out tail, never sampled during training.
    Heldout,
}

/// Sample one window of `ctx_len` positions from the given region.
///
/// The raw corpus slice `w` of `ctx_len` tokens becomes inputs
/// `[BOS, w[0..ctx_len-1]]` with targets `w[0..ctx_len]`.
pub fn sample_window(
    corpus: &TokenCorpus,
    ctx_len: usize,
    region: Region,
    rng: &mut Rng,
) -> Result<Window> {
    let (lo, hi) = match region {
        Region::Train => (0usize, corpus.train_len()),
        Region::Heldout => (corpus.train_len(), corpus.len()),
    };
    if hi.saturating_sub(lo) < ctx_len {
        return Err(Error::Range(format!(
            "corpus region of {} tokens cannot fit a window of {ctx_len}",
            hi - lo
        )));
    }
    let start = lo + rng.usize_below(hi - lo - ctx_len + 1);
    let w = &corpus.ids[start..start + ctx_len];
    let mut tokens = Vec::with_capacity(ctx_len);
    tokens.push(Vocab::BOS);
    tokens.extend_from_slice(&w[..ctx_len - 1]);
    Ok(Window {
        tokens,
        targets: w.to_vec(),
    })
}
