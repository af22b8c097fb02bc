//! Sparse auto-encoders: vanilla and top-k variants, with an optional
//! per-token lookup bias on the decoder ("tokenized" mode).
//!
//! Encoding never depends on the lookup; the lookup vector of the input's own
//! token is added during decoding only.

mod grad;
mod init;
mod io;

pub use grad::{backward_batch, SaeBatchStats, SaeGrads};
pub use init::{estimate_alpha, init_sae};
pub(crate) use init::top_m_mask;
pub use io::{load_sae, save_sae};

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaeVariant {
    Vanilla,
    TopK,
}

impl std::fmt::Display for SaeVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SaeVariant::Vanilla => write!(f, "vanilla"),
            SaeVariant::TopK => write!(f, "topk"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    pub d_model: usize,
    /// `n_features = expansion * d_model`.
    pub expansion: usize,
    pub variant: SaeVariant,
    /// Active features per input (top-k variant only).
    pub k: usize,
    /// Decoder-norm-weighted L1 coefficient (vanilla variant only).
    pub lambda: f64,
    pub tokenized: bool,
    /// Initialization balance between the lookup and the encoder.
    pub alpha: f64,
    /// The lookup parameter group trains at `lookup_lr_multiplier × lr0`.
    pub lookup_lr_multiplier: f64,
    /// If set, only the m most frequent tokens get lookup rows.
    pub lookup_truncation: Option<usize>,
}

impl SaeConfig {
    pub fn n_features(&self) -> usize {
        self.expansion * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.expansion == 0 {
            return Err(Error::Config("degenerate SAE dimensions".into()));
        }
        if self.variant == SaeVariant::TopK && (self.k == 0 || self.k > self.n_features()) {
            return Err(Error::Config(format!(
                "k = {} outside 1..={}",
                self.k,
                self.n_features()
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.lookup_lr_multiplier <= 0.0 {
            return Err(Error::Config("lookup_lr_multiplier must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for SaeConfig {
    /// Desk default: expansion 16 over d_model 64, top-k with k = 32,
    /// α = 0.5, lookup learning-rate multiplier 100.
    fn default() -> Self {
        SaeConfig {
            d_model: 64,
            expansion: 16,
            variant: SaeVariant::TopK,
            k: 32,
            lambda: 3e-3,
            tokenized: false,
            alpha: 0.5,
            lookup_lr_multiplier: 100.0,
            lookup_truncation: None,
        }
    }
}

/// Non-negative feature activations; at most `k` nonzero for top-k SAEs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T: Real = f32>(pub Vec<T>);

impl<T: Real> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&v| v > T::ZERO).count()
    }
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams<T: Real = f32> {
    pub config: SaeConfig,
    /// d_model × n_features.
    pub w_enc: Matrix<T>,
    /// 1 × n_features.
    pub b_enc: Matrix<T>,
    /// n_features × d_model.
    pub w_dec: Matrix<T>,
    /// 1 × d_model.
    pub b_dec: Matrix<T>,
    /// vocab × d_model; present iff `config.tokenized`.
    pub w_lookup: Option<Matrix<T>>,
}

impl<T: Real> SaeParams<T> {
    pub fn n_features(&self) -> usize {
        self.config.n_features()
    }

    fn check_input(&self, a: &[T]) -> Result<()> {
        if a.len() != self.config.d_model {
            return Err(Error::shape("sae input", self.config.d_model, a.len()));
        }
        Ok(())
    }

    /// Pre-activations `(a - b_dec)ᵀ W_enc + b_enc` (before ReLU/top-k).
    pub fn preacts(&self, a: &[T]) -> Result<Vec<T>> {
        self.check_input(a)?;
        let f = self.n_features();
        let mut pre = self.b_enc.row(0).to_vec();
        for (i, (&ai, &bi)) in a.iter().zip(self.b_dec.row(0)).enumerate() {
            let c = ai - bi;
            let wrow = self.w_enc.row(i);
            for j in 0..f {
                pre[j] += c * wrow[j];
            }
        }
        Ok(pre)
    }

    /// Encode one activation row. The lookup table never affects encoding.
    pub fn encode(&self, a: &[T]) -> Result<FeatureVector<T>> {
        let mut pre = self.preacts(a)?;
        relu_topk_in_place(&mut pre, self.config.variant, self.config.k);
        Ok(FeatureVector(pre))
    }

    /// Encode a batch of rows into a B × n_features matrix.
    pub fn encode_batch(&self, acts: &Matrix<T>) -> Result<Matrix<T>> {
        if acts.cols() != self.config.d_model {
            return Err(Error::shape("encode_batch", self.config.d_model, acts.cols()));
        }
        let mut out = Matrix::zeros(acts.rows(), self.n_features());
        for r in 0..acts.rows() {
            let f = self.encode(acts.row(r))?;
            out.row_mut(r).copy_from_slice(&f.0);
        }
        Ok(out)
    }

    /// Decode features back to model space. `t` is the token at the
    /// activation's own position; required iff the SAE is tokenized.
    pub fn decode(&self, f: &FeatureVector<T>, t: Option<TokenId>) -> Result<Vec<T>> {
        if f.len() != self.n_features() {
            return Err(Error::shape("decode", self.n_features(), f.len()));
        }
        let mut out = self.b_dec.row(0).to_vec();
        for (j, &fj) in f.0.iter().enumerate() {
            if fj != T::ZERO {
                let row = self.w_dec.row(j);
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += fj * w;
                }
            }
        }
        if let Some(lookup) = &self.w_lookup {
            let t = t.ok_or_else(|| {
                Error::Argument("tokenized decode requires a token id".into())
            })?;
            if (t as usize) >= lookup.rows() {
                return Err(Error::Range(format!(
                    "token id {t} outside lookup of {} rows",
                    lookup.rows()
                )));
            }
            for (o, &w) in out.iter_mut().zip(lookup.row(t as usize)) {
                *o += w;
            }
        }
        Ok(out)
    }

    /// Reconstruct one activation row end to end.
    pub fn reconstruct(&self, a: &[T], t: Option<TokenId>) -> Result<Vec<T>> {
        let f = self.encode(a)?;
        self.decode(&f, t)
    }

    /// Per-row loss parts: `(total, mse_part, sparsity_part)`.
    ///
    /// `mse_part = ||a - â||² / d_model`; the vanilla sparsity part is the
    /// decoder-norm-weighted L1 `λ Σ f_i ||W_dec row i||`; top-k has none.
    pub fn loss(&self, a: &[T], t: Option<TokenId>) -> Result<(f64, f64, f64)> {
        let f = self.encode(a)?;
        let recon = self.decode(&f, t)?;
        let mse = a
            .iter()
            .zip(&recon)
            .map(|(&x, &y)| {
                let e = (x - y).to_f64();
                e * e
            })
            .sum::<f64>()
            / self.config.d_model as f64;
        let sparsity = match self.config.variant {
            SaeVariant::Vanilla => {
                self.config.lambda
                    * f.0
                        .iter()
                        .enumerate()
                        .filter(|(_, &fj)| fj != T::ZERO)
                        .map(|(j, &fj)| fj.to_f64() * self.w_dec.row_norm(j).to_f64())
                        .sum::<f64>()
            }
            SaeVariant::TopK => 0.0,
        };
        Ok((mse + sparsity, mse, sparsity))
    }

    /// cos(W_enc column j, W_dec row j) per feature.
    pub fn enc_dec_cosines(&self) -> Vec<f64> {
        let f = self.n_features();
        let d = self.config.d_model;
        let mut out = Vec::with_capacity(f);
        for j in 0..f {
            let enc_col: Vec<T> = (0..d).map(|i| self.w_enc.get(i, j)).collect();
            let dec_row = self.w_dec.row(j);
            let nn = dot(&enc_col, &enc_col).sqrt() * dot(dec_row, dec_row).sqrt();
            if nn == T::ZERO {
                out.push(0.0);
            } else {
                out.push((dot(&enc_col, dec_row) / nn).to_f64());
            }
        }
        out
    }
}

/// ReLU, then for top-k keep the k largest entries (ties toward the lower
/// feature index) and zero the rest.
fn relu_topk_in_place<T: Real>(pre: &mut [T], variant: SaeVariant, k: usize) {
    for v in pre.iter_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    if variant != SaeVariant::TopK {
        return;
    }
    let positives: Vec<u32> = pre
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > T::ZERO)
        .map(|(j, _)| j as u32)
        .collect();
    if positives.len() <= k {
        return;
    }
    // Total order (value desc, index asc) makes the selected set unique.
    let mut cand = positives;
    cand.select_nth_unstable_by(k - 1, |&a, &b| {
        pre[b as usize]
            .partial_cmp(&pre[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let keep: std::collections::HashSet<u32> = cand[..k].iter().copied().collect();
    for (j, v) in pre.iter_mut().enumerate() {
        if *v > T::ZERO && !keep.contains(&(j as u32)) {
            *v = T::ZERO;
        }
    }
}
