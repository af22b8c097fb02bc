//! Transformer weights, initialization, and the checkpoint format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_checkpoint, write_checkpoint};
use crate::numerics::{Matrix, Real, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    /// Maximum positions (learned positional embedding size).
    pub ctx_len: usize,
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.ctx_len < 2 {
            return Err(Error::Config("ctx_len must be at least 2".into()));
        }
        if self.vocab_size < 2 || self.n_layers == 0 || self.d_mlp == 0 {
            return Err(Error::Config("degenerate model dimensions".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

impl Default for LmConfig {
    /// Desk-scale default: 4 layers, d_model 64, 4 heads, d_mlp 256,
    /// ctx 64, vocab 256.
    fn default() -> Self {
        LmConfig {
            vocab_size: 256,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_mlp: 256,
            ctx_len: 64,
        }
    }
}

/// Residual-stream tap: the stream *entering* layer `p`. `p == n_layers`
/// addresses the stream entering the final layer norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapLocation(pub usize);

impl TapLocation {
    pub fn validate(&self, cfg: &LmConfig) -> Result<()> {
        if self.0 > cfg.n_layers {
            return Err(Error::Range(format!(
                "tap {} out of range for {} layers",
                self.0, cfg.n_layers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Real = f32> {
    pub ln1_scale: Matrix<T>,
    pub ln1_shift: Matrix<T>,
    pub w_q: Matrix<T>,
    pub b_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub b_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub b_v: Matrix<T>,
    pub w_o: Matrix<T>,
    pub b_o: Matrix<T>,
    pub ln2_scale: Matrix<T>,
    pub ln2_shift: Matrix<T>,
    pub w_in: Matrix<T>,
    pub b_in: Matrix<T>,
    pub w_out: Matrix<T>,
    pub b_out: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmParams<T: Real = f32> {
    pub config: LmConfig,
    pub tok_emb: Matrix<T>,
    pub pos_emb: Matrix<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_scale: Matrix<T>,
    pub lnf_shift: Matrix<T>,
    pub unembed: Matrix<T>,
}

fn normal_matrix<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Matrix<T> {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = T::of(rng.normal_f64() * std);
    }
    m
}

impl<T: Real> LmParams<T> {
    /// Random initialization. Weight std 0.08; residual-writing projections
    /// scaled down by 1/sqrt(2·n_layers); layer norms start as identity.
    pub fn init(config: LmConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let std = 0.08;
        let resid_std = std / (2.0 * config.n_layers as f64).sqrt();
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                ln1_scale: ones(1, d),
                ln1_shift: Matrix::zeros(1, d),
                w_q: normal_matrix(d, d, std, rng),
                b_q: Matrix::zeros(1, d),
                w_k: normal_matrix(d, d, std, rng),
                b_k: Matrix::zeros(1, d),
                w_v: normal_matrix(d, d, std, rng),
                b_v: Matrix::zeros(1, d),
                w_o: normal_matrix(d, d, resid_std, rng),
                b_o: Matrix::zeros(1, d),
                ln2_scale: ones(1, d),
                ln2_shift: Matrix::zeros(1, d),
                w_in: normal_matrix(d, config.d_mlp, std, rng),
                b_in: Matrix::zeros(1, config.d_mlp),
                w_out: normal_matrix(config.d_mlp, d, resid_std, rng),
                b_out: Matrix::zeros(1, d),
            });
        }
        Ok(LmParams {
            tok_emb: normal_matrix(config.vocab_size, d, std, rng),
            pos_emb: normal_matrix(config.ctx_len, d, std, rng),
            layers,
            lnf_scale: ones(1, d),
            lnf_shift: Matrix::zeros(1, d),
            unembed: normal_matrix(d, config.vocab_size, std, rng),
            config,
        })
    }

    /// Zero-filled parameter set (gradient carrier).
    pub fn zeros(config: LmConfig) -> Self {
        let d = config.d_model;
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_scale: Matrix::zeros(1, d),
                ln1_shift: Matrix::zeros(1, d),
                w_q: Matrix::zeros(d, d),
                b_q: Matrix::zeros(1, d),
                w_k: Matrix::zeros(d, d),
                b_k: Matrix::zeros(1, d),
                w_v: Matrix::zeros(d, d),
                b_v: Matrix::zeros(1, d),
                w_o: Matrix::zeros(d, d),
                b_o: Matrix::zeros(1, d),
                ln2_scale: Matrix::zeros(1, d),
                ln2_shift: Matrix::zeros(1, d),
                w_in: Matrix::zeros(d, config.d_mlp),
                b_in: Matrix::zeros(1, config.d_mlp),
                w_out: Matrix::zeros(config.d_mlp, d),
                b_out: Matrix::zeros(1, d),
            })
            .collect();
        LmParams {
            tok_emb: Matrix::zeros(config.vocab_size, d),
            pos_emb: Matrix::zeros(config.ctx_len, d),
            layers,
            lnf_scale: Matrix::zeros(1, d),
            lnf_shift: Matrix::zeros(1, d),
            unembed: Matrix::zeros(d, config.vocab_size),
            config,
        }
    }

    /// All parameter matrices with their checkpoint names, in the fixed
    /// serialization order.
    pub fn named_params(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, m) in [
                ("ln1_scale", &l.ln1_scale),
                ("ln1_shift", &l.ln1_shift),
                ("w_q", &l.w_q),
                ("b_q", &l.b_q),
                ("w_k", &l.w_k),
                ("b_k", &l.b_k),
                ("w_v", &l.w_v),
                ("b_v", &l.b_v),
                ("w_o", &l.w_o),
                ("b_o", &l.b_o),
                ("ln2_scale", &l.ln2_scale),
                ("ln2_shift", &l.ln2_shift),
                ("w_in", &l.w_in),
                ("b_in", &l.b_in),
                ("w_out", &l.w_out),
                ("b_out", &l.b_out),
            ] {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out.push(("lnf_scale".into(), &self.lnf_scale));
        out.push(("lnf_shift".into(), &self.lnf_shift));
        out.push(("unembed".into(), &self.unembed));
        out
    }

    /// Mutable views of all parameters, in the same order as `named_params`.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out: Vec<&mut Matrix<T>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.push(&mut l.ln1_scale);
            out.push(&mut l.ln1_shift);
            out.push(&mut l.w_q);
            out.push(&mut l.b_q);
            out.push(&mut l.w_k);
            out.push(&mut l.b_k);
            out.push(&mut l.w_v);
            out.push(&mut l.b_v);
            out.push(&mut l.w_o);
            out.push(&mut l.b_o);
            out.push(&mut l.ln2_scale);
            out.push(&mut l.ln2_shift);
            out.push(&mut l.w_in);
            out.push(&mut l.b_in);
            out.push(&mut l.w_out);
            out.push(&mut l.b_out);
        }
        out.push(&mut self.lnf_scale);
        out.push(&mut self.lnf_shift);
        out.push(&mut self.unembed);
        out
    }

    pub fn is_all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, m)| m.is_all_finite())
    }
}

fn ones<T: Real>(rows: usize, cols: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(rows, cols);
    m.fill(T::ONE);
    m
}

// --- checkpoint format -------------------------------------------------------

const LM_MAGIC: &[u8; 4] = b"TSLM";
const LM_VERSION: u32 = 1;

pub fn save_lm(params: &LmParams<f32>, path: &Path) -> Result<()> {
    let c = &params.config;
    let header = vec![
        ("vocab_size".to_string(), c.vocab_size.to_string()),
        ("d_model".to_string(), c.d_model.to_string()),
        ("n_layers".to_string(), c.n_layers.to_string()),
        ("n_heads".to_string(), c.n_heads.to_string()),
        ("d_mlp".to_string(), c.d_mlp.to_string()),
        ("ctx_len".to_string(), c.ctx_len.to_string()),
    ];
    let named = params.named_params();
    let arrays: Vec<(String, &Matrix<f32>)> = named.into_iter().collect();
    write_checkpoint(path, LM_MAGIC, LM_VERSION, &header, &arrays)
}

pub fn load_lm(path: &Path) -> Result<LmParams<f32>> {
    let mut ck = read_checkpoint(path, LM_MAGIC, LM_VERSION)?;
    let config = LmConfig {
        vocab_size: ck.header_parse("vocab_size")?,
        d_model: ck.header_parse("d_model")?,
        n_layers: ck.header_parse("n_layers")?,
        n_heads: ck.header_parse("n_heads")?,
        d_mlp: ck.header_parse("d_mlp")?,
        ctx_len: ck.header_parse("ctx_len")?,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let mut out = LmParams::<f32>::zeros(config);
    let expected: Vec<(String, (usize, usize))> = out
        .named_params()
        .iter()
        .map(|(n, m)| (n.clone(), m.shape()))
        .collect();
    for (idx, (name, (rows, cols))) in expected.iter().enumerate() {
        let m = ck.expect_array(idx, name, *rows, *cols)?;
        *out.params_mut()[idx] = m;
    }
    Ok(out)
}
