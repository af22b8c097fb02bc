//! Forward passes: full (with caches for backprop), patched, truncated, and
//! the lean taps-only path used by the activation buffer.

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, Matrix, Real};

use super::params::{LmParams, TapLocation};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Per-row layer norm cache: normalized values and inverse std.
#[derive(Debug, Clone)]
pub(crate) struct LnCache<T: Real> {
    pub xh: Matrix<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T: Real> {
    pub ln1: LnCache<T>,
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    /// Post-softmax attention probabilities, one N×N matrix per head
    /// (zero above the diagonal).
    pub probs: Vec<Matrix<T>>,
    /// Concatenated per-head context vectors, before the output projection.
    pub ctx: Matrix<T>,
    pub ln2: LnCache<T>,
    pub mlp_pre: Matrix<T>,
    pub mlp_act: Matrix<T>,
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real = f32> {
    pub(crate) tokens: Vec<TokenId>,
    /// `taps[p]` is the residual stream entering layer `p`; `taps[n_layers]`
    /// is the stream entering the final layer norm. Shape N×d_model each.
    pub taps: Vec<Matrix<T>>,
    pub(crate) layers: Vec<LayerCache<T>>,
    pub(crate) lnf: LnCache<T>,
    pub(crate) lnf_out: Matrix<T>,
    pub logits: Matrix<T>,
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::ONE + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::ONE + t) + half * x * (T::ONE - t * t) * c * (T::ONE + three * a * x * x)
}

pub(crate) fn ln_forward<T: Real>(
    x: &Matrix<T>,
    scale: &Matrix<T>,
    shift: &Matrix<T>,
) -> (Matrix<T>, LnCache<T>) {
    let (n, d) = x.shape();
    let inv_d = T::of(1.0 / d as f64);
    let eps = T::of(LN_EPS);
    let mut xh = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    let mut y = Matrix::zeros(n, d);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let s = T::ONE / (var + eps).sqrt();
        inv_std.push(s);
        let xh_row = xh.row_mut(i);
        for j in 0..d {
            xh_row[j] = (row[j] - mean) * s;
        }
        let y_row = y.row_mut(i);
        let sc = scale.row(0);
        let sh = shift.row(0);
        for j in 0..d {
            y_row[j] = xh_row[j] * sc[j] + sh[j];
        }
    }
    (y, LnCache { xh, inv_std })
}

/// `x · w + b` where `b` is a 1×cols bias row.
pub(crate) fn linear<T: Real>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let mut y = matmul(x, w)?;
    for i in 0..y.rows() {
        let row = y.row_mut(i);
        for (v, &bj) in row.iter_mut().zip(b.row(0)) {
            *v += bj;
        }
    }
    Ok(y)
}

/// In-place softmax over `row[..=limit]`, zeroing the rest (causal mask).
fn causal_softmax_row<T: Real>(row: &mut [T], limit: usize) {
    let mut max = row[0];
    for &v in &row[1..=limit] {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::ZERO;
    for v in &mut row[..=limit] {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::ONE / sum;
    for v in &mut row[..=limit] {
        *v *= inv;
    }
    for v in &mut row[limit + 1..] {
        *v = T::ZERO;
    }
}

fn embed<T: Real>(params: &LmParams<T>, tokens: &[TokenId]) -> Matrix<T> {
    let d = params.config.d_model;
    let mut x = Matrix::zeros(tokens.len(), d);
    for (i, &t) in tokens.iter().enumerate() {
        let row = x.row_mut(i);
        let te = params.tok_emb.row(t as usize);
        let pe = params.pos_emb.row(i);
        for j in 0..d {
            row[j] = te[j] + pe[j];
        }
    }
    x
}

fn validate_tokens<T: Real>(params: &LmParams<T>, tokens: &[TokenId]) -> Result<()> {
    let cfg = &params.config;
    if tokens.is_empty() || tokens.len() > cfg.ctx_len {
        return Err(Error::Range(format!(
            "sequence length {} outside 1..={}",
            tokens.len(),
            cfg.ctx_len
        )));
    }
    if tokens[0] != Vocab::BOS {
        return Err(Error::Argument("sequence must start with BOS".into()));
    }
    for &t in tokens {
        if t as usize >= cfg.vocab_size {
            return Err(Error::Range(format!(
                "token id {t} outside vocab of size {}",
                cfg.vocab_size
            )));
        }
    }
    Ok(())
}

/// One attention + MLP block with caches. `x` is the residual entering the
/// layer; returns the residual entering the next layer.
fn layer_forward<T: Real>(
    params: &LmParams<T>,
    layer_idx: usize,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, LayerCache<T>)> {
    let cfg = &params.config;
    let l = &params.layers[layer_idx];
    let (n, d) = x.shape();
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv_sqrt_dh = T::of(1.0 / (dh as f64).sqrt());

    let (y1, ln1) = ln_forward(x, &l.ln1_scale, &l.ln1_shift);
    let q = linear(&y1, &l.w_q, &l.b_q)?;
    let k = linear(&y1, &l.w_k, &l.b_k)?;
    let v = linear(&y1, &l.w_v, &l.b_v)?;

    let mut ctx = Matrix::zeros(n, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let hs = h * dh;
        let he = hs + dh;
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[hs..he];
            let prow = p.row_mut(i);
            for j in 0..=i {
                prow[j] = dot(qi, &k.row(j)[hs..he]) * inv_sqrt_dh;
            }
            causal_softmax_row(prow, i);
        }
        for i in 0..n {
            // Borrow p's row by copy to keep ctx mutable.
            for j in 0..=i {
                let pij = p.get(i, j);
                let vrow = &v.row(j)[hs..he];
                let crow = &mut ctx.row_mut(i)[hs..he];
                for (c, &vv) in crow.iter_mut().zip(vrow) {
                    *c += pij * vv;
                }
            }
        }
        probs.push(p);
    }
    let attn_out = linear(&ctx, &l.w_o, &l.b_o)?;

    let mut resid_mid = x.clone();
    resid_mid.add_scaled(T::ONE, &attn_out)?;

    let (y2, ln2) = ln_forward(&resid_mid, &l.ln2_scale, &l.ln2_shift);
    let mlp_pre = linear(&y2, &l.w_in, &l.b_in)?;
    let mut mlp_act = mlp_pre.clone();
    mlp_act.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    let mlp_out = linear(&mlp_act, &l.w_out, &l.b_out)?;

    let mut x_next = resid_mid.clone();
    x_next.add_scaled(T::ONE, &mlp_out)?;

    Ok((
        x_next,
        LayerCache {
            ln1,
            q,
            k,
            v,
            probs,
            ctx,
            ln2,
            mlp_pre,
            mlp_act,
        },
    ))
}

fn forward_inner<T: Real>(
    params: &LmParams<T>,
    tokens: &[TokenId],
    patch: Option<(usize, &Matrix<T>)>,
) -> Result<ForwardCache<T>> {
    validate_tokens(params, tokens)?;
    let cfg = &params.config;
    if let Some((p, repl)) = patch {
        TapLocation(p).validate(cfg)?;
        if repl.shape() != (tokens.len(), cfg.d_model) {
            return Err(Error::shape(
                "patched_forward",
                format!("{}x{}", tokens.len(), cfg.d_model),
                repl.shape_str(),
            ));
        }
    }

    let mut x = embed(params, tokens);
    let mut taps = Vec::with_capacity(cfg.n_layers + 1);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for li in 0..cfg.n_layers {
        if let Some((p, repl)) = patch {
            if p == li {
                x = repl.clone();
            }
        }
        taps.push(x.clone());
        let (x_next, cache) = layer_forward(params, li, &x)?;
        x = x_next;
        layers.push(cache);
    }
    if let Some((p, repl)) = patch {
        if p == cfg.n_layers {
            x = repl.clone();
        }
    }
    taps.push(x.clone());

    let (lnf_out, lnf) = ln_forward(&x, &params.lnf_scale, &params.lnf_shift);
    let logits = matmul(&lnf_out, &params.unembed)?;

    Ok(ForwardCache {
        tokens: tokens.to_vec(),
        taps,
        layers,
        lnf,
        lnf_out,
        logits,
    })
}

/// Full forward pass: logits plus residual-stream taps at every location.
pub fn lm_forward<T: Real>(params: &LmParams<T>, tokens: &[TokenId]) -> Result<ForwardCache<T>> {
    forward_inner(params, tokens, None)
}

/// Forward with the residual stream entering layer `p` replaced at all
/// positions; downstream layers are recomputed.
pub fn patched_forward<T: Real>(
    params: &LmParams<T>,
    tokens: &[TokenId],
    p: TapLocation,
    replacement: &Matrix<T>,
) -> Result<Matrix<T>> {
    Ok(forward_inner(params, tokens, Some((p.0, replacement)))?.logits)
}

/// Lean path: residual stream entering layer `p`, running only layers < p and
/// skipping all caches and the unembedding.
pub fn resid_pre_at<T: Real>(
    params: &LmParams<T>,
    tokens: &[TokenId],
    p: TapLocation,
) -> Result<Matrix<T>> {
    validate_tokens(params, tokens)?;
    p.validate(&params.config)?;
    let mut x = embed(params, tokens);
    for li in 0..p.0 {
        let (x_next, _) = layer_forward(params, li, &x)?;
        x = x_next;
    }
    Ok(x)
}

/// A token's activation excluding context: row 1 of the tap for `[BOS, t]`.
pub fn unigram_activation<T: Real>(
    params: &LmParams<T>,
    t: TokenId,
    p: TapLocation,
) -> Result<Vec<T>> {
    let taps = resid_pre_at(params, &[Vocab::BOS, t], p)?;
    Ok(taps.row(1).to_vec())
}

/// Unigram activations for every token id, as a V×d_model matrix.
pub fn unigram_table<T: Real>(params: &LmParams<T>, p: TapLocation) -> Result<Matrix<T>> {
    let v = params.config.vocab_size;
    let d = params.config.d_model;
    let mut out = Matrix::zeros(v, d);
    for t in 0..v {
        let row = unigram_activation(params, t as TokenId, p)?;
        out.row_mut(t).copy_from_slice(&row);
    }
    Ok(out)
}

/// Activation at position `i` as if only the last `n` tokens existed:
/// `A^p([BOS] ++ tokens[i-m+1 ..= i])` last row, with `m = min(n, i)` so the
/// re-prepended BOS never duplicates position 0.
pub fn truncated_activation<T: Real>(
    params: &LmParams<T>,
    tokens: &[TokenId],
    i: usize,
    n: usize,
    p: TapLocation,
) -> Result<Vec<T>> {
    if i >= tokens.len() {
        return Err(Error::Range(format!(
            "position {i} outside sequence of length {}",
            tokens.len()
        )));
    }
    if n == 0 {
        return Err(Error::Range("truncation width n must be >= 1".into()));
    }
    if tokens[0] != Vocab::BOS {
        return Err(Error::Argument("sequence must start with BOS".into()));
    }
    let m = n.min(i);
    let mut seq = Vec::with_capacity(m + 1);
    seq.push(Vocab::BOS);
    seq.extend_from_slice(&tokens[i + 1 - m..=i]);
    let taps = resid_pre_at(params, &seq, p)?;
    Ok(taps.row(taps.rows() - 1).to_vec())
}

/// Mean next-token cross-entropy (natural log) of logits against targets.
pub fn ce_from_logits<T: Real>(logits: &Matrix<T>, targets: &[TokenId]) -> Result<f64> {
    if logits.rows() != targets.len() {
        return Err(Error::shape(
            "ce_from_logits",
            logits.rows(),
            targets.len(),
        ));
    }
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let mut max = row[0];
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let lse = row
            .iter()
            .map(|&v| (v - max).exp().to_f64())
            .sum::<f64>()
            .ln()
            + max.to_f64();
        total += lse - row[t as usize].to_f64();
    }
    Ok(total / targets.len() as f64)
}

/// Gradient of mean cross-entropy w.r.t. logits: `(softmax - onehot) / N`.
pub fn logits_dgrad<T: Real>(logits: &Matrix<T>, targets: &[TokenId]) -> Result<Matrix<T>> {
    if logits.rows() != targets.len() {
        return Err(Error::shape("logits_dgrad", logits.rows(), targets.len()));
    }
    let (n, v) = logits.shape();
    let inv_n = T::of(1.0 / n as f64);
    let mut d = Matrix::zeros(n, v);
    for i in 0..n {
        let row = logits.row(i);
        let mut max = row[0];
        for &x in row {
            if x > max {
                max = x;
            }
        }
        let drow = d.row_mut(i);
        let mut sum = T::ZERO;
        for j in 0..v {
            let e = (row[j] - max).exp();
            drow[j] = e;
            sum += e;
        }
        let inv = T::ONE / sum;
        for x in drow.iter_mut() {
            *x *= inv * inv_n;
        }
        drow[targets[i] as usize] -= inv_n;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::params::LmConfig;
    use crate::numerics::Rng;

    fn tiny_params() -> LmParams<f32> {
        let cfg = LmConfig {
            vocab_size: 11,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_mlp: 16,
            ctx_len: 8,
        };
        LmParams::init(cfg, &mut Rng::seed_from(7)).unwrap()
    }

    #[test]
    fn bos_only_gives_normalized_logit_row() {
        let params = tiny_params();
        let fwd = lm_forward(&params, &[Vocab::BOS]).unwrap();
        assert_eq!(fwd.logits.shape(), (1, 11));
        let row = fwd.logits.row(0);
        let max = row.iter().cloned().fold(f32::MIN, f32::max);
        let sum: f32 = row.iter().map(|&v| (v - max).exp()).sum();
        let probs: f32 = row.iter().map(|&v| (v - max).exp() / sum).sum();
        assert!((probs - 1.0).abs() < 1e-5);
    }

    #[test]
    fn causality_taps_are_bit_identical_under_truncation() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2, 9, 1, 4, 7];
        let full = lm_forward(&params, &tokens).unwrap();
        for prefix_len in 1..=tokens.len() {
            let part = lm_forward(&params, &tokens[..prefix_len]).unwrap();
            for p in 0..=params.config.n_layers {
                for i in 0..prefix_len {
                    assert_eq!(
                        full.taps[p].row(i),
                        part.taps[p].row(i),
                        "tap {p} row {i} differs at prefix {prefix_len}"
                    );
                }
            }
        }
    }

    #[test]
    fn missing_bos_is_an_argument_error() {
        let params = tiny_params();
        assert!(matches!(
            lm_forward(&params, &[3, 5]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn over_length_sequence_is_a_range_error() {
        let params = tiny_params();
        let tokens = vec![Vocab::BOS; 9];
        assert!(matches!(lm_forward(&params, &tokens), Err(Error::Range(_))));
    }

    #[test]
    fn identity_patch_reproduces_clean_logits_bit_exactly() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2];
        let clean = lm_forward(&params, &tokens).unwrap();
        for p in 0..=params.config.n_layers {
            let patched =
                patched_forward(&params, &tokens, TapLocation(p), &clean.taps[p]).unwrap();
            assert_eq!(patched, clean.logits, "tap {p}");
        }
    }

    #[test]
    fn zero_patch_changes_logits() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2];
        let clean = lm_forward(&params, &tokens).unwrap();
        let zeros = Matrix::zeros(4, 8);
        let patched = patched_forward(&params, &tokens, TapLocation(1), &zeros).unwrap();
        let max_diff = patched
            .data()
            .iter()
            .zip(clean.logits.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn unigram_activation_is_row_one_of_the_pair_forward() {
        let params = tiny_params();
        for t in 0..11u32 {
            let ua = unigram_activation(&params, t, TapLocation(1)).unwrap();
            let fwd = lm_forward(&params, &[Vocab::BOS, t]).unwrap();
            assert_eq!(ua.as_slice(), fwd.taps[1].row(1));
        }
        let table = unigram_table(&params, TapLocation(1)).unwrap();
        assert_eq!(table.shape(), (11, 8));
    }

    #[test]
    fn distinct_tokens_give_distinct_unigram_activations() {
        let mut params = tiny_params();
        // Zero the positional embedding at position 1 so rows differ only
        // through the token embedding.
        params.pos_emb.row_mut(1).iter_mut().for_each(|v| *v = 0.0);
        let table = unigram_table(&params, TapLocation(1)).unwrap();
        for a in 0..11 {
            for b in a + 1..11 {
                let dist: f32 = table
                    .row(a)
                    .iter()
                    .zip(table.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                assert!(dist > 0.0, "tokens {a} and {b} collide");
            }
        }
    }

    #[test]
    fn truncation_wide_enough_equals_untruncated() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2, 9, 1];
        let full = lm_forward(&params, &tokens).unwrap();
        for p in 0..=2 {
            for i in 0..tokens.len() {
                for n in [i.max(1), i + 1, i + 5] {
                    let tr =
                        truncated_activation(&params, &tokens, i, n, TapLocation(p)).unwrap();
                    assert_eq!(tr.as_slice(), full.taps[p].row(i), "p={p} i={i} n={n}");
                }
            }
        }
    }

    #[test]
    fn truncation_to_one_token_is_the_unigram_activation() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2, 9, 1];
        for i in 1..tokens.len() {
            let tr = truncated_activation(&params, &tokens, i, 1, TapLocation(2)).unwrap();
            let ua = unigram_activation(&params, tokens[i], TapLocation(2)).unwrap();
            assert_eq!(tr, ua, "i={i}");
        }
    }

    #[test]
    fn attention_probabilities_sum_to_one() {
        let params = tiny_params();
        let tokens = [Vocab::BOS, 3, 5, 2, 9];
        let fwd = lm_forward(&params, &tokens).unwrap();
        for cache in &fwd.layers {
            for p in &cache.probs {
                for i in 0..p.rows() {
                    let sum: f32 = p.row(i).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-5, "row {i} sums to {sum}");
                }
            }
        }
    }

    #[test]
    fn ce_matches_direct_computation() {
        let logits = Matrix::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let ce = ce_from_logits(&logits, &[2, 0]).unwrap();
        let lse1: f64 = (1.0f64.exp() + 2.0f64.exp() + 3.0f64.exp()).ln();
        let expected = ((lse1 - 3.0) + (3.0f64.ln() - 0.0)) / 2.0;
        assert!((ce - expected).abs() < 1e-12);
    }
}
