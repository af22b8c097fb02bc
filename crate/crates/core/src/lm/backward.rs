//! Hand-derived backpropagation through the transformer. Verified against
//! central finite differences in the gradcheck tests.

use crate::error::Result;
use crate::numerics::{dot, matmul_nt, matmul_tn, Matrix, Real};

use super::forward::{gelu_grad, ForwardCache, LnCache};
use super::params::LmParams;

/// Gradients use the same layout as the parameters themselves.
pub type LmGrads<T> = LmParams<T>;

/// `grad_bias += column sums of d`.
fn add_colsum<T: Real>(d: &Matrix<T>, grad_bias: &mut Matrix<T>) {
    let cols = d.cols();
    let g = grad_bias.row_mut(0);
    for i in 0..d.rows() {
        let row = d.row(i);
        for j in 0..cols {
            g[j] += row[j];
        }
    }
}

/// Re-apply scale/shift to cached normalized values.
fn ln_apply<T: Real>(cache: &LnCache<T>, scale: &Matrix<T>, shift: &Matrix<T>) -> Matrix<T> {
    let (n, d) = cache.xh.shape();
    let mut y = Matrix::zeros(n, d);
    let sc = scale.row(0);
    let sh = shift.row(0);
    for i in 0..n {
        let xh = cache.xh.row(i);
        let row = y.row_mut(i);
        for j in 0..d {
            row[j] = xh[j] * sc[j] + sh[j];
        }
    }
    y
}

/// Layer-norm backward; returns dx and accumulates dscale/dshift.
fn ln_backward<T: Real>(
    dy: &Matrix<T>,
    cache: &LnCache<T>,
    scale: &Matrix<T>,
    dscale: &mut Matrix<T>,
    dshift: &mut Matrix<T>,
) -> Matrix<T> {
    let (n, d) = dy.shape();
    let inv_d = T::of(1.0 / d as f64);
    let mut dx = Matrix::zeros(n, d);
    let sc = scale.row(0);
    {
        let ds = dscale.row_mut(0);
        for i in 0..n {
            let dyr = dy.row(i);
            let xh = cache.xh.row(i);
            for j in 0..d {
                ds[j] += dyr[j] * xh[j];
            }
        }
    }
    add_colsum(dy, dshift);
    for i in 0..n {
        let dyr = dy.row(i);
        let xh = cache.xh.row(i);
        let s = cache.inv_std[i];
        let mut m1 = T::ZERO;
        let mut m2 = T::ZERO;
        for j in 0..d {
            let dxh = dyr[j] * sc[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        let dxr = dx.row_mut(i);
        for j in 0..d {
            let dxh = dyr[j] * sc[j];
            dxr[j] = s * (dxh - m1 - xh[j] * m2);
        }
    }
    dx
}

/// Backpropagate `dlogits` through a cached forward pass, accumulating
/// parameter gradients into `grads`.
pub fn backward<T: Real>(
    params: &LmParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &Matrix<T>,
    grads: &mut LmGrads<T>,
) -> Result<()> {
    let cfg = &params.config;
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv_sqrt_dh = T::of(1.0 / (dh as f64).sqrt());
    let n = cache.tokens.len();

    // Unembedding and final layer norm.
    grads
        .unembed
        .add_scaled(T::ONE, &matmul_tn(&cache.lnf_out, dlogits)?)?;
    let dlnf_out = matmul_nt(dlogits, &params.unembed)?;
    let mut dx = ln_backward(
        &dlnf_out,
        &cache.lnf,
        &params.lnf_scale,
        &mut grads.lnf_scale,
        &mut grads.lnf_shift,
    );

    for li in (0..cfg.n_layers).rev() {
        let l = &params.layers[li];
        let gl = &mut grads.layers[li];
        let lc = &cache.layers[li];

        // x_next = resid_mid + mlp_out
        let dmlp_out = &dx;

        // MLP branch.
        grads_linear(
            &lc.mlp_act,
            dmlp_out,
            &mut gl.w_out,
            &mut gl.b_out,
        )?;
        let dmlp_act = matmul_nt(dmlp_out, &l.w_out)?;
        let mut dmlp_pre = dmlp_act;
        for (g, &pre) in dmlp_pre.data_mut().iter_mut().zip(lc.mlp_pre.data()) {
            *g *= gelu_grad(pre);
        }
        let y2 = ln_apply(&lc.ln2, &l.ln2_scale, &l.ln2_shift);
        grads_linear(&y2, &dmlp_pre, &mut gl.w_in, &mut gl.b_in)?;
        let dy2 = matmul_nt(&dmlp_pre, &l.w_in)?;

        // resid_mid receives dx directly plus the ln2 path.
        let mut dresid_mid = dx.clone();
        let d_from_ln2 = ln_backward(
            &dy2,
            &lc.ln2,
            &l.ln2_scale,
            &mut gl.ln2_scale,
            &mut gl.ln2_shift,
        );
        dresid_mid.add_scaled(T::ONE, &d_from_ln2)?;

        // Attention branch: resid_mid = x + attn_out.
        let dattn_out = &dresid_mid;
        grads_linear(&lc.ctx, dattn_out, &mut gl.w_o, &mut gl.b_o)?;
        let dctx = matmul_nt(dattn_out, &l.w_o)?;

        let mut dq = Matrix::zeros(n, cfg.d_model);
        let mut dk = Matrix::zeros(n, cfg.d_model);
        let mut dv = Matrix::zeros(n, cfg.d_model);
        for h in 0..heads {
            let hs = h * dh;
            let he = hs + dh;
            let probs = &lc.probs[h];
            // dP and softmax backward, rows independently.
            let mut dscores = Matrix::zeros(n, n);
            for i in 0..n {
                let dctx_i = &dctx.row(i)[hs..he];
                let prow = probs.row(i);
                let dsrow = dscores.row_mut(i);
                let mut inner = T::ZERO;
                for j in 0..=i {
                    let dp = dot(dctx_i, &lc.v.row(j)[hs..he]);
                    dsrow[j] = dp;
                    inner += dp * prow[j];
                }
                for j in 0..=i {
                    dsrow[j] = prow[j] * (dsrow[j] - inner);
                }
            }
            // dV[j] += sum_i P[i,j] * dctx[i]
            for i in 0..n {
                let dctx_i = &dctx.row(i)[hs..he];
                let prow = probs.row(i);
                for j in 0..=i {
                    let pij = prow[j];
                    let dvj = &mut dv.row_mut(j)[hs..he];
                    for (o, &c) in dvj.iter_mut().zip(dctx_i) {
                        *o += pij * c;
                    }
                }
            }
            // dQ[i] += sum_j dS[i,j]·K[j]/sqrt(dh); dK[j] += sum_i dS[i,j]·Q[i]/sqrt(dh)
            for i in 0..n {
                let dsrow = dscores.row(i);
                for j in 0..=i {
                    let ds = dsrow[j] * inv_sqrt_dh;
                    let krow = &lc.k.row(j)[hs..he];
                    let dqi = &mut dq.row_mut(i)[hs..he];
                    for (o, &kk) in dqi.iter_mut().zip(krow) {
                        *o += ds * kk;
                    }
                }
                for j in 0..=i {
                    let ds = dsrow[j] * inv_sqrt_dh;
                    let qrow = &lc.q.row(i)[hs..he];
                    let dkj = &mut dk.row_mut(j)[hs..he];
                    for (o, &qq) in dkj.iter_mut().zip(qrow) {
                        *o += ds * qq;
                    }
                }
            }
        }

        let y1 = ln_apply(&lc.ln1, &l.ln1_scale, &l.ln1_shift);
        grads_linear(&y1, &dq, &mut gl.w_q, &mut gl.b_q)?;
        grads_linear(&y1, &dk, &mut gl.w_k, &mut gl.b_k)?;
        grads_linear(&y1, &dv, &mut gl.w_v, &mut gl.b_v)?;
        let mut dy1 = matmul_nt(&dq, &l.w_q)?;
        dy1.add_scaled(T::ONE, &matmul_nt(&dk, &l.w_k)?)?;
        dy1.add_scaled(T::ONE, &matmul_nt(&dv, &l.w_v)?)?;

        let d_from_ln1 = ln_backward(
            &dy1,
            &lc.ln1,
            &l.ln1_scale,
            &mut gl.ln1_scale,
            &mut gl.ln1_shift,
        );
        // x feeds both the residual connection and ln1.
        dx = dresid_mid;
        dx.add_scaled(T::ONE, &d_from_ln1)?;
    }

    // Embedding gradients.
    for (i, &t) in cache.tokens.iter().enumerate() {
        let dxr = dx.row(i);
        let te = grads.tok_emb.row_mut(t as usize);
        for j in 0..cfg.d_model {
            te[j] += dxr[j];
        }
        let pe = grads.pos_emb.row_mut(i);
        for j in 0..cfg.d_model {
            pe[j] += dxr[j];
        }
    }
    Ok(())
}

/// Accumulate `dW += xᵀ dy` and `db += colsum(dy)` for a linear layer.
fn grads_linear<T: Real>(
    x: &Matrix<T>,
    dy: &Matrix<T>,
    dw: &mut Matrix<T>,
    db: &mut Matrix<T>,
) -> Result<()> {
    dw.add_scaled(T::ONE, &matmul_tn(x, dy)?)?;
    add_colsum(dy, db);
    Ok(())
}
