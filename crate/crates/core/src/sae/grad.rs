//! Hand-derived SAE gradients over a batch. ReLU and top-k use the standard
//! subgradient: zero through inactive units, the top-k mask held fixed.

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, Real};

use super::{SaeParams, SaeVariant};

#[derive(Debug, Clone)]
pub struct SaeGrads<T: Real = f32> {
    pub w_enc: Matrix<T>,
    pub b_enc: Matrix<T>,
    pub w_dec: Matrix<T>,
    pub b_dec: Matrix<T>,
    pub w_lookup: Option<Matrix<T>>,
}

impl<T: Real> SaeGrads<T> {
    pub fn zeros_like(params: &SaeParams<T>) -> Self {
        SaeGrads {
            w_enc: Matrix::zeros(params.w_enc.rows(), params.w_enc.cols()),
            b_enc: Matrix::zeros(1, params.b_enc.cols()),
            w_dec: Matrix::zeros(params.w_dec.rows(), params.w_dec.cols()),
            b_dec: Matrix::zeros(1, params.b_dec.cols()),
            w_lookup: params
                .w_lookup
                .as_ref()
                .map(|l| Matrix::zeros(l.rows(), l.cols())),
        }
    }
}

/// Metrics accumulated over the batch during the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct SaeBatchStats {
    /// Mean of `||a - â||² / d_model`.
    pub mse: f64,
    /// Mean decoder-norm-weighted L1 (0 for top-k).
    pub sparsity: f64,
    /// Mean count of strictly positive feature activations.
    pub l0: f64,
    /// Mean of `||a - â|| / ||a||` over rows with nonzero norm.
    pub nmse: f64,
}

/// Mean-over-batch gradients for all SAE parameters.
///
/// The lookup gradient row for token `t` accumulates only from batch rows
/// whose token is `t`.
pub fn backward_batch<T: Real>(
    params: &SaeParams<T>,
    acts: &Matrix<T>,
    tokens: &[TokenId],
) -> Result<(SaeGrads<T>, SaeBatchStats)> {
    if acts.rows() == 0 {
        return Err(Error::Argument("backward_batch: empty batch".into()));
    }
    if params.config.tokenized && tokens.len() != acts.rows() {
        return Err(Error::shape("backward_batch tokens", acts.rows(), tokens.len()));
    }
    if acts.cols() != params.config.d_model {
        return Err(Error::shape(
            "backward_batch",
            params.config.d_model,
            acts.cols(),
        ));
    }
    let d = params.config.d_model;
    let n_f = params.n_features();
    let b = acts.rows();
    let inv_b = T::of(1.0 / b as f64);
    let mse_scale = T::of(2.0 / d as f64) * inv_b;
    let vanilla = params.config.variant == SaeVariant::Vanilla;
    let lambda = T::of(params.config.lambda);

    // Decoder row norms are reused per active feature.
    let dec_norms: Vec<T> = (0..n_f).map(|j| params.w_dec.row_norm(j)).collect();

    let mut grads = SaeGrads::zeros_like(params);
    let mut mse_sum = 0.0;
    let mut sp_sum = 0.0;
    let mut l0_sum = 0usize;
    let mut nmse_sum = 0.0;
    let mut nmse_rows = 0usize;

    let mut dpre = vec![T::ZERO; n_f];
    for r in 0..b {
        let a = acts.row(r);
        let t = params.config.tokenized.then(|| tokens[r]);
        let f = params.encode(a)?;
        let recon = params.decode(&f, t)?;

        // Error and its decode-path gradient.
        let mut err = vec![T::ZERO; d];
        let mut sq = T::ZERO;
        let mut a_sq = T::ZERO;
        for i in 0..d {
            let e = recon[i] - a[i];
            err[i] = e;
            sq += e * e;
            a_sq += a[i] * a[i];
        }
        mse_sum += sq.to_f64() / d as f64;
        if a_sq > T::ZERO {
            nmse_sum += (sq.to_f64() / a_sq.to_f64()).sqrt();
            nmse_rows += 1;
        }
        let da: Vec<T> = err.iter().map(|&e| e * mse_scale).collect();

        // Decode-path parameter grads.
        for (o, &g) in grads.b_dec.row_mut(0).iter_mut().zip(&da) {
            *o += g;
        }
        if let (Some(gl), Some(tok)) = (grads.w_lookup.as_mut(), t) {
            let row = gl.row_mut(tok as usize);
            for (o, &g) in row.iter_mut().zip(&da) {
                *o += g;
            }
        }

        let active: Vec<usize> = f
            .0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > T::ZERO)
            .map(|(j, _)| j)
            .collect();
        l0_sum += active.len();

        // df through decode (+ the sparsity term for vanilla), masked to
        // active units; then dpre = df.
        dpre.iter_mut().for_each(|v| *v = T::ZERO);
        for &j in &active {
            let fj = f.0[j];
            let mut df = dot(&da, params.w_dec.row(j));
            // dW_dec row j: reconstruction term + shrinkage-free L1 term.
            {
                let grow = grads.w_dec.row_mut(j);
                for (o, &g) in grow.iter_mut().zip(&da) {
                    *o += fj * g;
                }
            }
            if vanilla {
                let norm = dec_norms[j];
                sp_sum += (lambda * fj * norm).to_f64();
                df += lambda * norm * inv_b;
                if norm > T::ZERO {
                    let coef = lambda * fj * inv_b / norm;
                    let grow = grads.w_dec.row_mut(j);
                    for (o, &w) in grow.iter_mut().zip(params.w_dec.row(j)) {
                        *o += coef * w;
                    }
                }
            }
            dpre[j] = df;
        }

        // Encode-path grads: dW_enc += (a - b_dec) ⊗ dpre, db_enc += dpre,
        // db_dec -= dpre · W_encᵀ.
        for (o, &g) in grads.b_enc.row_mut(0).iter_mut().zip(dpre.iter()) {
            *o += g;
        }
        for i in 0..d {
            let c = a[i] - params.b_dec.get(0, i);
            let wrow = params.w_enc.row(i);
            let grow = grads.w_enc.row_mut(i);
            let mut dbd = T::ZERO;
            for &j in &active {
                let g = dpre[j];
                grow[j] += c * g;
                dbd += g * wrow[j];
            }
            grads.b_dec.row_mut(0)[i] -= dbd;
        }
    }
    sp_sum /= b as f64;

    let stats = SaeBatchStats {
        mse: mse_sum / b as f64,
        sparsity: sp_sum,
        l0: l0_sum as f64 / b as f64,
        nmse: if nmse_rows > 0 {
            nmse_sum / nmse_rows as f64
        } else {
            0.0
        },
    };
    Ok((grads, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::test_support::{random_params, tiny_config};

    #[test]
    fn zero_error_zero_features_gives_zero_gradients() {
        // b_enc = 0 and inputs equal to b_dec: f = 0 and recon = a.
        let mut p = random_params(tiny_config(SaeVariant::Vanilla, false), 4, 1);
        p.config.lambda = 0.0;
        p.b_enc.fill(0.0);
        let mut acts = Matrix::zeros(3, 8);
        for r in 0..3 {
            acts.row_mut(r).copy_from_slice(p.b_dec.row(0));
        }
        let (grads, stats) = backward_batch(&p, &acts, &[0, 1, 2]).unwrap();
        assert_eq!(stats.mse, 0.0);
        assert_eq!(stats.l0, 0.0);
        assert!(grads.w_enc.data().iter().all(|&v| v == 0.0));
        assert!(grads.w_dec.data().iter().all(|&v| v == 0.0));
        assert!(grads.b_enc.data().iter().all(|&v| v == 0.0));
        assert!(grads.b_dec.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lookup_grad_rows_for_absent_tokens_are_zero() {
        let p = random_params(tiny_config(SaeVariant::TopK, true), 8, 2);
        let mut acts = Matrix::zeros(4, 8);
        for r in 0..4 {
            for j in 0..8 {
                acts.set(r, j, (r as f64 - 1.5) * 0.3 + j as f64 * 0.1);
            }
        }
        let tokens = [2u32, 2, 5, 1];
        let (grads, _) = backward_batch(&p, &acts, &tokens).unwrap();
        let gl = grads.w_lookup.unwrap();
        for t in 0..8usize {
            let any = gl.row(t).iter().any(|&v| v != 0.0);
            let present = tokens.contains(&(t as u32));
            assert_eq!(any, present, "token {t}");
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let p = random_params(tiny_config(SaeVariant::Vanilla, false), 4, 3);
        let acts = Matrix::<f64>::zeros(0, 8);
        assert!(backward_batch(&p, &acts, &[]).is_err());
    }
}
