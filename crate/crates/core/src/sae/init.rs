//! Balanced initialization and the lookup-balance estimator.

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, Real, Rng};

use super::{SaeConfig, SaeParams};

/// Initialize an SAE.
///
/// Decoder rows are drawn from a symmetric distribution and normalized to
/// unit L2 norm. Both encoder and lookup approximate an identity and are
/// balanced by α: `W_enc = (1-α)·W_decᵀ` and `W_lookup[t] = α·unigram[t]`
/// when tokenized, plain `W_enc = W_decᵀ` otherwise. Biases start at zero.
///
/// With `lookup_truncation = Some(m)`, only the m most frequent tokens
/// (by `token_counts`, ties toward lower ids) receive nonzero lookup rows.
pub fn init_sae<T: Real>(
    cfg: &SaeConfig,
    unigram_table: Option<&Matrix<T>>,
    token_counts: Option<&[u64]>,
    rng: &mut Rng,
) -> Result<SaeParams<T>> {
    cfg.validate()?;
    let d = cfg.d_model;
    let n_f = cfg.n_features();

    if cfg.tokenized && unigram_table.is_none() {
        return Err(Error::Argument(
            "tokenized init requires the unigram activation table".into(),
        ));
    }
    if !cfg.tokenized && unigram_table.is_some() {
        return Err(Error::Argument(
            "unigram table provided for a non-tokenized SAE".into(),
        ));
    }

    let mut w_dec = Matrix::zeros(n_f, d);
    for j in 0..n_f {
        let row = w_dec.row_mut(j);
        for v in row.iter_mut() {
            *v = T::of(rng.normal_f64());
        }
        let norm = dot(row, row).sqrt();
        for v in row.iter_mut() {
            *v /= norm;
        }
    }

    let enc_scale = if cfg.tokenized {
        T::of(1.0 - cfg.alpha)
    } else {
        T::ONE
    };
    let mut w_enc = w_dec.transpose();
    w_enc.scale(enc_scale);

    let w_lookup = match (cfg.tokenized, unigram_table) {
        (true, Some(table)) => {
            if table.cols() != d {
                return Err(Error::shape("init_sae unigram table", d, table.cols()));
            }
            let mut lookup = table.clone();
            lookup.scale(T::of(cfg.alpha));
            if let Some(m) = cfg.lookup_truncation {
                let keep = top_m_mask(cfg, token_counts, table.rows(), m)?;
                for t in 0..lookup.rows() {
                    if !keep[t] {
                        lookup.row_mut(t).iter_mut().for_each(|v| *v = T::ZERO);
                    }
                }
            }
            Some(lookup)
        }
        _ => None,
    };

    Ok(SaeParams {
        config: cfg.clone(),
        w_enc,
        b_enc: Matrix::zeros(1, n_f),
        w_dec,
        b_dec: Matrix::zeros(1, d),
        w_lookup,
    })
}

/// Boolean keep-mask for the m most frequent tokens.
pub(crate) fn top_m_mask(
    _cfg: &SaeConfig,
    token_counts: Option<&[u64]>,
    vocab: usize,
    m: usize,
) -> Result<Vec<bool>> {
    let counts = token_counts.ok_or_else(|| {
        Error::Argument("lookup truncation requires token frequency counts".into())
    })?;
    if counts.len() != vocab {
        return Err(Error::shape("token_counts", vocab, counts.len()));
    }
    let mut order: Vec<usize> = (0..vocab).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut keep = vec![false; vocab];
    for &t in order.iter().take(m) {
        keep[t] = true;
    }
    Ok(keep)
}

/// Mean per-row projection coefficient of `w_lookup` onto `w_original`:
/// `(1/n) Σ (orig_i · lookup_i) / ||orig_i||²` over rows with nonzero
/// original. During training, `w_original` is the unscaled unigram table the
/// initialization was built from, so the estimate starts at the configured α.
pub fn estimate_alpha<T: Real>(w_lookup: &Matrix<T>, w_original: &Matrix<T>) -> Result<f64> {
    if w_lookup.shape() != w_original.shape() {
        return Err(Error::shape(
            "estimate_alpha",
            w_lookup.shape_str(),
            w_original.shape_str(),
        ));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..w_original.rows() {
        let orig = w_original.row(i);
        let denom = dot(orig, orig).to_f64();
        if denom > 0.0 {
            sum += dot(orig, w_lookup.row(i)).to_f64() / denom;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Undefined(
            "estimate_alpha: every original row is zero".into(),
        ));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::test_support::tiny_config;
    use crate::sae::SaeVariant;

    fn unigrams(vocab: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = Rng::seed_from(seed);
        let mut m = Matrix::zeros(vocab, d);
        for v in m.data_mut() {
            *v = rng.normal_f64();
        }
        m
    }

    #[test]
    fn alpha_zero_and_one_boundaries() {
        let table = unigrams(6, 8, 1);

        let mut cfg = tiny_config(SaeVariant::Vanilla, true);
        cfg.alpha = 0.0;
        let p = init_sae(&cfg, Some(&table), None, &mut Rng::seed_from(2)).unwrap();
        assert!(p.w_lookup.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        let wt = p.w_dec.transpose();
        assert_eq!(p.w_enc, wt);

        cfg.alpha = 1.0;
        let p = init_sae(&cfg, Some(&table), None, &mut Rng::seed_from(2)).unwrap();
        assert!(p.w_enc.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.w_lookup.as_ref().unwrap(), &table);
    }

    #[test]
    fn default_alpha_halves_the_table_exactly() {
        let table = unigrams(6, 8, 3);
        let cfg = tiny_config(SaeVariant::TopK, true);
        assert_eq!(cfg.alpha, 0.5);
        let p = init_sae(&cfg, Some(&table), None, &mut Rng::seed_from(4)).unwrap();
        let lookup = p.w_lookup.as_ref().unwrap();
        for (got, want) in lookup.data().iter().zip(table.data()) {
            assert_eq!(*got, 0.5 * want);
        }
    }

    #[test]
    fn decoder_rows_are_unit_norm() {
        let cfg = tiny_config(SaeVariant::Vanilla, false);
        let p = init_sae::<f64>(&cfg, None, None, &mut Rng::seed_from(5)).unwrap();
        for j in 0..p.n_features() {
            assert!((p.w_dec.row_norm(j) - 1.0).abs() < 1e-12);
        }
        assert!(p.b_enc.data().iter().all(|&v| v == 0.0));
        assert!(p.b_dec.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tokenized_without_table_is_an_argument_error() {
        let cfg = tiny_config(SaeVariant::Vanilla, true);
        assert!(matches!(
            init_sae::<f64>(&cfg, None, None, &mut Rng::seed_from(1)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn truncated_lookup_keeps_only_most_frequent_tokens() {
        let table = unigrams(6, 8, 6);
        let mut cfg = tiny_config(SaeVariant::TopK, true);
        cfg.lookup_truncation = Some(2);
        let counts = [5u64, 100, 7, 100, 1, 2];
        let p = init_sae(&cfg, Some(&table), Some(&counts), &mut Rng::seed_from(7)).unwrap();
        let lookup = p.w_lookup.as_ref().unwrap();
        // Tokens 1 and 3 tie at 100; both kept (m = 2).
        for t in 0..6 {
            let nonzero = lookup.row(t).iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, t == 1 || t == 3, "token {t}");
        }
        // Truncation without counts is an error.
        assert!(init_sae::<f64>(&cfg, Some(&table), None, &mut Rng::seed_from(7)).is_err());
    }

    #[test]
    fn estimate_alpha_projection_cases() {
        let orig = unigrams(5, 8, 8);
        assert_eq!(estimate_alpha(&orig, &orig).unwrap(), 1.0);

        let mut doubled = orig.clone();
        doubled.scale(2.0);
        assert!((estimate_alpha(&doubled, &orig).unwrap() - 2.0).abs() < 1e-12);

        // Rows orthogonal to the originals: swap a coordinate pair with a
        // sign flip, guaranteeing orthogonality in 2-d planes.
        let mut ortho = Matrix::zeros(5, 8);
        for i in 0..5 {
            for j in 0..4 {
                let a = orig.get(i, 2 * j);
                let b = orig.get(i, 2 * j + 1);
                ortho.set(i, 2 * j, -b);
                ortho.set(i, 2 * j + 1, a);
            }
        }
        assert!(estimate_alpha(&ortho, &orig).unwrap().abs() < 1e-12);

        let zeros = Matrix::<f64>::zeros(5, 8);
        assert!(matches!(
            estimate_alpha(&orig, &zeros),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn init_alpha_roundtrips_through_the_estimator() {
        let table = unigrams(6, 8, 9);
        for alpha in [0.25, 0.5, 0.9] {
            let mut cfg = tiny_config(SaeVariant::TopK, true);
            cfg.alpha = alpha;
            let p = init_sae(&cfg, Some(&table), None, &mut Rng::seed_from(10)).unwrap();
            let got = estimate_alpha(p.w_lookup.as_ref().unwrap(), &table).unwrap();
            assert!((got - alpha).abs() < 1e-12, "alpha {alpha} -> {got}");
        }
    }
}
