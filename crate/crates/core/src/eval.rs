//! Reconstruction/sparsity metrics (NMSE, CE-added, L0), Pareto sweeps, and
//! frequency-conditioned reconstruction error.

use std::io::Write;

use serde::Serialize;

use crate::corpus::{NgramTable, TokenCorpus, TokenId};
use crate::error::{Error, Result};
use crate::lm::{
    ce_from_logits, lm_forward, patched_forward, resid_pre_at, sample_window, LmParams, Region,
    TapLocation, Window,
};
use crate::numerics::{Matrix, Rng};
use crate::sae::{SaeConfig, SaeParams, SaeVariant};
use crate::training::{train_sae, BufferConfig, SaeTrainConfig};

/// Reconstruction and prediction-impact metrics for one SAE on one tap.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub nmse: f64,
    pub ce_clean: f64,
    pub ce_patched: f64,
    pub ce_added: f64,
    pub l0_mean: f64,
    pub n_rows: usize,
    /// Rows skipped from the NMSE mean because `||a|| == 0`.
    pub zero_norm_rows: usize,
}

/// Mean over rows of `||a_i - â_i|| / ||a_i||`; zero-norm rows are excluded
/// and counted.
pub fn nmse(a: &Matrix<f32>, a_hat: &Matrix<f32>) -> Result<(f64, usize)> {
    if a.shape() != a_hat.shape() {
        return Err(Error::shape("nmse", a.shape_str(), a_hat.shape_str()));
    }
    if a.rows() == 0 {
        return Err(Error::Argument("nmse on an empty matrix".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for i in 0..a.rows() {
        let (mut err, mut norm) = (0.0f64, 0.0f64);
        for (&x, &y) in a.row(i).iter().zip(a_hat.row(i)) {
            let e = (x - y) as f64;
            err += e * e;
            norm += x as f64 * x as f64;
        }
        if norm == 0.0 {
            skipped += 1;
        } else {
            sum += (err / norm).sqrt();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Argument("nmse: all rows have zero norm".into()));
    }
    Ok((sum / used as f64, skipped))
}

/// Eq-style ratio: `(ce_patched - ce_clean) / ce_clean`.
pub fn ce_added_ratio(ce_patched: f64, ce_clean: f64) -> f64 {
    (ce_patched - ce_clean) / ce_clean
}

/// Mean count of strictly positive entries per row.
pub fn l0(features: &Matrix<f32>) -> f64 {
    if features.rows() == 0 {
        return 0.0;
    }
    let nz: usize = (0..features.rows())
        .map(|i| features.row(i).iter().filter(|&&v| v > 0.0).count())
        .sum();
    nz as f64 / features.rows() as f64
}

fn eval_windows(
    corpus: &TokenCorpus,
    ctx_len: usize,
    n_prompts: usize,
    rng: &mut Rng,
) -> Result<Vec<Window>> {
    (0..n_prompts)
        .map(|_| sample_window(corpus, ctx_len, Region::Heldout, rng))
        .collect()
}

/// Evaluate an SAE by patching its reconstructions into the residual stream.
///
/// CE_clean is the model's own next-token cross-entropy; CE_patched replaces
/// tap rows 1..N-1 with their reconstructions (the BOS row passes through
/// unpatched). NMSE and L0 are measured over the same rows.
pub fn eval_sae(
    lm: &LmParams<f32>,
    sae: &SaeParams<f32>,
    corpus: &TokenCorpus,
    p: TapLocation,
    ctx_len: usize,
    n_prompts: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    eval_inner(lm, Some(sae), corpus, p, ctx_len, n_prompts, rng)
}

/// Patch with the clean taps themselves; ce_added is exactly 0. Useful as a
/// pipeline sanity check.
pub fn eval_identity_patch(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    p: TapLocation,
    ctx_len: usize,
    n_prompts: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    eval_inner(lm, None, corpus, p, ctx_len, n_prompts, rng)
}

fn eval_inner(
    lm: &LmParams<f32>,
    sae: Option<&SaeParams<f32>>,
    corpus: &TokenCorpus,
    p: TapLocation,
    ctx_len: usize,
    n_prompts: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    p.validate(&lm.config)?;
    if n_prompts == 0 {
        return Err(Error::Argument("eval needs at least one prompt".into()));
    }
    let windows = eval_windows(corpus, ctx_len, n_prompts, rng)?;
    let mut ce_clean_sum = 0.0;
    let mut ce_patched_sum = 0.0;
    let mut acts_all: Vec<f32> = Vec::new();
    let mut recon_all: Vec<f32> = Vec::new();
    let mut l0_sum = 0.0;
    let mut n_rows = 0usize;
    let d = lm.config.d_model;

    for w in &windows {
        let cache = lm_forward(lm, &w.tokens)?;
        ce_clean_sum += ce_from_logits(&cache.logits, &w.targets)?;
        let taps = &cache.taps[p.0];
        let mut replacement = taps.clone();
        for i in 1..w.tokens.len() {
            let a = taps.row(i);
            let recon = match sae {
                Some(sae) => {
                    let f = sae.encode(a)?;
                    l0_sum += f.nonzero_count() as f64;
                    sae.decode(&f, sae.config.tokenized.then_some(w.tokens[i]))?
                }
                None => a.to_vec(),
            };
            acts_all.extend_from_slice(a);
            recon_all.extend_from_slice(&recon);
            replacement.row_mut(i).copy_from_slice(&recon);
            n_rows += 1;
        }
        let patched_logits = patched_forward(lm, &w.tokens, p, &replacement)?;
        ce_patched_sum += ce_from_logits(&patched_logits, &w.targets)?;
    }

    let ce_clean = ce_clean_sum / windows.len() as f64;
    let ce_patched = ce_patched_sum / windows.len() as f64;
    let a = Matrix::from_vec(n_rows, d, acts_all)?;
    let ahat = Matrix::from_vec(n_rows, d, recon_all)?;
    let (nmse_val, zero_norm_rows) = nmse(&a, &ahat)?;
    Ok(EvalReport {
        nmse: nmse_val,
        ce_clean,
        ce_patched,
        ce_added: ce_added_ratio(ce_patched, ce_clean),
        l0_mean: l0_sum / n_rows as f64,
        n_rows,
        zero_norm_rows,
    })
}

// --- Pareto sweeps -----------------------------------------------------------

/// Sweep knob: λ values for vanilla SAEs, k values for top-k.
#[derive(Debug, Clone)]
pub enum ParetoGrid {
    Lambda(Vec<f64>),
    K(Vec<usize>),
}

impl ParetoGrid {
    pub fn len(&self) -> usize {
        match self {
            ParetoGrid::Lambda(v) => v.len(),
            ParetoGrid::K(v) => v.len(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParetoRow {
    pub variant: String,
    pub tokenized: bool,
    /// λ or k, as a real.
    pub knob: f64,
    pub l0: f64,
    pub nmse: f64,
    pub ce_added: f64,
}

pub fn write_pareto_csv<W: Write>(rows: &[ParetoRow], mut w: W) -> Result<()> {
    writeln!(w, "variant,tokenized,knob,l0,nmse,ce_added")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.variant, r.tokenized, r.knob, r.l0, r.nmse, r.ce_added
        )?;
    }
    Ok(())
}

/// Train one plain and one tokenized SAE per grid point (identical seeds and
/// steps) and evaluate each on the held-out slice. Rows are ordered by grid
/// index, plain before tokenized.
#[allow(clippy::too_many_arguments)]
pub fn pareto_sweep(
    lm: &LmParams<f32>,
    corpus: &TokenCorpus,
    base_cfg: &SaeConfig,
    grid: &ParetoGrid,
    buf_cfg: &BufferConfig,
    train_cfg: &SaeTrainConfig,
    p: TapLocation,
    eval_prompts: usize,
    seed: u64,
) -> Result<Vec<ParetoRow>> {
    if grid.is_empty() {
        return Err(Error::Argument("pareto grid is empty".into()));
    }
    let mut rows = Vec::new();
    let n = grid.len();
    for gi in 0..n {
        for tokenized in [false, true] {
            let mut cfg = base_cfg.clone();
            cfg.tokenized = tokenized;
            let knob = match grid {
                ParetoGrid::Lambda(ls) => {
                    cfg.variant = SaeVariant::Vanilla;
                    cfg.lambda = ls[gi];
                    ls[gi]
                }
                ParetoGrid::K(ks) => {
                    cfg.variant = SaeVariant::TopK;
                    cfg.k = ks[gi];
                    ks[gi] as f64
                }
            };
            let (sae, _log) = train_sae(
                lm,
                corpus,
                &cfg,
                buf_cfg,
                train_cfg,
                p,
                &mut Rng::seed_from(seed),
            )
            .map_err(|e| {
                Error::Argument(format!("pareto point {gi} (knob {knob}) failed: {e}"))
            })?;
            let report = eval_sae(
                lm,
                &sae,
                corpus,
                p,
                buf_cfg.ctx_len,
                eval_prompts,
                &mut Rng::seed_from(seed ^ 0x0e7a_15ee),
            )?;
            rows.push(ParetoRow {
                variant: cfg.variant.to_string(),
                tokenized,
                knob,
                l0: report.l0_mean,
                nmse: report.nmse,
                ce_added: report.ce_added,
            });
        }
    }
    Ok(rows)
}

// --- frequency-conditioned reconstruction ------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MseFreqRow {
    /// Space-joined token ids.
    pub gram: String,
    pub rel_freq: f64,
    pub recon_mse: f64,
}

pub fn write_mse_freq_csv<W: Write>(rows: &[MseFreqRow], mut w: W) -> Result<()> {
    writeln!(w, "gram,rel_freq,recon_mse")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.gram, r.rel_freq, r.recon_mse)?;
    }
    Ok(())
}

/// For the top-M grams of the table, reconstruct `A^p([BOS] ++ gram)`'s last
/// row with the SAE and record the mean squared error per dimension.
/// Returns the rows plus the count of grams skipped for out-of-vocab ids.
pub fn mse_vs_frequency(
    lm: &LmParams<f32>,
    sae: &SaeParams<f32>,
    table: &NgramTable,
    p: TapLocation,
    top_m: usize,
) -> Result<(Vec<MseFreqRow>, usize)> {
    if table.n != 1 && table.n != 2 {
        return Err(Error::Argument(format!(
            "mse_vs_frequency expects a 1- or 2-gram table, got n = {}",
            table.n
        )));
    }
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let entries = table.sorted_entries();
    for (gram, count) in entries.into_iter().take(top_m) {
        if gram.iter().any(|&t| t as usize >= lm.config.vocab_size) {
            skipped += 1;
            continue;
        }
        let mut seq = Vec::with_capacity(gram.len() + 1);
        seq.push(crate::corpus::Vocab::BOS);
        seq.extend_from_slice(gram);
        let taps = resid_pre_at(lm, &seq, p)?;
        let a = taps.row(taps.rows() - 1);
        let t = *gram.last().expect("grams are non-empty") as TokenId;
        let recon = sae.reconstruct(a, sae.config.tokenized.then_some(t))?;
        let mse = a
            .iter()
            .zip(&recon)
            .map(|(&x, &y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            / a.len() as f64;
        rows.push(MseFreqRow {
            gram: gram
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            rel_freq: count as f64 / table.total as f64,
            recon_mse: mse,
        });
    }
    Ok((rows, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_ngrams, gen_corpus, CorpusConfig};
    use crate::lm::LmConfig;
    use crate::sae::init_sae;

    fn m(rows: usize, cols: usize, v: &[f32]) -> Matrix<f32> {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn nmse_identity_zero_and_hand_case() {
        let a = m(2, 2, &[3.0, 4.0, 1.0, 0.0]);
        assert_eq!(nmse(&a, &a).unwrap(), (0.0, 0));
        let zero = Matrix::zeros(2, 2);
        assert_eq!(nmse(&a, &zero).unwrap(), (1.0, 0));

        // a = (3,4), â = (0,4): ||(3,0)|| / ||(3,4)|| = 3/5.
        let a1 = m(1, 2, &[3.0, 4.0]);
        let ahat = m(1, 2, &[0.0, 4.0]);
        let (v, _) = nmse(&a1, &ahat).unwrap();
        assert!((v - 0.6).abs() < 1e-7);
    }

    #[test]
    fn nmse_excludes_zero_norm_rows_with_count() {
        let a = m(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let ahat = m(2, 2, &[1.0, 1.0, 3.0, 4.0]);
        let (v, skipped) = nmse(&a, &ahat).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn nmse_is_scale_equivariant_in_the_error() {
        let a = m(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.25, -1.0]);
        for c in [0.5f32, -0.25, 2.0] {
            let mut ahat = a.clone();
            ahat.scale(1.0 + c);
            let (v, _) = nmse(&a, &ahat).unwrap();
            assert!((v - c.abs() as f64).abs() < 1e-6, "c={c}: {v}");
        }
    }

    #[test]
    fn ce_added_arithmetic() {
        assert_eq!(ce_added_ratio(2.0 * 1.7, 1.7), 1.0);
        assert_eq!(ce_added_ratio(1.7, 1.7), 0.0);
    }

    #[test]
    fn l0_hand_cases() {
        assert_eq!(l0(&Matrix::zeros(3, 4)), 0.0);
        let f = m(2, 3, &[0.0, 1.0, 2.0, 0.0, 0.0, 3.0]);
        assert_eq!(l0(&f), 1.5);
    }

    fn setup() -> (LmParams<f32>, TokenCorpus) {
        let lm_cfg = LmConfig {
            vocab_size: 16,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_mlp: 16,
            ctx_len: 8,
        };
        let lm = LmParams::init(lm_cfg, &mut Rng::seed_from(3)).unwrap();
        let corpus = gen_corpus(&CorpusConfig {
            vocab_size: 16,
            zipf_exponent: 1.1,
            motifs: vec![],
            length: 8000,
            seed: 5,
        })
        .unwrap();
        (lm, corpus)
    }

    #[test]
    fn identity_patch_has_exactly_zero_ce_added() {
        let (lm, corpus) = setup();
        let report = eval_identity_patch(
            &lm,
            &corpus,
            TapLocation(1),
            8,
            4,
            &mut Rng::seed_from(1),
        )
        .unwrap();
        assert_eq!(report.ce_added, 0.0);
        assert_eq!(report.ce_clean, report.ce_patched);
        assert_eq!(report.nmse, 0.0);
    }

    #[test]
    fn eval_does_not_mutate_parameters() {
        let (lm, corpus) = setup();
        let cfg = SaeConfig {
            d_model: 8,
            expansion: 2,
            k: 3,
            ..SaeConfig::default()
        };
        let sae = init_sae::<f32>(&cfg, None, None, &mut Rng::seed_from(2)).unwrap();
        let sae_before = sae.clone();
        let lm_before = lm.clone();
        eval_sae(&lm, &sae, &corpus, TapLocation(1), 8, 4, &mut Rng::seed_from(1)).unwrap();
        assert_eq!(sae, sae_before);
        assert_eq!(lm, lm_before);
    }

    #[test]
    fn eval_report_parts_are_consistent() {
        let (lm, corpus) = setup();
        let cfg = SaeConfig {
            d_model: 8,
            expansion: 2,
            k: 3,
            ..SaeConfig::default()
        };
        let sae = init_sae::<f32>(&cfg, None, None, &mut Rng::seed_from(2)).unwrap();
        let r = eval_sae(&lm, &sae, &corpus, TapLocation(1), 8, 4, &mut Rng::seed_from(1))
            .unwrap();
        let expect = ce_added_ratio(r.ce_patched, r.ce_clean);
        assert!((r.ce_added - expect).abs() < 1e-9);
        assert!(r.l0_mean <= 3.0 + 1e-9, "top-k bound violated: {}", r.l0_mean);
    }

    #[test]
    fn pareto_grid_of_one_yields_two_rows() {
        let (lm, corpus) = setup();
        let base = SaeConfig {
            d_model: 8,
            expansion: 2,
            k: 3,
            ..SaeConfig::default()
        };
        let buf = BufferConfig {
            buffer_rows: 256,
            batch_rows: 32,
            ctx_len: 8,
            refill_threshold: 0.5,
            include_bos: false,
        };
        let tcfg = SaeTrainConfig { steps: 5, lr0: 1e-3, log_every: 2, ..Default::default() };
        let rows = pareto_sweep(
            &lm,
            &corpus,
            &base,
            &ParetoGrid::K(vec![3]),
            &buf,
            &tcfg,
            TapLocation(1),
            3,
            42,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(!rows[0].tokenized && rows[1].tokenized);
        assert_eq!(rows[0].knob, 3.0);
    }

    #[test]
    fn mse_vs_frequency_row_count_and_bounds() {
        let (lm, corpus) = setup();
        let cfg = SaeConfig {
            d_model: 8,
            expansion: 2,
            k: 3,
            ..SaeConfig::default()
        };
        let sae = init_sae::<f32>(&cfg, None, None, &mut Rng::seed_from(2)).unwrap();
        let table = count_ngrams(&corpus, 1).unwrap();
        let table_size = table.counts.len();
        let (rows, skipped) =
            mse_vs_frequency(&lm, &sae, &table, TapLocation(1), 1000).unwrap();
        assert_eq!(rows.len(), table_size.min(1000));
        assert_eq!(skipped, 0);
        let (rows, _) = mse_vs_frequency(&lm, &sae, &table, TapLocation(1), 5).unwrap();
        assert_eq!(rows.len(), 5);

        let tri = count_ngrams(&corpus, 3).unwrap();
        assert!(mse_vs_frequency(&lm, &sae, &tri, TapLocation(1), 5).is_err());
    }
}
