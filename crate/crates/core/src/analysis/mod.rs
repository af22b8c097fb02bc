//! Feature-level diagnostics: unigram activation scans, dead-feature
//! detection, suffix-n-gram feature complexity, context-locality patching
//! curves, final-token subspace statistics, and activation/cosine coupling.
//!
//! All scans are pure reads over parameters and deterministic given inputs.
//! Each report exports a CSV (one row per feature or per n) and a JSON
//! summary of its aggregates.

mod context;
mod features;

pub use context::{
    final_token_closeness, patching_curve, FinalTokenReport, PatchingCurve,
};
pub use features::{
    activation_vs_cossim, complexity_scan, dead_feature_scan, encoder_unigram_similarity,
    min_suffix_ngram, unigram_activation_scan, ActCosReport, ComplexityReport, DeadFeatureReport,
    EncUnigramReport, MinSuffix, UnigramScanReport,
};

/// Default "strongly activated" feature threshold.
pub const STRONG_ACTIVATION_THRESHOLD: f64 = 5.0;
/// Features must reach this activation somewhere on the eval set to be
/// considered valid for complexity analysis.
pub const VALID_FEATURE_FLOOR: f64 = 10.0;
/// Encoder/decoder cosine above which a feature is flagged dead post hoc.
pub const ENC_DEC_COSINE_CUT: f64 = 0.85;
/// Max-activation floor below which a feature is empirically dead.
pub const DEAD_ACT_THRESHOLD: f64 = 3.0;

/// Published reference fractions for a 12-layer model's layer-8 residual
/// dictionary, kept as documentation constants for comparison; they are not
/// targets for the toy setup.
pub mod reference {
    /// Fraction of features strongly activated by at least one unigram.
    pub const LARGE_MODEL_UNIGRAM_ACTIVATED_FRACTION: f64 = 0.76;
    /// Fraction whose top test activation matched their top unigram.
    pub const LARGE_MODEL_TOP_UNIGRAM_MATCH_FRACTION: f64 = 0.39;
    /// Fraction whose top test activation matched any strong unigram.
    pub const LARGE_MODEL_ANY_UNIGRAM_MATCH_FRACTION: f64 = 0.66;
}

pub(crate) fn cosine_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        ab += x as f64 * y as f64;
        aa += x as f64 * x as f64;
        bb += y as f64 * y as f64;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}
