//! Layered run configuration: a sectioned TOML file with flag overrides.
//! Unknown keys are rejected; every run writes its fully-resolved config
//! next to its outputs so any run is reproducible from its own directory.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tsae_core::corpus::{CorpusConfig, Motif};
use tsae_core::lm::{LmConfig, LmTrainConfig};
use tsae_core::sae::{SaeConfig, SaeVariant};
use tsae_core::training::{BufferConfig, SaeTrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; drives every stochastic stage.
    pub seed: u64,
    pub corpus: CorpusSection,
    pub lm: LmSection,
    pub lm_train: LmTrainSection,
    pub sae: SaeSection,
    pub buffer: BufferSection,
    pub sae_train: SaeTrainSection,
    pub eval: EvalSection,
    pub pareto: ParetoSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Semicolon-separated motifs: "17 63:0.02; 25 77 140:0.012".
    pub motifs: String,
    pub length: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let d = CorpusConfig::default();
        CorpusSection {
            vocab_size: d.vocab_size,
            zipf_exponent: d.zipf_exponent,
            motifs: motifs_to_string(&d.motifs),
            length: d.length,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    pub ctx_len: usize,
}

impl Default for LmSection {
    fn default() -> Self {
        let d = LmConfig::default();
        LmSection {
            d_model: d.d_model,
            n_layers: d.n_layers,
            n_heads: d.n_heads,
            d_mlp: d.d_mlp,
            ctx_len: d.ctx_len,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmTrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub log_every: usize,
}

impl Default for LmTrainSection {
    fn default() -> Self {
        let d = LmTrainConfig::default();
        LmTrainSection {
            steps: d.steps,
            batch: d.batch,
            lr: d.lr,
            log_every: d.log_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaeSection {
    pub expansion: usize,
    /// "vanilla" or "topk".
    pub variant: String,
    pub k: usize,
    pub lambda: f64,
    pub tokenized: bool,
    pub alpha: f64,
    pub lookup_lr_multiplier: f64,
    /// 0 disables truncation.
    pub lookup_truncation: usize,
    /// Residual tap location (stream entering this layer).
    pub tap: usize,
}

impl Default for SaeSection {
    fn default() -> Self {
        let d = SaeConfig::default();
        SaeSection {
            expansion: d.expansion,
            variant: d.variant.to_string(),
            k: d.k,
            lambda: d.lambda,
            tokenized: d.tokenized,
            alpha: d.alpha,
            lookup_lr_multiplier: d.lookup_lr_multiplier,
            lookup_truncation: 0,
            tap: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferSection {
    pub buffer_rows: usize,
    pub batch_rows: usize,
    pub ctx_len: usize,
    pub refill_threshold: f64,
    pub include_bos: bool,
}

impl Default for BufferSection {
    fn default() -> Self {
        let d = BufferConfig::default();
        BufferSection {
            buffer_rows: d.buffer_rows,
            batch_rows: d.batch_rows,
            ctx_len: d.ctx_len,
            refill_threshold: d.refill_threshold,
            include_bos: d.include_bos,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaeTrainSection {
    pub steps: usize,
    pub lr0: f64,
    pub log_every: usize,
}

impl Default for SaeTrainSection {
    fn default() -> Self {
        let d = SaeTrainConfig::default();
        SaeTrainSection {
            steps: d.steps,
            lr0: d.lr0,
            log_every: d.log_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub prompts: usize,
    pub ctx_len: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            prompts: 64,
            ctx_len: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParetoSection {
    /// Space-separated λ grid for vanilla sweeps.
    pub lambda_grid: String,
    /// Space-separated k grid for top-k sweeps.
    pub k_grid: String,
}

impl Default for ParetoSection {
    fn default() -> Self {
        ParetoSection {
            // Six log-spaced points across 1e-4..1e-2.
            lambda_grid: "1e-4 2.5e-4 6.3e-4 1.6e-3 4e-3 1e-2".into(),
            k_grid: "4 8 16 32".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub strong_threshold: f64,
    pub valid_floor: f64,
    pub cosine_cut: f64,
    pub dead_threshold: f64,
    /// Top-M grams for mse-vs-freq.
    pub top_m: usize,
    pub patch_n_max: usize,
    /// Held-out prompts used by the scans.
    pub prompts: usize,
    /// Held-out activation rows used for liveness/correlation scans.
    pub eval_rows: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            strong_threshold: tsae_core::analysis::STRONG_ACTIVATION_THRESHOLD,
            valid_floor: tsae_core::analysis::VALID_FEATURE_FLOOR,
            cosine_cut: tsae_core::analysis::ENC_DEC_COSINE_CUT,
            dead_threshold: tsae_core::analysis::DEAD_ACT_THRESHOLD,
            top_m: 256,
            patch_n_max: 8,
            prompts: 48,
            eval_rows: 4096,
        }
    }
}

pub fn motifs_to_string(motifs: &[Motif]) -> String {
    motifs
        .iter()
        .map(|m| {
            let toks = m
                .tokens
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            format!("{toks}:{}", m.boost)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn parse_motifs(s: &str) -> Result<Vec<Motif>> {
    let mut out = Vec::new();
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (toks, boost) = part
            .rsplit_once(':')
            .with_context(|| format!("motif '{part}' is missing ':boost'"))?;
        let tokens = toks
            .split_whitespace()
            .map(|t| t.parse().with_context(|| format!("bad motif token '{t}'")))
            .collect::<Result<Vec<u32>>>()?;
        if tokens.is_empty() {
            bail!("motif '{part}' has no tokens");
        }
        let boost: f64 = boost
            .trim()
            .parse()
            .with_context(|| format!("bad motif boost in '{part}'"))?;
        out.push(Motif { tokens, boost });
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn corpus_config(&self) -> Result<CorpusConfig> {
        Ok(CorpusConfig {
            vocab_size: self.corpus.vocab_size,
            zipf_exponent: self.corpus.zipf_exponent,
            motifs: parse_motifs(&self.corpus.motifs)?,
            length: self.corpus.length,
            seed: self.seed,
        })
    }

    pub fn lm_config(&self, vocab_size: usize) -> LmConfig {
        LmConfig {
            vocab_size,
            d_model: self.lm.d_model,
            n_layers: self.lm.n_layers,
            n_heads: self.lm.n_heads,
            d_mlp: self.lm.d_mlp,
            ctx_len: self.lm.ctx_len,
        }
    }

    pub fn lm_train_config(&self) -> LmTrainConfig {
        LmTrainConfig {
            steps: self.lm_train.steps,
            batch: self.lm_train.batch,
            lr: self.lm_train.lr,
            log_every: self.lm_train.log_every,
        }
    }

    pub fn sae_config(&self, d_model: usize) -> Result<SaeConfig> {
        let variant = match self.sae.variant.as_str() {
            "vanilla" => SaeVariant::Vanilla,
            "topk" => SaeVariant::TopK,
            other => bail!("unknown SAE variant '{other}' (expected vanilla|topk)"),
        };
        Ok(SaeConfig {
            d_model,
            expansion: self.sae.expansion,
            variant,
            k: self.sae.k,
            lambda: self.sae.lambda,
            tokenized: self.sae.tokenized,
            alpha: self.sae.alpha,
            lookup_lr_multiplier: self.sae.lookup_lr_multiplier,
            lookup_truncation: (self.sae.lookup_truncation > 0)
                .then_some(self.sae.lookup_truncation),
        })
    }

    pub fn buffer_config(&self) -> BufferConfig {
        BufferConfig {
            buffer_rows: self.buffer.buffer_rows,
            batch_rows: self.buffer.batch_rows,
            ctx_len: self.buffer.ctx_len,
            refill_threshold: self.buffer.refill_threshold,
            include_bos: self.buffer.include_bos,
        }
    }

    pub fn sae_train_config(&self) -> SaeTrainConfig {
        SaeTrainConfig {
            steps: self.sae_train.steps,
            lr0: self.sae_train.lr0,
            log_every: self.sae_train.log_every,
            ..Default::default()
        }
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        self.pareto
            .lambda_grid
            .split_whitespace()
            .map(|s| s.parse().with_context(|| format!("bad lambda '{s}'")))
            .collect()
    }

    pub fn k_grid(&self) -> Result<Vec<usize>> {
        self.pareto
            .k_grid
            .split_whitespace()
            .map(|s| s.parse().with_context(|| format!("bad k '{s}'")))
            .collect()
    }
}
