//! `tsae` — pipeline driver: corpus synthesis, toy-LM training, SAE
//! training, evaluation sweeps, and feature-analysis reports.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid config/usage,
//! 3 missing upstream artifact, 4 training divergence.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "tsae", version, about = "Tokenized sparse auto-encoder experiments on a toy transformer")]
struct Cli {
    /// Sectioned TOML config; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed driving every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Force strictly serial execution. Execution is serial and
    /// deterministic by construction, so this is an accepted no-op.
    #[arg(long, global = true)]
    serial: bool,

    /// Verify the run directory's manifest hashes after writing outputs.
    #[arg(long, global = true)]
    self_check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AnalyzeKind {
    UnigramScan,
    DeadFeatures,
    Complexity,
    Patching,
    FinalToken,
    ActCossim,
    EncUnigram,
    MseVsFreq,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its n-gram tables.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy LM on a corpus.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override [lm_train].steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train an SAE against a tap of a trained LM.
    TrainSae {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override [sae].tokenized.
        #[arg(long)]
        tokenized: Option<bool>,
        /// Override [sae].variant (vanilla|topk).
        #[arg(long)]
        variant: Option<String>,
        /// Override [sae].k.
        #[arg(long)]
        k: Option<usize>,
        /// Override [sae].lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Override [sae].tap.
        #[arg(long)]
        tap: Option<usize>,
        /// Override [sae_train].steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate an SAE: NMSE, CE-added, L0 on held-out prompts.
    EvalSae {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// SAE checkpoint; omitted when --identity-patch is set.
        #[arg(long)]
        sae: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Patch with the clean activations themselves (sanity mode).
        #[arg(long)]
        identity_patch: bool,
        #[arg(long)]
        tap: Option<usize>,
    },
    /// Sparsity/reconstruction Pareto sweep, plain vs tokenized.
    Pareto {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sweep variant (vanilla|topk); sweeps λ or k respectively.
        #[arg(long, default_value = "topk")]
        variant: String,
        #[arg(long)]
        tap: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Feature and context analyses; each kind writes CSV + JSON summary.
    Analyze {
        #[arg(value_enum)]
        kind: AnalyzeKind,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// Required by SAE-based kinds.
        #[arg(long)]
        sae: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tap: Option<usize>,
    },
    /// Re-hash a run directory's outputs against its manifest.
    SelfCheck {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code_for(&err))
        }
    }
}
