//! Subcommand implementations: each run writes its outputs, the fully
//! resolved config, and a content-hash manifest into its `--out` directory.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use tsae_core::analysis as ana;
use tsae_core::corpus::{count_ngrams, gen_corpus, load_corpus, save_corpus, TokenCorpus};
use tsae_core::error::Error as CoreError;
use tsae_core::eval::{
    eval_identity_patch, eval_sae, mse_vs_frequency, pareto_sweep, write_mse_freq_csv,
    write_pareto_csv, ParetoGrid,
};
use tsae_core::lm::{
    lm_train, load_lm, sample_window, save_lm, unigram_table, LmParams, Region, TapLocation,
};
use tsae_core::numerics::Rng;
use tsae_core::sae::{load_sae, save_sae, SaeParams};
use tsae_core::training::{eval_rows, train_sae};

use crate::config::RunConfig;
use crate::manifest::{verify_manifest, Manifest};
use crate::{AnalyzeKind, Cli, Command};

/// An upstream artifact named on the command line does not exist.
#[derive(Debug)]
pub struct MissingArtifact(pub PathBuf);

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing upstream artifact: {}", self.0.display())
    }
}

impl std::error::Error for MissingArtifact {}

/// Configuration or argument problems discovered after clap parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Training { .. } => 4,
                CoreError::Config(_) | CoreError::Argument(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<MissingArtifact>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<UsageError>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn require_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(anyhow!(MissingArtifact(path.to_path_buf())));
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    if let Some(path) = &cli.config {
        require_exists(path)?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

/// Finish a run: resolved config, manifest, optional hash self-check.
fn seal_run(
    run_dir: &Path,
    cfg: &RunConfig,
    mut manifest: Manifest,
    outputs: &[&str],
    self_check: bool,
) -> Result<()> {
    std::fs::write(run_dir.join("resolved.toml"), cfg.to_toml()?)?;
    for name in outputs {
        manifest.add_output(run_dir, name)?;
    }
    manifest.add_output(run_dir, "resolved.toml")?;
    manifest.write(run_dir)?;
    if self_check {
        verify_manifest(run_dir)?;
        println!("self-check: manifest hashes verified");
    }
    Ok(())
}

fn load_corpus_checked(path: &Path) -> Result<TokenCorpus> {
    require_exists(path)?;
    Ok(load_corpus(path)?)
}

fn load_lm_checked(path: &Path) -> Result<LmParams<f32>> {
    require_exists(path)?;
    Ok(load_lm(path)?)
}

fn load_sae_checked(path: &Path) -> Result<SaeParams<f32>> {
    require_exists(path)?;
    Ok(load_sae(path)?)
}

fn tap_of(cfg: &RunConfig, flag: Option<usize>) -> TapLocation {
    TapLocation(flag.unwrap_or(cfg.sae.tap))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::GenCorpus { ref out } => {
            std::fs::create_dir_all(out)?;
            let ccfg = cfg.corpus_config()?;
            let corpus = gen_corpus(&ccfg).map_err(anyhow::Error::from)?;
            save_corpus(&corpus, &out.join("corpus.tsac"))?;
            for (n, name) in [(1usize, "unigrams.csv"), (2, "bigrams.csv"), (3, "trigrams.csv")] {
                let table = count_ngrams(&corpus, n)?;
                table.write_csv(writer(&out.join(name))?)?;
            }
            let manifest = Manifest::new("gen-corpus", cfg.seed);
            seal_run(
                out,
                &cfg,
                manifest,
                &["corpus.tsac", "unigrams.csv", "bigrams.csv", "trigrams.csv"],
                cli.self_check,
            )?;
            println!("corpus: {} tokens -> {}", corpus.len(), out.display());
            Ok(())
        }

        Command::TrainLm { ref corpus, ref out, steps } => {
            std::fs::create_dir_all(out)?;
            if let Some(s) = steps {
                cfg.lm_train.steps = s;
            }
            let corpus_data = load_corpus_checked(corpus)?;
            let lm_cfg = cfg.lm_config(corpus_data.vocab.size);
            let mut lm = LmParams::init(lm_cfg, &mut Rng::seed_from(cfg.seed))?;
            let log = lm_train(
                &mut lm,
                &corpus_data,
                &cfg.lm_train_config(),
                &mut Rng::seed_from(cfg.seed ^ 0x1a),
            )?;
            save_lm(&lm, &out.join("lm.tslm"))?;
            {
                let mut w = writer(&out.join("lm_train_log.csv"))?;
                use std::io::Write;
                writeln!(w, "step,ce")?;
                for (s, ce) in &log {
                    writeln!(w, "{s},{ce}")?;
                }
            }
            let mut manifest = Manifest::new("train-lm", cfg.seed);
            manifest.add_input(corpus)?;
            seal_run(out, &cfg, manifest, &["lm.tslm", "lm_train_log.csv"], cli.self_check)?;
            println!(
                "lm: {} steps, final ce {:.4} -> {}",
                cfg.lm_train.steps,
                log.last().map(|(_, ce)| *ce).unwrap_or(f64::NAN),
                out.display()
            );
            Ok(())
        }

        Command::TrainSae {
            ref corpus,
            ref lm,
            ref out,
            tokenized,
            ref variant,
            k,
            lambda,
            tap,
            steps,
        } => {
            std::fs::create_dir_all(out)?;
            if let Some(t) = tokenized {
                cfg.sae.tokenized = t;
            }
            if let Some(v) = variant {
                cfg.sae.variant = v.clone();
            }
            if let Some(k) = k {
                cfg.sae.k = k;
            }
            if let Some(l) = lambda {
                cfg.sae.lambda = l;
            }
            if let Some(t) = tap {
                cfg.sae.tap = t;
            }
            if let Some(s) = steps {
                cfg.sae_train.steps = s;
            }
            let corpus_data = load_corpus_checked(corpus)?;
            let lm_params = load_lm_checked(lm)?;
            let sae_cfg = cfg.sae_config(lm_params.config.d_model)?;
            let (sae, log) = train_sae(
                &lm_params,
                &corpus_data,
                &sae_cfg,
                &cfg.buffer_config(),
                &cfg.sae_train_config(),
                TapLocation(cfg.sae.tap),
                &mut Rng::seed_from(cfg.seed ^ 0x5ae),
            )?;
            save_sae(&sae, &out.join("sae.tsae"))?;
            log.write_csv(writer(&out.join("train_log.csv"))?)?;
            let mut manifest = Manifest::new("train-sae", cfg.seed);
            manifest.add_input(corpus)?;
            manifest.add_input(lm)?;
            seal_run(out, &cfg, manifest, &["sae.tsae", "train_log.csv"], cli.self_check)?;
            println!(
                "sae: {} {} steps, final nmse {:.4} -> {}",
                cfg.sae.variant,
                cfg.sae_train.steps,
                log.final_nmse().unwrap_or(f64::NAN),
                out.display()
            );
            Ok(())
        }

        Command::EvalSae {
            ref corpus,
            ref lm,
            ref sae,
            ref out,
            identity_patch,
            tap,
        } => {
            std::fs::create_dir_all(out)?;
            let corpus_data = load_corpus_checked(corpus)?;
            let lm_params = load_lm_checked(lm)?;
            let p = tap_of(&cfg, tap);
            let mut manifest = Manifest::new("eval-sae", cfg.seed);
            manifest.add_input(corpus)?;
            manifest.add_input(lm)?;
            let report = if identity_patch {
                eval_identity_patch(
                    &lm_params,
                    &corpus_data,
                    p,
                    cfg.eval.ctx_len,
                    cfg.eval.prompts,
                    &mut Rng::seed_from(cfg.seed ^ 0xe7a1),
                )?
            } else {
                let sae_path = sae
                    .as_ref()
                    .ok_or_else(|| anyhow!(UsageError("--sae is required unless --identity-patch".into())))?;
                let sae_params = load_sae_checked(sae_path)?;
                manifest.add_input(sae_path)?;
                eval_sae(
                    &lm_params,
                    &sae_params,
                    &corpus_data,
                    p,
                    cfg.eval.ctx_len,
                    cfg.eval.prompts,
                    &mut Rng::seed_from(cfg.seed ^ 0xe7a1),
                )?
            };
            std::fs::write(
                out.join("eval.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            seal_run(out, &cfg, manifest, &["eval.json"], cli.self_check)?;
            println!(
                "eval: nmse {:.4} ce_added {:.6} l0 {:.2} -> {}",
                report.nmse,
                report.ce_added,
                report.l0_mean,
                out.display()
            );
            Ok(())
        }

        Command::Pareto {
            ref corpus,
            ref lm,
            ref out,
            ref variant,
            tap,
            steps,
        } => {
            std::fs::create_dir_all(out)?;
            if let Some(s) = steps {
                cfg.sae_train.steps = s;
            }
            cfg.sae.variant = variant.clone();
            let corpus_data = load_corpus_checked(corpus)?;
            let lm_params = load_lm_checked(lm)?;
            let grid = match variant.as_str() {
                "vanilla" => ParetoGrid::Lambda(cfg.lambda_grid()?),
                "topk" => ParetoGrid::K(cfg.k_grid()?),
                other => bail!(UsageError(format!("unknown variant '{other}'"))),
            };
            let base = cfg.sae_config(lm_params.config.d_model)?;
            let rows = pareto_sweep(
                &lm_params,
                &corpus_data,
                &base,
                &grid,
                &cfg.buffer_config(),
                &cfg.sae_train_config(),
                tap_of(&cfg, tap),
                cfg.eval.prompts,
                cfg.seed,
            )?;
            write_pareto_csv(&rows, writer(&out.join("pareto.csv"))?)?;
            std::fs::write(
                out.join("pareto.json"),
                serde_json::to_string_pretty(&rows)?,
            )?;
            let mut manifest = Manifest::new("pareto", cfg.seed);
            manifest.add_input(corpus)?;
            manifest.add_input(lm)?;
            seal_run(out, &cfg, manifest, &["pareto.csv", "pareto.json"], cli.self_check)?;
            println!("pareto: {} rows -> {}", rows.len(), out.display());
            Ok(())
        }

        Command::Analyze {
            kind,
            ref corpus,
            ref lm,
            ref sae,
            ref out,
            tap,
        } => {
            std::fs::create_dir_all(out)?;
            let corpus_data = load_corpus_checked(corpus)?;
            let lm_params = load_lm_checked(lm)?;
            let p = tap_of(&cfg, tap);
            let mut manifest = Manifest::new(&format!("analyze-{kind:?}"), cfg.seed);
            manifest.add_input(corpus)?;
            manifest.add_input(lm)?;
            let needs_sae = !matches!(kind, AnalyzeKind::Patching | AnalyzeKind::FinalToken);
            let sae_params = if needs_sae {
                let path = sae
                    .as_ref()
                    .ok_or_else(|| anyhow!(UsageError(format!("--sae is required for {kind:?}"))))?;
                let s = load_sae_checked(path)?;
                manifest.add_input(path)?;
                Some(s)
            } else {
                None
            };
            let (csv_name, files) = run_analysis(
                kind,
                &cfg,
                &corpus_data,
                &lm_params,
                sae_params.as_ref(),
                p,
                out,
            )?;
            seal_run(out, &cfg, manifest, &files.iter().map(|s| s.as_str()).collect::<Vec<_>>(), cli.self_check)?;
            println!("analyze {kind:?}: {csv_name} -> {}", out.display());
            Ok(())
        }

        Command::SelfCheck { ref run } => {
            require_exists(&run.join("manifest.json"))?;
            let manifest = verify_manifest(run)?;
            println!(
                "self-check: {} outputs of '{}' verified",
                manifest.outputs.len(),
                manifest.command
            );
            Ok(())
        }
    }
}

fn heldout_prompts(
    corpus: &TokenCorpus,
    ctx_len: usize,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<u32>>> {
    (0..count)
        .map(|_| Ok(sample_window(corpus, ctx_len, Region::Heldout, rng)?.tokens))
        .collect()
}

fn run_analysis(
    kind: AnalyzeKind,
    cfg: &RunConfig,
    corpus: &TokenCorpus,
    lm: &LmParams<f32>,
    sae: Option<&SaeParams<f32>>,
    p: TapLocation,
    out: &Path,
) -> Result<(String, Vec<String>)> {
    let a = &cfg.analysis;
    let mut rng = Rng::seed_from(cfg.seed ^ 0xa11a);
    let (csv, summary): (String, serde_json::Value) = match kind {
        AnalyzeKind::UnigramScan => {
            let sae = sae.expect("checked by caller");
            let (acts, toks) = eval_rows(lm, corpus, p, cfg.eval.ctx_len, a.eval_rows, &mut rng)?;
            let report = ana::unigram_activation_scan(
                sae,
                lm,
                p,
                a.strong_threshold,
                a.dead_threshold,
                &acts,
                &toks,
            )?;
            report.write_csv(writer(&out.join("unigram-scan.csv"))?)?;
            ("unigram-scan.csv".into(), report.summary())
        }
        AnalyzeKind::DeadFeatures => {
            let sae = sae.expect("checked by caller");
            let (acts, _) = eval_rows(lm, corpus, p, cfg.eval.ctx_len, a.eval_rows, &mut rng)?;
            let report = ana::dead_feature_scan(sae, &acts, a.dead_threshold, a.cosine_cut)?;
            report.write_csv(writer(&out.join("dead-features.csv"))?)?;
            ("dead-features.csv".into(), report.summary())
        }
        AnalyzeKind::Complexity => {
            let sae = sae.expect("checked by caller");
            let prompts = heldout_prompts(corpus, cfg.eval.ctx_len, a.prompts, &mut rng)?;
            let report = ana::complexity_scan(sae, lm, p, &prompts, a.valid_floor)?;
            report.write_csv(writer(&out.join("complexity.csv"))?)?;
            ("complexity.csv".into(), report.summary())
        }
        AnalyzeKind::Patching => {
            let prompts = heldout_prompts(corpus, cfg.eval.ctx_len, a.prompts, &mut rng)?;
            let report = ana::patching_curve(lm, &prompts, p, a.patch_n_max)?;
            report.write_csv(writer(&out.join("patching.csv"))?)?;
            ("patching.csv".into(), report.summary())
        }
        AnalyzeKind::FinalToken => {
            let prompts = heldout_prompts(corpus, cfg.eval.ctx_len, a.prompts, &mut rng)?;
            let unigrams = unigram_table(lm, p)?;
            let report = ana::final_token_closeness(lm, &prompts, p, &unigrams)?;
            report.write_csv(writer(&out.join("final-token.csv"))?)?;
            ("final-token.csv".into(), report.summary())
        }
        AnalyzeKind::ActCossim => {
            let sae = sae.expect("checked by caller");
            let (acts, _) = eval_rows(lm, corpus, p, cfg.eval.ctx_len, a.eval_rows.min(2048), &mut rng)?;
            let report = ana::activation_vs_cossim(sae, &acts)?;
            report.write_csv(writer(&out.join("act-cossim.csv"))?)?;
            ("act-cossim.csv".into(), report.summary())
        }
        AnalyzeKind::EncUnigram => {
            let sae = sae.expect("checked by caller");
            let unigrams = unigram_table(lm, p)?;
            let report = ana::encoder_unigram_similarity(sae, &unigrams)?;
            report.write_csv(writer(&out.join("enc-unigram.csv"))?)?;
            ("enc-unigram.csv".into(), report.summary())
        }
        AnalyzeKind::MseVsFreq => {
            let sae = sae.expect("checked by caller");
            let table = count_ngrams(corpus, 1)?;
            let (rows, skipped) = mse_vs_frequency(lm, sae, &table, p, a.top_m)?;
            write_mse_freq_csv(&rows, writer(&out.join("mse-vs-freq.csv"))?)?;
            let xs: Vec<f64> = rows.iter().map(|r| r.rel_freq.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.recon_mse).collect();
            let corr = tsae_core::stats::pearson(&xs, &ys).ok();
            (
                "mse-vs-freq.csv".into(),
                serde_json::json!({
                    "n_rows": rows.len(),
                    "skipped": skipped,
                    "pearson_log_freq_vs_mse": corr,
                }),
            )
        }
    };
    let summary_name = format!("{}_summary.json", csv.trim_end_matches(".csv"));
    std::fs::write(out.join(&summary_name), serde_json::to_string_pretty(&summary)?)?;
    Ok((csv.clone(), vec![csv, summary_name]))
}
