//! `mpc`: featurize audio, pre-train encoders, fine-tune recognizers,
//! evaluate them, and poke at the masking and schedule machinery.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mpc_speech::eval::DecodeConfig;
use mpc_speech::features::read_records;
use mpc_speech::model::{
    init_finetune_model, init_finetune_random, load_checkpoint, save_checkpoint, ModelConfig,
    Vocab,
};
use mpc_speech::numerics::Rng;
use mpc_speech::objectives::{sample_mask_plan, MaskAction, MaskPolicy};
use mpc_speech::pipeline::{evaluate_corpus, featurize, load_labeled};
use mpc_speech::training::{
    finetune, is_validation_utterance, lr_at_step, pretrain, RunConfig, ScheduleConfig,
};

#[derive(Parser)]
#[command(name = "mpc", version, about = "Masked predictive coding for speech, desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract normalized FBANK features from a manifest of WAV files
    Featurize {
        /// Manifest: utterance_id<TAB>wav_path<TAB>speaker_id<TAB>transcript
        #[arg(long)]
        manifest: PathBuf,
        /// Output feature archive
        #[arg(long)]
        out: PathBuf,
        /// Optional run config (feature extraction keys)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Apply existing speaker stats instead of computing fresh ones
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Pre-train an encoder on unlabeled features
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        /// Feature archive from `featurize`
        #[arg(long)]
        features: PathBuf,
        /// Output directory for checkpoints and the metrics log
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Model profile: toy or paper
        #[arg(long)]
        profile: Option<String>,
    },
    /// Fine-tune a character recognizer, optionally from a checkpoint
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Labeled manifest (transcripts required)
        #[arg(long)]
        manifest: PathBuf,
        /// Pre-trained encoder checkpoint to start from
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profile: Option<String>,
    },
    /// Decode a labeled set and report character error rate
    Evaluate {
        /// Fine-tuned checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report file (TSV: id, cer, reference, hypothesis)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[arg(long = "ctc-weight", default_value_t = 0.3)]
        ctc_weight: f64,
    },
    /// Dump sampled mask plans for a sequence length and seed
    InspectMasks {
        /// Number of (stacked) positions in the sequence
        #[arg(long = "T")]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Print the learning rate at the given steps
    LrTable {
        /// Comma-separated step numbers
        #[arg(long)]
        steps: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_run_config(
    path: &Path,
    profile: Option<&str>,
    seed: Option<u64>,
) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    // a --profile flag outranks the file's own profile line
    let effective = match profile {
        Some(p) => format!("profile = {p}\n{text}"),
        None => text,
    };
    let mut cfg = RunConfig::from_str_contents(&effective, &path.display().to_string())?;
    if let Some(s) = seed {
        cfg.apply("seed", &s.to_string()).map_err(anyhow::Error::msg)?;
    }
    Ok(cfg)
}

fn write_metrics(dir: &Path, text: &str) -> Result<()> {
    let path = dir.join("metrics.log");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize { manifest, out, config, stats } => {
            let features_cfg = match config {
                Some(p) => load_run_config(&p, None, None)?.features,
                None => Default::default(),
            };
            let summary = featurize(&manifest, &features_cfg, &out, stats.as_deref())?;
            println!(
                "featurized {} utterances ({} frames) -> {} (stats: {})",
                summary.utterances,
                summary.total_frames,
                summary.archive.display(),
                summary.stats.display()
            );
        }
        Command::Pretrain { config, features, out, seed, profile } => {
            let cfg = load_run_config(&config, profile.as_deref(), seed)?;
            let records = read_records(&features)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let outcome = pretrain(&cfg, records)?;
            let kv = checkpoint_kv(&cfg.model, None, &cfg.objective.to_string());
            for (step, params) in &outcome.checkpoints {
                save_checkpoint(out.join(format!("step{step}.mpck")), params, &kv)?;
            }
            save_checkpoint(out.join("final.mpck"), &outcome.params, &kv)?;
            write_metrics(&out, &outcome.metrics.to_text())?;
            match outcome.final_val_loss {
                Some(v) => println!(
                    "pre-training done: {} checkpoints, final validation loss {v:.6}",
                    outcome.checkpoints.len()
                ),
                None => println!(
                    "pre-training done: {} checkpoints (no validation split)",
                    outcome.checkpoints.len()
                ),
            }
        }
        Command::Finetune { config, features, manifest, checkpoint, out, seed, profile } => {
            let cfg = load_run_config(&config, profile.as_deref(), seed)?;
            let (utts, vocab) = load_labeled(&features, &manifest, None)?;
            let (train, val): (Vec<_>, Vec<_>) = utts
                .into_iter()
                .partition(|u| !is_validation_utterance(&u.id, cfg.val_fraction_denominator));
            if val.is_empty() {
                bail!(
                    "the 1-in-{} validation split selected no utterances; lower val_fraction_denominator",
                    cfg.val_fraction_denominator
                );
            }
            let mut rng = Rng::new(cfg.seed).substream("init");
            let init = match &checkpoint {
                Some(path) => {
                    let (pre, _) = load_checkpoint(path)?;
                    init_finetune_model(&pre, &cfg.model, &vocab, &mut rng)?
                }
                None => init_finetune_random(&cfg.model, &vocab, &mut rng),
            };
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let outcome = finetune(&cfg, init, &vocab, &train, &val)?;
            let kv = checkpoint_kv(&cfg.model, Some(&vocab), "finetune");
            save_checkpoint(out.join("best.mpck"), &outcome.best_params, &kv)?;
            write_metrics(&out, &outcome.metrics.to_text())?;
            println!(
                "fine-tuning done: best validation loss {:.6} at epoch {} ({} train / {} val)",
                outcome.best_val_loss,
                outcome.best_epoch,
                train.len(),
                val.len()
            );
        }
        Command::Evaluate { checkpoint, features, manifest, out, beam, ctc_weight } => {
            let (params, kv) = load_checkpoint(&checkpoint)?;
            let model_cfg = ModelConfig::from_kv(&kv)?;
            let vocab_codes = kv
                .get("vocab")
                .with_context(|| format!("{} is not a fine-tuned checkpoint (no vocab)", checkpoint.display()))?;
            let vocab = Vocab::from_codepoints(vocab_codes)?;
            let (utts, _) = load_labeled(&features, &manifest, Some(vocab.clone()))?;
            let decode = DecodeConfig { beam_width: beam, ctc_weight, max_len: 0 };
            let report = evaluate_corpus(&params, &model_cfg, &vocab, &utts, &decode)?;
            print!("{}", report.to_text());
            if let Some(path) = out {
                std::fs::write(&path, report.to_tsv())
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("report written to {}", path.display());
            }
        }
        Command::InspectMasks { t, seed, count } => {
            let policy = MaskPolicy::default();
            let mut rng = Rng::new(seed).substream("mask");
            for i in 0..count {
                let plan = sample_mask_plan(t, &policy, &mut rng);
                println!("plan {i}: T'={t} selected={}", plan.selected.len());
                for (pos, action) in &plan.selected {
                    let (name, source) = match action {
                        MaskAction::Zero => ("zero", "-".to_string()),
                        MaskAction::Random(j) => ("random", j.to_string()),
                        MaskAction::Keep => ("keep", "-".to_string()),
                    };
                    println!("{pos}\t{name}\t{source}");
                }
            }
        }
        Command::LrTable { steps, config } => {
            let schedule: ScheduleConfig = match config {
                Some(p) => load_run_config(&p, None, None)?.schedule,
                None => ScheduleConfig::default(),
            };
            for part in steps.split(',') {
                let n: usize = part
                    .trim()
                    .parse()
                    .with_context(|| format!("bad step number {part:?}"))?;
                println!("{n}\t{:.12e}", lr_at_step(n, &schedule));
            }
        }
    }
    Ok(())
}

fn checkpoint_kv(
    model: &ModelConfig,
    vocab: Option<&Vocab>,
    phase: &str,
) -> BTreeMap<String, String> {
    let mut kv = model.to_kv();
    kv.insert("phase".into(), phase.to_string());
    if let Some(v) = vocab {
        kv.insert("vocab".into(), v.to_codepoints());
    }
    kv
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
