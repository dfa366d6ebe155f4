//! Calibration harness for the convergence experiments: runs the
//! pretrained-vs-random protocol and prints every number the acceptance
//! thresholds depend on.

use mpc_speech::eval::DecodeConfig;
use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{init_finetune_model, init_finetune_random};
use mpc_speech::numerics::Rng;
use mpc_speech::pipeline::{evaluate_corpus, featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{finetune, pretrain, RunConfig, Utterance};

fn pretrain_cfg(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.objective = mpc_speech::training::Objective::Mpc;
    cfg.seed = seed;
    cfg.total_steps = 600;
    cfg.batch_size = 8;
    cfg.checkpoint_every = 150;
    cfg.log_every = 50;
    let stack = std::env::var("CAL_STACK").unwrap_or_else(|_| "8".into());
    cfg.apply("stack_factor", &stack).unwrap();
    if let Ok(steps) = std::env::var("CAL_STEPS") {
        cfg.apply("total_steps", &steps).unwrap();
        cfg.checkpoint_every = cfg.total_steps / 4;
    }
    let k = std::env::var("CAL_K_PRE").unwrap_or_else(|_| "0.02".into());
    cfg.apply("k", &k).unwrap();
    cfg.apply("warmup_n", "100").unwrap();
    if let Ok(d) = std::env::var("CAL_DROP") {
        cfg.apply("dropout", &d).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

fn finetune_cfg(seed: u64, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.num_epochs = epochs;
    let k = std::env::var("CAL_K_FT").unwrap_or_else(|_| "0.02".into());
    cfg.apply("k", &k).unwrap();
    let warmup = std::env::var("CAL_WARMUP_FT").unwrap_or_else(|_| "60".into());
    cfg.apply("warmup_n", &warmup).unwrap();
    if let Ok(pat) = std::env::var("CAL_PATIENCE") {
        cfg.apply("plateau_patience_epochs", &pat).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

fn epochs_to_reach(history: &[f64], threshold: f64) -> Option<usize> {
    history.iter().position(|&v| v <= threshold).map(|i| i + 1)
}

fn main() {
    let t0 = std::time::Instant::now();
    let dir = std::env::temp_dir().join("mpc-calibrate");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();

    let n_corpus: usize =
        std::env::var("CAL_CORPUS").ok().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let spec = SynthSpec { num_utterances: n_corpus, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    println!("[{:.1?}] corpus + features ready", t0.elapsed());

    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let n_train: usize =
        std::env::var("CAL_TRAIN").ok().and_then(|s| s.parse().ok()).unwrap_or(96);
    let train: Vec<Utterance> = all[0..n_train].to_vec();
    let val: Vec<Utterance> = all[300..332].to_vec();
    let test: Vec<Utterance> = all[332..428].to_vec();
    let unlabeled: Vec<(String, mpc_speech::numerics::Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();

    let epochs: usize =
        std::env::var("CAL_EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(20);
    let decode = DecodeConfig { beam_width: 4, ctc_weight: 0.3, max_len: 0 };

    for pair in 0..5u64 {
        let p0 = std::time::Instant::now();
        let pre_cfg = pretrain_cfg(100 + pair);
        let mut pre = pretrain(&pre_cfg, unlabeled.clone()).unwrap();
        if std::env::var("CAL_AVG").is_ok() {
            // average the last four checkpoints
            let tail = &pre.checkpoints[pre.checkpoints.len().saturating_sub(4)..];
            let mut avg = tail[0].1.clone();
            for (_, params) in &tail[1..] {
                for (name, t) in &params.tensors {
                    avg.tensors.get_mut(name).unwrap().add_assign(t);
                }
            }
            for t in avg.tensors.values_mut() {
                t.scale_assign(1.0 / tail.len() as f64);
            }
            pre.params = avg;
        }
        let pre_time = p0.elapsed();

        let ft_seed = 200 + pair;
        let cfg = finetune_cfg(ft_seed, epochs);
        let rand_init =
            init_finetune_random(&cfg.model, &vocab, &mut Rng::new(ft_seed).substream("init"));
        let pre_init = init_finetune_model(
            &pre.params,
            &cfg.model,
            &vocab,
            &mut Rng::new(ft_seed).substream("init"),
        )
        .unwrap();

        let rand_run = finetune(&cfg, rand_init, &vocab, &train, &val).unwrap();
        let pre_run = finetune(&cfg, pre_init, &vocab, &train, &val).unwrap();

        let rand_best = rand_run.best_val_loss;
        let t_rand = epochs_to_reach(&rand_run.val_history, rand_best).unwrap();
        let t_pre = epochs_to_reach(&pre_run.val_history, rand_best);

        let rand_cer = evaluate_corpus(&rand_run.best_params, &cfg.model, &vocab, &test, &decode)
            .unwrap()
            .corpus_cer();
        let pre_cer = evaluate_corpus(&pre_run.best_params, &cfg.model, &vocab, &test, &decode)
            .unwrap()
            .corpus_cer();

        println!(
            "pair {pair}: rand best_val={rand_best:.4} @epoch {t_rand} | pre reaches it at {t_pre:?} \
             | cer rand={rand_cer:.4} pre={pre_cer:.4} | pre_val={:?} | pretrain {pre_time:.1?} total {:.1?}",
            pre_run
                .val_history
                .iter()
                .map(|v| (v * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            p0.elapsed()
        );
        println!(
            "  train: rand={:.3} pre={:.3}",
            rand_run.metrics.records.last().unwrap().loss,
            pre_run.metrics.records.last().unwrap().loss
        );
        println!(
            "  rand_val={:?}",
            rand_run
                .val_history
                .iter()
                .map(|v| (v * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }
    println!("[{:.1?}] calibration done", t0.elapsed());
}
