//! Control experiment: transfer encoder blocks from a supervised run into a
//! fresh fine-tune, using exactly the same head-swap path the unsupervised
//! checkpoints go through. Separates "transfer mechanics broken" from
//! "pre-training task not informative".

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{init_finetune_model, init_finetune_random, ModelParams, Vocab};
use mpc_speech::numerics::Rng;
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{finetune, RunConfig, Utterance};

fn finetune_cfg(seed: u64, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.num_epochs = epochs;
    cfg.apply("k", "0.012").unwrap();
    cfg.apply("warmup_n", "100").unwrap();
    cfg.apply("plateau_patience_epochs", "10").unwrap();
    cfg.validate().unwrap();
    cfg
}

fn main() {
    let dir = std::env::temp_dir().join("mpc-oracle");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 1000, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();

    let donor_train: Vec<Utterance> = all[424..924].to_vec();
    let donor_val: Vec<Utterance> = all[924..956].to_vec();
    let train: Vec<Utterance> = all[0..64].to_vec();
    let val: Vec<Utterance> = all[300..332].to_vec();

    // supervised donor: train a recognizer on disjoint data
    let donor_cfg = finetune_cfg(42, 30);
    let donor_init =
        init_finetune_random(&donor_cfg.model, &vocab, &mut Rng::new(42).substream("init"));
    let donor = finetune(&donor_cfg, donor_init, &vocab, &donor_train, &donor_val).unwrap();
    println!("donor best val: {:.4}", donor.best_val_loss);

    // pretend the donor's encoder is a pre-trained checkpoint: route it
    // through the same head-swap (blocks + final norm transfer only)
    let mut donor_as_checkpoint = ModelParams::default();
    for (name, t) in &donor.best_params.tensors {
        if name.starts_with("enc.block") || name.starts_with("enc.norm.") || name.starts_with("enc.in_proj.") {
            donor_as_checkpoint.insert(name.clone(), t.clone());
        }
    }

    for seed in [200u64, 201, 202] {
        let cfg = finetune_cfg(seed, 36);
        let rand_init =
            init_finetune_random(&cfg.model, &vocab, &mut Rng::new(seed).substream("init"));
        let oracle_init = init_finetune_model(
            &donor_as_checkpoint,
            &cfg.model,
            &vocab,
            &mut Rng::new(seed).substream("init"),
        )
        .unwrap();
        let rand_run = finetune(&cfg, rand_init, &vocab, &train, &val).unwrap();
        let oracle_run = finetune(&cfg, oracle_init, &vocab, &train, &val).unwrap();
        println!(
            "seed {seed}: rand val {:?}",
            rand_run.val_history.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        println!(
            "          oracle val {:?}",
            oracle_run.val_history.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
}
