//! Which transferred tensors carry the benefit (or the harm)? Copies chosen
//! subsets of pre-trained encoder tensors over a fresh fine-tune init and
//! compares validation trajectories.

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{init_finetune_random, Vocab};
use mpc_speech::numerics::Rng;
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{finetune, pretrain, Objective, RunConfig, Utterance};

fn main() {
    let dir = std::env::temp_dir().join("mpc-ablate");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 2000, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let unlabeled: Vec<(String, mpc_speech::numerics::Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();
    let train: Vec<Utterance> = all[0..64].to_vec();
    let val: Vec<Utterance> = all[300..332].to_vec();

    let mut pre_cfg = RunConfig::with_profile("toy").unwrap();
    pre_cfg.objective = Objective::Mpc;
    pre_cfg.seed = 100;
    pre_cfg.total_steps = 1500;
    pre_cfg.batch_size = 8;
    pre_cfg.checkpoint_every = 1500;
    pre_cfg.log_every = 500;
    pre_cfg.apply("k", "0.02").unwrap();
    pre_cfg.apply("warmup_n", "100").unwrap();
    let pre = pretrain(&pre_cfg, unlabeled).unwrap();

    let mut ft_cfg = RunConfig::with_profile("toy").unwrap();
    ft_cfg.seed = 200;
    ft_cfg.batch_size = 8;
    ft_cfg.num_epochs = 16;
    ft_cfg.apply("k", "0.02").unwrap();
    ft_cfg.apply("warmup_n", "60").unwrap();

    let variants: &[(&str, fn(&str) -> bool)] = &[
        ("none (random)", |_| false),
        ("full blocks+norm", |n| n.starts_with("enc.block") || n.starts_with("enc.norm.")),
        ("attention only", |n| n.starts_with("enc.block") && n.contains(".att.")),
        ("q/k only", |n| {
            n.starts_with("enc.block") && (n.ends_with("att.wq") || n.ends_with("att.wk"))
        }),
        ("ffn only", |n| n.starts_with("enc.block") && n.contains(".ff.")),
        ("norms only", |n| {
            (n.starts_with("enc.block") && n.contains(".ln")) || n.starts_with("enc.norm.")
        }),
        ("block1 only", |n| n.starts_with("enc.block1.")),
    ];

    for (label, want) in variants {
        let mut init =
            init_finetune_random(&ft_cfg.model, &vocab, &mut Rng::new(200).substream("init"));
        let mut copied = 0;
        for (name, t) in &pre.params.tensors {
            if want(name) && init.contains(name) {
                init.tensors.insert(name.clone(), t.clone());
                copied += 1;
            }
        }
        let run = finetune(&ft_cfg, init, &vocab, &train, &val).unwrap();
        println!(
            "{label:<18} ({copied:2} tensors): val {:?}",
            run.val_history.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
}
