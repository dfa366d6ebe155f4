//! Compare fine-tune-mode activation scales under fresh vs head-swapped
//! pre-trained parameters.

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{
    bind_all, ctc_log_probs, encoder_forward, init_finetune_model, init_finetune_random,
    EncoderMode, Vocab,
};
use mpc_speech::numerics::{Graph, Rng};
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{pretrain, Objective, RunConfig};

fn main() {
    let dir = std::env::temp_dir().join("mpc-actscale");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 300, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let unlabeled: Vec<(String, mpc_speech::numerics::Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();

    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.objective = Objective::Mpc;
    cfg.seed = 100;
    cfg.total_steps = 1500;
    cfg.batch_size = 8;
    cfg.checkpoint_every = 1500;
    cfg.log_every = 500;
    cfg.apply("k", "0.02").unwrap();
    cfg.apply("warmup_n", "100").unwrap();
    let out = pretrain(&cfg, unlabeled).unwrap();

    let mut rng = Rng::new(7).substream("init");
    let fresh = init_finetune_random(&cfg.model, &vocab, &mut rng);
    let mut rng2 = Rng::new(7).substream("init");
    let swapped = init_finetune_model(&out.params, &cfg.model, &vocab, &mut rng2).unwrap();

    for (name, params) in [("fresh", &fresh), ("pretrained", &swapped)] {
        let mut g = Graph::new();
        let bp = bind_all(&mut g, params);
        let input = g.constant(all[0].frames.clone());
        let enc = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Finetune, None).unwrap();
        let lp = ctc_log_probs(&mut g, &bp, enc);
        let enc_rms = (g.value(enc).sq_norm() / g.value(enc).numel() as f64).sqrt();
        let min_lp = g.value(lp).data().iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "{name:>10}: enc_out rms {enc_rms:8.3}  ctc min logp {min_lp:9.3}  enc rows {}",
            g.value(enc).rows()
        );
    }
}
