//! Inspect pretrained vs fresh parameter scales and probe transfer quality.

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{init_mpc_pretrain, Vocab};
use mpc_speech::numerics::Rng;
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{pretrain, Objective, RunConfig};

fn main() {
    let dir = std::env::temp_dir().join("mpc-diagnose");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 400, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, _vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let unlabeled: Vec<(String, mpc_speech::numerics::Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();
    let _ = Vocab::from_chars("ab".chars());

    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.objective = Objective::Mpc;
    cfg.seed = 100;
    cfg.total_steps = std::env::var("DIAG_STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(600);
    cfg.batch_size = 8;
    cfg.checkpoint_every = cfg.total_steps;
    cfg.log_every = 50;
    let stack = std::env::var("DIAG_STACK").unwrap_or_else(|_| "8".into());
    cfg.apply("stack_factor", &stack).unwrap();
    cfg.apply("k", &std::env::var("DIAG_K").unwrap_or_else(|_| "0.02".into())).unwrap();
    cfg.apply("warmup_n", "100").unwrap();
    cfg.validate().unwrap();

    let out = pretrain(&cfg, unlabeled).unwrap();
    println!("metrics tail:");
    for r in out.metrics.records.iter().rev().take(4).rev() {
        println!("  {r}");
    }

    let fresh = init_mpc_pretrain(&cfg.model, &mut Rng::new(999));
    println!("{:<22} {:>12} {:>12}", "tensor", "pretrained", "fresh");
    for (name, t) in &out.params.tensors {
        if name.contains("block1.att.wq")
            || name.contains("block1.att.wo")
            || name.contains("block1.ff.w1")
            || name.contains("block1.ff.w2")
            || name.contains("block2.ff.w2")
            || name.contains("ln1.g")
            || name.contains("norm.g")
            || name.contains("in_proj.w")
            || name.contains("recon.w")
        {
            let pre_norm = (t.sq_norm() / t.numel() as f64).sqrt();
            let fresh_norm = fresh
                .tensors
                .get(name)
                .map(|f| (f.sq_norm() / f.numel() as f64).sqrt())
                .unwrap_or(f64::NAN);
            println!("{name:<22} {pre_norm:>12.4} {fresh_norm:>12.4}");
        }
    }
}
