//! Fraction of feed-forward units that never activate, and attention
//! peakiness, for random vs head-swapped parameters in fine-tune mode.

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{
    init_finetune_model, init_finetune_random, EncoderConfig, ModelConfig, ModelParams, Vocab,
};
use mpc_speech::numerics::{Graph, Rng, Tensor};
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{write_corpus, SynthSpec};
use mpc_speech::training::{pretrain, Objective, RunConfig, Utterance};

/// Re-run the encoder by hand so intermediate activations are visible.
fn ffn_stats(params: &ModelParams, cfg: &ModelConfig, utts: &[Utterance]) -> Vec<(String, f64, f64)> {
    let enc: &EncoderConfig = &cfg.encoder;
    let mut out = Vec::new();
    for block in 1..=enc.num_blocks {
        let prefix = format!("enc.block{block}");
        let mut alive = vec![false; enc.d_ff];
        let mut entropies = Vec::new();
        for u in utts {
            let mut g = Graph::new();
            let bp = mpc_speech::model::bind_all(&mut g, params);
            let input = g.constant(u.frames.clone());
            // rebuild the stack up to this block's ffn input
            let d = enc.d_model;
            let mut x = g.affine(input, bp.n("enc.in_proj.w"), bp.n("enc.in_proj.b"));
            let t = g.value(x).rows();
            let pos = g.constant(mpc_speech::model::sinusoidal_positions(t, d));
            x = g.add(x, pos);
            for b in 1..=block {
                let p = format!("enc.block{b}");
                let a = g.layer_norm(x, bp.n(&format!("{p}.ln1.g")), bp.n(&format!("{p}.ln1.b")), 1e-6);
                // one head's attention weights for the entropy measure
                let q = g.affine(a, bp.n(&format!("{p}.att.wq")), bp.n(&format!("{p}.att.bq")));
                let k = g.matmul(a, bp.n(&format!("{p}.att.wk")));
                let dh = d / enc.num_heads;
                let qh = g.slice_cols(q, 0, dh);
                let kh = g.slice_cols(k, 0, dh);
                let kt = g.transpose(kh);
                let logits = g.matmul(qh, kt);
                let scaled = g.scale(logits, 1.0 / (dh as f64).sqrt());
                let weights = g.softmax_rows(scaled);
                if b == block {
                    let w = g.value(weights);
                    for i in 0..w.rows() {
                        let h: f64 = w
                            .row_slice(i)
                            .iter()
                            .map(|&p| if p > 1e-12 { -p * p.ln() } else { 0.0 })
                            .sum();
                        entropies.push(h);
                    }
                }
                let att = mpc_speech::model::multi_head_attention(
                    &mut g,
                    &bp,
                    &format!("{p}.att"),
                    a,
                    a,
                    enc.num_heads,
                    None,
                );
                x = g.add(x, att);
                let f = g.layer_norm(x, bp.n(&format!("{p}.ln2.g")), bp.n(&format!("{p}.ln2.b")), 1e-6);
                let pre = g.affine(f, bp.n(&format!("{p}.ff.w1")), bp.n(&format!("{p}.ff.b1")));
                if b == block {
                    let pv = g.value(pre);
                    for i in 0..pv.rows() {
                        for (j, &v) in pv.row_slice(i).iter().enumerate() {
                            if v > 0.0 {
                                alive[j] = true;
                            }
                        }
                    }
                }
                let r = g.relu(pre);
                let ff = g.affine(r, bp.n(&format!("{p}.ff.w2")), bp.n(&format!("{p}.ff.b2")));
                x = g.add(x, ff);
                if enc.downsample_after.contains(&b) {
                    let paired = g.pair_rows(x);
                    x = g.affine(paired, bp.n(&format!("enc.ds{b}.w")), bp.n(&format!("enc.ds{b}.b")));
                }
            }
        }
        let dead = alive.iter().filter(|&&a| !a).count() as f64 / enc.d_ff as f64;
        let mean_entropy = entropies.iter().sum::<f64>() / entropies.len() as f64;
        out.push((prefix, dead, mean_entropy));
    }
    out
}

fn main() {
    let dir = std::env::temp_dir().join("mpc-dead");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 600, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let unlabeled: Vec<(String, Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();

    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.objective = Objective::Mpc;
    cfg.seed = std::env::var("DEAD_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(100);
    cfg.total_steps = std::env::var("DEAD_STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(1500);
    cfg.batch_size = 8;
    cfg.checkpoint_every = 1500;
    cfg.log_every = 500;
    let k = std::env::var("DEAD_K").unwrap_or_else(|_| "0.02".into());
    cfg.apply("k", &k).unwrap();
    cfg.apply("warmup_n", "100").unwrap();
    let stack = std::env::var("DEAD_STACK").unwrap_or_else(|_| "8".into());
    cfg.apply("stack_factor", &stack).unwrap();

    let probe = &all[0..24];
    let random = init_finetune_random(&cfg.model, &vocab, &mut Rng::new(200).substream("init"));
    println!("random init:");
    for (name, dead, ent) in ffn_stats(&random, &cfg.model, probe) {
        println!("  {name}: dead ffn {:.1}% | head-0 attention entropy {ent:.3}", dead * 100.0);
    }
    let out = pretrain(&cfg, unlabeled).unwrap();
    let swapped =
        init_finetune_model(&out.params, &cfg.model, &vocab, &mut Rng::new(200).substream("init"))
            .unwrap();
    println!("head-swapped init:");
    for (name, dead, ent) in ffn_stats(&swapped, &cfg.model, probe) {
        println!("  {name}: dead ffn {:.1}% | head-0 attention entropy {ent:.3}", dead * 100.0);
    }
}
