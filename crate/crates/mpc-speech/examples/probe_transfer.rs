//! Probe the fine-tune-mode encoder output (what the decoder and CTC head
//! actually see) under random vs head-swapped initialization.

use mpc_speech::features::FeatureConfig;
use mpc_speech::model::{
    bind_all, encoder_forward, init_finetune_model, init_finetune_random, EncoderMode,
    ModelParams, Vocab,
};
use mpc_speech::numerics::{Graph, Rng, Tensor};
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{synth_utterance, write_corpus, SynthSpec};
use mpc_speech::training::{pretrain, Objective, RunConfig, Utterance};

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for v in b[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col && a[row][col] != 0.0 {
                let f = a[row][col];
                for k in 0..n {
                    a[row][k] -= f * a[col][k];
                }
                for k in 0..b[0].len() {
                    b[row][k] -= f * b[col][k];
                }
            }
        }
    }
    b
}

/// Dominant character per fine-tune encoder output position.
fn output_labels(
    spec: &SynthSpec,
    index: usize,
    t_out: usize,
    reduction: usize,
) -> Vec<Option<usize>> {
    let utt = synth_utterance(spec, index);
    let chars: Vec<usize> = utt
        .transcript
        .chars()
        .map(|c| spec.chars.iter().position(|&x| x == c).unwrap())
        .collect();
    let gap = (spec.gap_ms * 8.0) as usize;
    let seg = (spec.segment_ms * 8.0) as usize;
    (0..t_out)
        .map(|p| {
            let center = (p * reduction + reduction / 2) * 80 + 100;
            if center < gap {
                return None;
            }
            let k = (center - gap) / seg;
            chars.get(k).copied()
        })
        .collect()
}

fn probe(params: &ModelParams, cfg: &RunConfig, utts: &[Utterance], spec: &SynthSpec) -> f64 {
    let reduction = 1 << cfg.model.encoder.downsample_after.len();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<usize> = Vec::new();
    for u in utts {
        let mut g = Graph::new();
        let bp = bind_all(&mut g, params);
        let input = g.constant(u.frames.clone());
        let enc = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Finetune, None).unwrap();
        let h = g.value(enc);
        let index: usize = u.id.trim_start_matches("synth-").parse().unwrap();
        let labels = output_labels(spec, index, h.rows(), reduction);
        for (i, lab) in labels.iter().enumerate() {
            if let Some(l) = lab {
                let mut row = h.row_slice(i).to_vec();
                row.push(1.0);
                xs.push(row);
                ys.push(*l);
            }
        }
    }
    let (n, d, k) = (xs.len(), xs[0].len(), spec.chars.len());
    let split = n * 3 / 4;
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![vec![0.0; k]; d];
    for i in 0..split {
        for a in 0..d {
            for b in 0..d {
                xtx[a][b] += xs[i][a] * xs[i][b];
            }
            xty[a][ys[i]] += xs[i][a];
        }
    }
    for (a, row) in xtx.iter_mut().enumerate() {
        row[a] += 1e-3 * split as f64 / d as f64;
    }
    let w = solve(xtx, xty);
    let mut correct = 0;
    for i in split..n {
        let best = (0..k)
            .max_by(|&a, &b| {
                let sa: f64 = (0..d).map(|j| xs[i][j] * w[j][a]).sum();
                let sb: f64 = (0..d).map(|j| xs[i][j] * w[j][b]).sum();
                sa.total_cmp(&sb)
            })
            .unwrap();
        if best == ys[i] {
            correct += 1;
        }
    }
    correct as f64 / (n - split) as f64
}

fn main() {
    let dir = std::env::temp_dir().join("mpc-probe2");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 1200, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let unlabeled: Vec<(String, Tensor)> =
        all.iter().map(|u| (u.id.clone(), u.frames.clone())).collect();

    let mut cfg = RunConfig::with_profile("toy").unwrap();
    cfg.objective = Objective::Mpc;
    cfg.seed = 100;
    cfg.total_steps =
        std::env::var("PROBE_STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(1500);
    cfg.batch_size = 8;
    cfg.checkpoint_every = cfg.total_steps;
    cfg.log_every = 500;
    let stack = std::env::var("PROBE_STACK").unwrap_or_else(|_| "8".into());
    cfg.apply("stack_factor", &stack).unwrap();
    cfg.apply("k", "0.02").unwrap();
    cfg.apply("warmup_n", "100").unwrap();

    let probe_set = &all[0..160];
    // raw FBANK baseline: identity "encoder" = probe the input itself
    {
        let mut xs_acc = 0.0;
        let mut runs = 0.0;
        // probe raw frames pooled at the encoder's reduction
        let reduction = 1 << cfg.model.encoder.downsample_after.len();
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<usize> = Vec::new();
        for u in probe_set {
            let t_out = u.frames.rows() / reduction;
            let index: usize = u.id.trim_start_matches("synth-").parse().unwrap();
            let labels = output_labels(&spec, index, t_out, reduction);
            for (i, lab) in labels.iter().enumerate() {
                if let Some(l) = lab {
                    let mut row = vec![0.0; u.frames.cols()];
                    for r in 0..reduction {
                        for (j, v) in u.frames.row_slice(i * reduction + r).iter().enumerate() {
                            row[j] += v / reduction as f64;
                        }
                    }
                    row.push(1.0);
                    xs.push(row);
                    ys.push(*l);
                }
            }
        }
        let (n, d, k) = (xs.len(), xs[0].len(), spec.chars.len());
        let split = n * 3 / 4;
        let mut xtx = vec![vec![0.0; d]; d];
        let mut xty = vec![vec![0.0; k]; d];
        for i in 0..split {
            for a in 0..d {
                for b in 0..d {
                    xtx[a][b] += xs[i][a] * xs[i][b];
                }
                xty[a][ys[i]] += xs[i][a];
            }
        }
        for (a, row) in xtx.iter_mut().enumerate() {
            row[a] += 1e-3 * split as f64 / d as f64;
        }
        let w = solve(xtx, xty);
        let mut correct = 0;
        for i in split..n {
            let best = (0..k)
                .max_by(|&a, &b| {
                    let sa: f64 = (0..d).map(|j| xs[i][j] * w[j][a]).sum();
                    let sb: f64 = (0..d).map(|j| xs[i][j] * w[j][b]).sum();
                    sa.total_cmp(&sb)
                })
                .unwrap();
            if best == ys[i] {
                correct += 1;
            }
        }
        xs_acc += correct as f64 / (n - split) as f64;
        runs += 1.0;
        println!("probe acc, pooled raw fbank:     {:.3}", xs_acc / runs);
    }

    let random =
        init_finetune_random(&cfg.model, &vocab, &mut Rng::new(200).substream("init"));
    println!("probe acc, random ft encoder:    {:.3}", probe(&random, &cfg, probe_set, &spec));

    let out = pretrain(&cfg, unlabeled).unwrap();
    let swapped = init_finetune_model(
        &out.params,
        &cfg.model,
        &vocab,
        &mut Rng::new(200).substream("init"),
    )
    .unwrap();
    println!("probe acc, swapped ft encoder:   {:.3}", probe(&swapped, &cfg, probe_set, &spec));
}
