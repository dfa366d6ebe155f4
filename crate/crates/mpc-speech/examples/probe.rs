//! Linear probe: does the pre-trained encoder (through its own input
//! projection) carry character identity in its hidden states? Ridge
//! regression from stacked-position hidden states to the dominant character,
//! compared against a randomly initialized encoder.

use mpc_speech::features::{stack_rows, FeatureConfig};
use mpc_speech::model::{
    bind_all, encoder_forward, init_mpc_pretrain, EncoderMode, ModelParams, Vocab,
};
use mpc_speech::numerics::{Graph, Rng, Tensor};
use mpc_speech::pipeline::{featurize, load_labeled};
use mpc_speech::synth::{synth_utterance, write_corpus, SynthSpec};
use mpc_speech::training::{pretrain, Objective, RunConfig, Utterance};

/// Gauss-Jordan inverse for the small ridge system.
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

/// Dominant character index per stacked frame, from the generator's layout.
fn stacked_labels(spec: &SynthSpec, index: usize, t_stacked: usize, stack: usize) -> Vec<Option<usize>> {
    let utt = synth_utterance(spec, index);
    let chars: Vec<usize> = utt
        .transcript
        .chars()
        .map(|c| spec.chars.iter().position(|&x| x == c).unwrap())
        .collect();
    let frame_shift = 80; // 10 ms at 8 kHz
    let gap = (spec.gap_ms * 8.0) as usize;
    let seg = (spec.segment_ms * 8.0) as usize;
    (0..t_stacked)
        .map(|sf| {
            // center sample of this stacked frame
            let center = (sf * stack + stack / 2) * frame_shift + 100;
            if center < gap {
                return None;
            }
            let k = (center - gap) / seg;
            chars.get(k).copied()
        })
        .collect()
}

fn probe(params: &ModelParams, cfg: &RunConfig, utts: &[Utterance], spec: &SynthSpec) -> f64 {
    let stack = cfg.model.stack_factor;
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<usize> = Vec::new();
    for u in utts {
        let stacked = stack_rows(&u.frames, stack);
        if stacked.rows() == 0 {
            continue;
        }
        let mut g = Graph::new();
        let bp = bind_all(&mut g, params);
        let input = g.constant(stacked.clone());
        let enc = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Pretrain, None).unwrap();
        let h = g.value(enc);
        let index: usize = u.id.trim_start_matches("synth-").parse().unwrap();
        let labels = stacked_labels(spec, index, h.rows(), stack);
        for (i, lab) in labels.iter().enumerate() {
            if let Some(l) = lab {
                let mut row = h.row_slice(i).to_vec();
                row.push(1.0); // bias
                xs.push(row);
                ys.push(*l);
            }
        }
    }
    let n = xs.len();
    let d = xs[0].len();
    let k = spec.chars.len();
    let split = n * 3 / 4;
    // ridge on the first 3/4, accuracy on the rest
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
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..k {
            let score: f64 = (0..d).map(|a| xs[i][a] * w[a][c]).sum();
            if score > best.0 {
                best = (score, c);
            }
        }
        if best.1 == ys[i] {
            correct += 1;
        }
    }
    correct as f64 / (n - split) as f64
}

fn main() {
    let dir = std::env::temp_dir().join("mpc-probe");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SynthSpec { num_utterances: 1200, seed: 0, ..SynthSpec::default() };
    let manifest = write_corpus(dir.join("corpus"), &spec, true).unwrap();
    let archive = dir.join("feats.mpcf");
    featurize(&manifest, &FeatureConfig::default(), &archive, None).unwrap();
    let (all, _vocab) = load_labeled(&archive, &manifest, None).unwrap();
    let _ = Vocab::from_chars("ab".chars());
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
    let random = init_mpc_pretrain(&cfg.model, &mut Rng::new(999).substream("init"));
    println!("probe acc, random encoder:      {:.3}", probe(&random, &cfg, probe_set, &spec));
    let out = pretrain(&cfg, unlabeled).unwrap();
    println!(
        "probe acc, pretrained encoder:  {:.3}  (final val loss {:?})",
        probe(&out.params, &cfg, probe_set, &spec),
        out.final_val_loss
    );
}
