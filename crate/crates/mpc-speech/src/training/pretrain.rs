//! The pre-training loop: batch assembly, one of the three objectives, the
//! warmup schedule, Adam, and periodic checkpoints for the
//! convergence-versus-pretraining-steps experiment.

use crate::features::stack_rows;
use crate::model::{
    bind_all, encoder_forward, gru_forward, init_apc, init_cpc, init_mpc_pretrain,
    reconstruction_head, EncoderMode, ModelParams,
};
use crate::numerics::{GradMap, Graph, Rng, Tensor};
use crate::objectives::{
    apc_loss_node, apply_mask, cpc_infonce_node, mpc_loss_node, sample_mask_plan,
};

use super::adam::{adam_step, clip_global_norm, AdamState};
use super::config::{Objective, RunConfig};
use super::data::{make_batches, split_train_val, Utterance};
use super::metrics::{MetricsLog, MetricsRecord};
use super::schedule::lr_at_step;
use super::TrainError;

/// Result of a pre-training run: final parameters, intermediate checkpoints
/// at the configured cadence, and the metrics log.
pub struct PretrainOutcome {
    pub params: ModelParams,
    pub checkpoints: Vec<(usize, ModelParams)>,
    pub metrics: MetricsLog,
    pub final_val_loss: Option<f64>,
}

/// Objective-specific loss for one utterance. Returns `None` when the
/// utterance is unusable for this objective (too short), a value and
/// optionally gradients otherwise.
fn utterance_loss(
    cfg: &RunConfig,
    params: &ModelParams,
    utt: &Utterance,
    rng: &mut Rng,
    want_grads: bool,
) -> Result<Option<(f64, Option<GradMap>)>, TrainError> {
    let mut g = Graph::new();
    let loss = match cfg.objective {
        Objective::Mpc => {
            let stacked = stack_rows(&utt.frames, cfg.model.stack_factor);
            if stacked.rows() == 0 {
                return Ok(None);
            }
            let plan = sample_mask_plan(stacked.rows(), &cfg.mask, rng);
            let targets = apply_mask(&stacked, &plan)?;
            let bp = bind_all(&mut g, params);
            let input = g.constant(targets.masked.clone());
            let mut drop_rng = rng.substream("dropout");
            let drop = (cfg.model.dropout > 0.0 && want_grads).then_some(&mut drop_rng);
            let hidden = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Pretrain, drop)?;
            let pred = reconstruction_head(&mut g, &bp, hidden);
            mpc_loss_node(&mut g, pred, &targets)?
        }
        Objective::Apc => {
            let t = utt.frames.rows();
            if t <= cfg.num_step_ahead {
                return Ok(None);
            }
            let bp = bind_all(&mut g, params);
            let input = g.constant(utt.frames.clone());
            let h = cfg.model.encoder.d_model;
            let states = gru_forward(&mut g, &bp, "apc.gru", input, h);
            let pred = g.affine(states, bp.n("apc.out.w"), bp.n("apc.out.b"));
            apc_loss_node(&mut g, &utt.frames, pred, cfg.num_step_ahead)?
        }
        Objective::Cpc => {
            let t = utt.frames.rows();
            let n = cfg.cpc_num_candidates;
            // need an anchor with a future at the largest offset, plus
            // enough other positions to draw negatives from
            if t < cfg.cpc_num_offsets + 2 || t < n {
                return Ok(None);
            }
            let bp = bind_all(&mut g, params);
            let input = g.constant(utt.frames.clone());
            let z = g.affine(input, bp.n("cpc.enc.w"), bp.n("cpc.enc.b"));
            let h = cfg.model.encoder.d_model;
            let context = gru_forward(&mut g, &bp, "cpc.gru", z, h);
            let mut terms = Vec::new();
            for k in 1..=cfg.cpc_num_offsets {
                let w = bp.n(&format!("cpc.offset{k}.w"));
                for _ in 0..cfg.cpc_anchors_per_utt {
                    let anchor = rng.below(t - k);
                    let positive = anchor + k;
                    let mut indices = vec![positive];
                    while indices.len() < n {
                        let j = rng.below(t);
                        if j != positive {
                            indices.push(j);
                        }
                    }
                    let candidates = g.gather_rows(z, &indices);
                    let c_t = g.row(context, anchor);
                    terms.push(cpc_infonce_node(&mut g, c_t, candidates, 0, w)?);
                }
            }
            let mut total = terms[0];
            for &t_node in &terms[1..] {
                total = g.add(total, t_node);
            }
            g.scale(total, 1.0 / terms.len() as f64)
        }
    };
    let value = g.value(loss).item();
    let grads = if want_grads { Some(g.backward(loss)?) } else { None };
    Ok(Some((value, grads)))
}

/// Mean objective loss over a held-out set, with the stochastic parts drawn
/// from a frozen per-utterance stream so successive evaluations are
/// comparable.
fn validation_loss(
    cfg: &RunConfig,
    params: &ModelParams,
    val: &[Utterance],
    root: &Rng,
) -> Result<Option<f64>, TrainError> {
    let mut total = 0.0;
    let mut used = 0usize;
    for (i, utt) in val.iter().enumerate() {
        let mut rng = root.substream("val_mask").substream_u64(i as u64);
        if let Some((loss, _)) = utterance_loss(cfg, params, utt, &mut rng, false)? {
            total += loss;
            used += 1;
        }
    }
    Ok((used > 0).then(|| total / used as f64))
}

fn init_params(cfg: &RunConfig, rng: &mut Rng) -> ModelParams {
    match cfg.objective {
        Objective::Mpc => init_mpc_pretrain(&cfg.model, rng),
        Objective::Apc => init_apc(&cfg.model, rng),
        Objective::Cpc => init_cpc(&cfg.model, cfg.cpc_num_offsets, rng),
    }
}

/// Run unsupervised pre-training over a feature archive's records.
pub fn pretrain(
    cfg: &RunConfig,
    records: Vec<(String, Tensor)>,
) -> Result<PretrainOutcome, TrainError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(TrainError::Data("no utterances to pre-train on".into()));
    }
    let (train, val) = split_train_val(records, cfg.val_fraction_denominator);
    if train.is_empty() {
        return Err(TrainError::Data("validation split consumed every utterance".into()));
    }

    let root = Rng::new(cfg.seed);
    let mut params = init_params(cfg, &mut root.substream("init"));
    let mut adam = AdamState::default();
    let mut metrics = MetricsLog::default();
    let mut checkpoints = Vec::new();
    let checkpoint_every = cfg.effective_checkpoint_every();
    let mut final_val = None;

    let mut epoch = 0usize;
    let mut attempt = 0u64; // counts every batch, including skipped ones
    'training: loop {
        epoch += 1;
        let mut order_rng = root.substream("batch_order").substream_u64(epoch as u64);
        let batches = make_batches(&train, cfg.batch_size, &mut order_rng);
        for batch in batches {
            attempt += 1;
            let mut fold: Option<GradMap> = None;
            let mut batch_loss = 0.0;
            let mut used = 0usize;
            let mut finite = true;
            for (bi, &ui) in batch.iter().enumerate() {
                let mut rng = root
                    .substream("mask")
                    .substream_u64(attempt)
                    .substream_u64(bi as u64);
                let Some((loss, grads)) =
                    utterance_loss(cfg, &params, &train[ui], &mut rng, true)?
                else {
                    continue;
                };
                if !loss.is_finite() {
                    finite = false;
                    break;
                }
                batch_loss += loss;
                used += 1;
                let grads = grads.expect("gradients requested");
                match &mut fold {
                    None => fold = Some(grads),
                    Some(acc) => {
                        for (name, g) in grads {
                            acc.get_mut(&name).expect("aligned grad maps").add_assign(&g);
                        }
                    }
                }
            }
            if !finite {
                eprintln!("step {}: non-finite loss, batch skipped", adam.step + 1);
                continue;
            }
            let Some(mut grads) = fold else { continue };
            let scale = 1.0 / used as f64;
            for g in grads.values_mut() {
                g.scale_assign(scale);
            }
            if let Some(norm) = clip_global_norm(&mut grads, cfg.grad_clip) {
                eprintln!("step {}: gradient norm {norm:.3} clipped to {}", adam.step + 1, cfg.grad_clip);
            }
            let lr = lr_at_step(adam.step + 1, &cfg.schedule);
            match adam_step(&mut params, &grads, &mut adam, lr, cfg.weight_decay) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient { param }) => {
                    eprintln!("step {}: non-finite gradient in {param}, batch skipped", adam.step + 1);
                    continue;
                }
                Err(e) => return Err(e),
            }
            let batch_loss = batch_loss / used as f64;

            if adam.step % cfg.log_every == 0 || adam.step == cfg.total_steps {
                metrics.push(MetricsRecord {
                    step: adam.step,
                    epoch,
                    phase: "pretrain",
                    loss: batch_loss,
                    lr,
                    val_loss: None,
                    cer: None,
                });
            }
            if adam.step % checkpoint_every == 0 || adam.step == cfg.total_steps {
                let val_loss = validation_loss(cfg, &params, &val, &root)?;
                checkpoints.push((adam.step, params.clone()));
                metrics.push(MetricsRecord {
                    step: adam.step,
                    epoch,
                    phase: "pretrain",
                    loss: batch_loss,
                    lr,
                    val_loss,
                    cer: None,
                });
                final_val = val_loss;
            }
            if adam.step >= cfg.total_steps {
                break 'training;
            }
        }
    }

    Ok(PretrainOutcome { params, checkpoints, metrics, final_val_loss: final_val })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_records(n: usize, t: usize, d: usize, seed: u64) -> Vec<(String, Tensor)> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let data = (0..t * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
                (format!("utt-{i:03}"), Tensor::new([t, d], data))
            })
            .collect()
    }

    /// Slowly varying tones: the future is predictable from the past, so all
    /// three objectives have something real to learn.
    fn smooth_records(n: usize, t: usize, d: usize, seed: u64) -> Vec<(String, Tensor)> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let freq = rng.uniform(0.1, 0.4);
                let phase = rng.uniform(0.0, 6.28);
                let mut data = Vec::with_capacity(t * d);
                for ti in 0..t {
                    for j in 0..d {
                        let v = (freq * ti as f64 + phase + j as f64 * 0.7).sin()
                            + 0.05 * rng.uniform(-1.0, 1.0);
                        data.push(v);
                    }
                }
                (format!("utt-{i:03}"), Tensor::new([t, d], data))
            })
            .collect()
    }

    fn tiny_cfg(objective: Objective) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.objective = objective;
        cfg.seed = 11;
        cfg.total_steps = 50;
        cfg.batch_size = 4;
        cfg.log_every = 5;
        cfg.apply("d_mel", "8").unwrap();
        cfg.apply("d_model", "16").unwrap();
        cfg.apply("d_ff", "24").unwrap();
        cfg.apply("num_blocks", "1").unwrap();
        cfg.apply("num_heads", "2").unwrap();
        cfg.apply("downsample_after", "").unwrap();
        cfg.apply("stack_factor", "4").unwrap();
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn loss_decreases_on_a_fixed_tiny_set_for_every_objective() {
        for objective in [Objective::Mpc, Objective::Apc, Objective::Cpc] {
            let mut passes = 0;
            for seed in 0..5 {
                let mut cfg = tiny_cfg(objective);
                cfg.seed = seed;
                cfg.log_every = 1;
                let records = smooth_records(8, 24, 8, 99);
                let out = pretrain(&cfg, records).unwrap();
                // per-step losses are stochastic (fresh masks and anchors);
                // compare early and late windows
                let losses: Vec<f64> = out.metrics.records.iter().map(|r| r.loss).collect();
                let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
                let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
                if tail < head {
                    passes += 1;
                }
            }
            assert!(passes >= 3, "{objective}: loss fell in only {passes}/5 seeds");
        }
    }

    #[test]
    fn identical_seeds_produce_identical_runs() {
        let cfg = tiny_cfg(Objective::Mpc);
        let a = pretrain(&cfg, synthetic_records(10, 24, 8, 7)).unwrap();
        let b = pretrain(&cfg, synthetic_records(10, 24, 8, 7)).unwrap();
        assert_eq!(a.metrics.to_text(), b.metrics.to_text());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn checkpoints_follow_the_cadence() {
        let mut cfg = tiny_cfg(Objective::Mpc);
        cfg.total_steps = 40;
        cfg.checkpoint_every = 10;
        let out = pretrain(&cfg, synthetic_records(10, 24, 8, 3)).unwrap();
        let steps: Vec<usize> = out.checkpoints.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![10, 20, 30, 40]);
    }

    #[test]
    fn empty_data_is_rejected() {
        let cfg = tiny_cfg(Objective::Mpc);
        assert!(matches!(pretrain(&cfg, vec![]), Err(TrainError::Data(_))));
    }

    #[test]
    fn overfit_sanity_mpc_loss_collapses_on_one_batch() {
        let mut cfg = tiny_cfg(Objective::Mpc);
        cfg.total_steps = 200;
        cfg.batch_size = 2;
        cfg.log_every = 1;
        cfg.apply("warmup_n", "50").unwrap();
        cfg.apply("k", "0.02").unwrap();
        // two fixed utterances, repeated every step
        let out = pretrain(&cfg, smooth_records(2, 16, 8, 5)).unwrap();
        let first = out.metrics.records.first().unwrap().loss;
        let tail: f64 =
            out.metrics.records[190..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(
            tail < 0.25 * first,
            "expected 200-step overfit to cut the loss to a quarter: {first} -> {tail}"
        );
    }
}
