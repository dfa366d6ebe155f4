//! Fine-tuning: joint CTC + attention training with teacher forcing,
//! scheduled sampling, the plateau rule, and best-validation selection.

use crate::model::{
    bind_all, ctc_log_probs, ctc_loss_node, decoder_forward, encoder_forward, EncoderMode,
    ModelError, ModelParams, Vocab,
};
use crate::numerics::{GradMap, Graph, Rng};

use super::adam::{adam_step, clip_global_norm, AdamState};
use super::config::RunConfig;
use super::data::{make_batches, Utterance};
use super::metrics::{MetricsLog, MetricsRecord};
use super::plateau::{plateau_update, PlateauDecision, PlateauState};
use super::sampling::scheduled_sample;
use super::schedule::lr_at_step;
use super::TrainError;

pub struct FinetuneOutcome {
    pub best_params: ModelParams,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub val_history: Vec<f64>,
    pub metrics: MetricsLog,
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Decoder input under scheduled sampling: a teacher-forced pass predicts
/// each next token, then every input position independently keeps the gold
/// token or takes the model's prediction.
fn sampled_prefix(
    cfg: &RunConfig,
    params: &ModelParams,
    utt: &Utterance,
    labels: &[usize],
    vocab_size: usize,
    rng: &mut Rng,
) -> Result<Option<Vec<usize>>, TrainError> {
    let mut g = Graph::new();
    let bp = bind_all(&mut g, params);
    let input = g.constant(utt.frames.clone());
    let enc = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Finetune, None)?;
    if g.value(enc).rows() == 0 {
        return Ok(None);
    }
    let mut teacher: Vec<usize> = Vec::with_capacity(labels.len() + 1);
    teacher.push(Vocab::SOS);
    teacher.extend_from_slice(labels);
    let logits = decoder_forward(&mut g, &bp, &cfg.model, enc, &teacher, vocab_size, None)?;
    let preds: Vec<usize> =
        (0..teacher.len()).map(|i| argmax(g.value(logits).row_slice(i))).collect();

    let mut mixed = Vec::with_capacity(teacher.len());
    mixed.push(Vocab::SOS);
    for i in 1..teacher.len() {
        mixed.push(scheduled_sample(
            labels[i - 1],
            preds[i - 1],
            cfg.scheduled_sampling_rate,
            rng,
        ));
    }
    Ok(Some(mixed))
}

/// Joint loss for one labeled utterance:
/// `ctc_weight * ctc + (1 - ctc_weight) * attention cross-entropy`, both
/// summed over their sequences. Returns `None` when the utterance cannot be
/// scored (encoder output empty, or too short for its label under CTC).
fn joint_loss(
    cfg: &RunConfig,
    params: &ModelParams,
    utt: &Utterance,
    vocab_size: usize,
    mut sample_rng: Option<&mut Rng>,
    want_grads: bool,
) -> Result<Option<(f64, Option<GradMap>)>, TrainError> {
    let labels = utt
        .labels
        .as_ref()
        .ok_or_else(|| TrainError::Data(format!("utterance {} has no labels", utt.id)))?;

    let prefix = if cfg.scheduled_sampling_rate > 0.0 && sample_rng.is_some() {
        match sampled_prefix(
            cfg,
            params,
            utt,
            labels,
            vocab_size,
            sample_rng.as_deref_mut().expect("checked"),
        )? {
            Some(p) => p,
            None => return Ok(None),
        }
    } else {
        let mut p = Vec::with_capacity(labels.len() + 1);
        p.push(Vocab::SOS);
        p.extend_from_slice(labels);
        p
    };

    let mut g = Graph::new();
    let bp = bind_all(&mut g, params);
    let input = g.constant(utt.frames.clone());
    let mut drop_rng = sample_rng.as_deref_mut().map(|r| r.substream("dropout"));
    let drop = (cfg.model.dropout > 0.0 && want_grads)
        .then(|| drop_rng.as_mut())
        .flatten();
    let enc = encoder_forward(&mut g, &bp, &cfg.model, input, EncoderMode::Finetune, drop)?;
    if g.value(enc).rows() == 0 {
        return Ok(None);
    }

    let log_probs = ctc_log_probs(&mut g, &bp, enc);
    let ctc = match ctc_loss_node(&mut g, log_probs, labels, Vocab::BLANK) {
        Ok(node) => node,
        Err(ModelError::CtcInfeasible { frames, min_frames, .. }) => {
            eprintln!(
                "skipping {}: {} encoder frames cannot emit a {}-label transcript (need {})",
                utt.id,
                frames,
                labels.len(),
                min_frames
            );
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };

    let logits = decoder_forward(&mut g, &bp, &cfg.model, enc, &prefix, vocab_size, None)?;
    let log_sm = g.log_softmax_rows(logits);
    let mut targets = labels.clone();
    targets.push(Vocab::EOS);
    let picked = g.pick_per_row(log_sm, &targets);
    let ce_sum = g.sum_all(picked);
    let ce = g.neg(ce_sum);

    let ctc_part = g.scale(ctc, cfg.ctc_weight);
    let att_part = g.scale(ce, 1.0 - cfg.ctc_weight);
    let loss = g.add(ctc_part, att_part);

    let value = g.value(loss).item();
    let grads = if want_grads { Some(g.backward(loss)?) } else { None };
    Ok(Some((value, grads)))
}

/// Mean joint loss over a held-out set, teacher-forced.
pub fn validation_loss(
    cfg: &RunConfig,
    params: &ModelParams,
    val: &[Utterance],
    vocab_size: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut used = 0usize;
    for utt in val {
        if let Some((loss, _)) = joint_loss(cfg, params, utt, vocab_size, None, false)? {
            total += loss;
            used += 1;
        }
    }
    if used == 0 {
        return Err(TrainError::Data("no validation utterance could be scored".into()));
    }
    Ok(total / used as f64)
}

/// Train until `num_epochs`, tracking validation loss each epoch and
/// returning the parameters from the best epoch.
pub fn finetune(
    cfg: &RunConfig,
    init: ModelParams,
    vocab: &Vocab,
    train: &[Utterance],
    val: &[Utterance],
) -> Result<FinetuneOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Data("fine-tuning needs non-empty train and validation sets".into()));
    }
    let vocab_size = vocab.size();
    let root = Rng::new(cfg.seed);
    let mut params = init;
    let mut adam = AdamState::default();
    let mut plateau = PlateauState::default();
    let mut lr_factor = 1.0;
    let mut metrics = MetricsLog::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut val_history = Vec::with_capacity(cfg.num_epochs);
    let mut attempt = 0u64;

    for epoch in 1..=cfg.num_epochs {
        let mut order_rng = root.substream("batch_order").substream_u64(epoch as u64);
        let batches = make_batches(train, cfg.batch_size, &mut order_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        let mut last_lr = 0.0;
        for batch in batches {
            attempt += 1;
            let mut fold: Option<GradMap> = None;
            let mut batch_loss = 0.0;
            let mut used = 0usize;
            let mut finite = true;
            for (bi, &ui) in batch.iter().enumerate() {
                let mut rng = root
                    .substream("sched_sample")
                    .substream_u64(attempt)
                    .substream_u64(bi as u64);
                let Some((loss, grads)) =
                    joint_loss(cfg, &params, &train[ui], vocab_size, Some(&mut rng), true)?
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
                eprintln!("epoch {epoch}: non-finite loss, batch skipped");
                continue;
            }
            let Some(mut grads) = fold else { continue };
            let scale = 1.0 / used as f64;
            for g in grads.values_mut() {
                g.scale_assign(scale);
            }
            if let Some(norm) = clip_global_norm(&mut grads, cfg.grad_clip) {
                eprintln!("epoch {epoch}: gradient norm {norm:.3} clipped to {}", cfg.grad_clip);
            }
            let lr = lr_at_step(adam.step + 1, &cfg.schedule) * lr_factor;
            last_lr = lr;
            match adam_step(&mut params, &grads, &mut adam, lr, cfg.weight_decay) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient { param }) => {
                    eprintln!("epoch {epoch}: non-finite gradient in {param}, batch skipped");
                    continue;
                }
                Err(e) => return Err(e),
            }
            epoch_loss += batch_loss / used as f64;
            epoch_batches += 1;
        }

        let train_loss = if epoch_batches > 0 { epoch_loss / epoch_batches as f64 } else { f64::NAN };
        let val_loss = validation_loss(cfg, &params, val, vocab_size)?;
        val_history.push(val_loss);
        if plateau_update(&mut plateau, &cfg.schedule, val_loss) == PlateauDecision::DivideLr {
            lr_factor /= cfg.schedule.plateau_divisor;
            eprintln!(
                "epoch {epoch}: validation loss stalled for {} epochs, dividing lr by {}",
                cfg.schedule.plateau_patience_epochs, cfg.schedule.plateau_divisor
            );
        }
        metrics.push(MetricsRecord {
            step: adam.step,
            epoch,
            phase: "finetune",
            loss: train_loss,
            lr: last_lr,
            val_loss: Some(val_loss),
            cer: None,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }

    let (best_val_loss, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(FinetuneOutcome { best_params, best_val_loss, best_epoch, val_history, metrics })
}
