//! Run configuration: a flat `key = value` text file over a named profile.
//!
//! Unknown keys are rejected. The `profile` key (toy or paper) picks the base
//! model shape; every other key overrides one field.

use std::path::Path;

use crate::features::FeatureConfig;
use crate::model::ModelConfig;
use crate::objectives::MaskPolicy;

use super::schedule::ScheduleConfig;
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Mpc,
    Apc,
    Cpc,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Mpc => "mpc",
            Objective::Apc => "apc",
            Objective::Cpc => "cpc",
        })
    }
}

/// Everything a training run needs, resolved from profile + config file +
/// command-line overrides.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub objective: Objective,
    pub seed: u64,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub mask: MaskPolicy,
    pub schedule: ScheduleConfig,

    pub total_steps: usize,
    pub batch_size: usize,
    pub checkpoint_every: usize, // 0 -> total_steps / 10
    pub log_every: usize,
    pub num_epochs: usize,
    pub val_fraction_denominator: u64, // 1-in-N utterances go to validation

    pub scheduled_sampling_rate: f64,
    pub weight_decay: f64,
    pub ctc_weight: f64,
    pub grad_clip: f64,

    pub num_step_ahead: usize,
    pub cpc_num_offsets: usize,
    pub cpc_num_candidates: usize,
    pub cpc_anchors_per_utt: usize,

    pub beam: usize,
    pub max_decode_len: usize, // 0 -> encoder output length
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            objective: Objective::Mpc,
            seed: 0,
            model: ModelConfig::toy(),
            features: FeatureConfig::default(),
            mask: MaskPolicy::default(),
            schedule: ScheduleConfig { d_model: ModelConfig::toy().encoder.d_model, ..ScheduleConfig::default() },
            total_steps: 500,
            batch_size: 8,
            checkpoint_every: 0,
            log_every: 10,
            num_epochs: 20,
            val_fraction_denominator: 20,
            scheduled_sampling_rate: 0.1,
            weight_decay: 1e-5,
            ctc_weight: 0.3,
            grad_clip: 5.0,
            num_step_ahead: 3,
            cpc_num_offsets: 3,
            cpc_num_candidates: 8,
            cpc_anchors_per_utt: 4,
            beam: 10,
            max_decode_len: 0,
        }
    }
}

impl RunConfig {
    pub fn with_profile(profile: &str) -> Result<Self, TrainError> {
        let model = match profile {
            "toy" => ModelConfig::toy(),
            "paper" => ModelConfig::paper(),
            other => {
                return Err(TrainError::Config(format!(
                    "unknown profile {other:?} (expected toy or paper)"
                )))
            }
        };
        let mut cfg = RunConfig::default();
        cfg.schedule.d_model = model.encoder.d_model;
        cfg.model = model;
        if profile == "paper" {
            cfg.total_steps = 500_000;
            cfg.batch_size = 256;
        }
        Ok(cfg)
    }

    pub fn effective_checkpoint_every(&self) -> usize {
        if self.checkpoint_every > 0 {
            self.checkpoint_every
        } else {
            (self.total_steps / 10).max(1)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.mask.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let bad = |d: String| Err(TrainError::Config(d));
        if !(0.0..=1.0).contains(&self.scheduled_sampling_rate) {
            return bad(format!("scheduled_sampling_rate {} not in [0, 1]", self.scheduled_sampling_rate));
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return bad(format!("ctc_weight {} not in [0, 1]", self.ctc_weight));
        }
        if self.batch_size == 0 || self.total_steps == 0 || self.num_epochs == 0 {
            return bad("batch_size, total_steps, and num_epochs must be positive".into());
        }
        if self.schedule.d_model != self.model.encoder.d_model {
            return bad("schedule d_model out of sync with the model".into());
        }
        if self.beam == 0 {
            return bad("beam must be at least 1".into());
        }
        Ok(())
    }

    /// Parse a config file over the defaults. Two passes: `profile` first so
    /// later keys override the profile's values.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            TrainError::Config(format!("{}: {e}", path.display()))
        })?;
        Self::from_str_contents(&text, &path.display().to_string())
    }

    pub fn from_str_contents(text: &str, origin: &str) -> Result<Self, TrainError> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("{origin}:{}: expected key = value", lineno + 1))
            })?;
            pairs.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
        }

        let mut cfg = RunConfig::default();
        if let Some((_, _, profile)) = pairs.iter().find(|(_, k, _)| k == "profile") {
            cfg = RunConfig::with_profile(profile)?;
        }
        for (lineno, key, value) in &pairs {
            cfg.apply(key, value)
                .map_err(|e| TrainError::Config(format!("{origin}:{lineno}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `key = value` pair. Unknown keys are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
        }
        match key {
            "profile" => {} // consumed in the first pass
            "objective" => {
                self.objective = match value {
                    "mpc" => Objective::Mpc,
                    "apc" => Objective::Apc,
                    "cpc" => Objective::Cpc,
                    other => return Err(format!("unknown objective {other:?}")),
                }
            }
            "seed" => self.seed = p(key, value)?,
            "total_steps" => self.total_steps = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "checkpoint_every" => self.checkpoint_every = p(key, value)?,
            "log_every" => self.log_every = p(key, value)?,
            "num_epochs" => self.num_epochs = p(key, value)?,
            "val_fraction_denominator" => self.val_fraction_denominator = p(key, value)?,
            "scheduled_sampling_rate" => self.scheduled_sampling_rate = p(key, value)?,
            "weight_decay" => self.weight_decay = p(key, value)?,
            "ctc_weight" => self.ctc_weight = p(key, value)?,
            "grad_clip" => self.grad_clip = p(key, value)?,
            "num_step_ahead" => self.num_step_ahead = p(key, value)?,
            "cpc_num_offsets" => self.cpc_num_offsets = p(key, value)?,
            "cpc_num_candidates" => self.cpc_num_candidates = p(key, value)?,
            "cpc_anchors_per_utt" => self.cpc_anchors_per_utt = p(key, value)?,
            "beam" => self.beam = p(key, value)?,
            "max_decode_len" => self.max_decode_len = p(key, value)?,

            "k" => self.schedule.k = p(key, value)?,
            "warmup_n" => self.schedule.warmup_n = p(key, value)?,
            "canonical_noam" => self.schedule.canonical_noam = p(key, value)?,
            "plateau_patience_epochs" => self.schedule.plateau_patience_epochs = p(key, value)?,
            "plateau_divisor" => self.schedule.plateau_divisor = p(key, value)?,
            "plateau_max_applications" => self.schedule.plateau_max_applications = p(key, value)?,

            "select_ratio" => self.mask.select_ratio = p(key, value)?,
            "p_zero" => self.mask.p_zero = p(key, value)?,
            "p_random" => self.mask.p_random = p(key, value)?,
            "p_keep" => self.mask.p_keep = p(key, value)?,

            "d_mel" => self.model.d_mel = p(key, value)?,
            "stack_factor" => self.model.stack_factor = p(key, value)?,
            "num_blocks" => self.model.encoder.num_blocks = p(key, value)?,
            "d_model" => {
                self.model.encoder.d_model = p(key, value)?;
                self.schedule.d_model = self.model.encoder.d_model;
            }
            "d_ff" => self.model.encoder.d_ff = p(key, value)?,
            "num_heads" => self.model.encoder.num_heads = p(key, value)?,
            "downsample_after" => {
                self.model.encoder.downsample_after = if value.is_empty() {
                    vec![]
                } else {
                    value
                        .split(',')
                        .map(|s| p::<usize>(key, s.trim()))
                        .collect::<Result<_, _>>()?
                }
            }
            "decoder_blocks" => self.model.decoder_blocks = p(key, value)?,
            "dropout" => self.model.dropout = p(key, value)?,

            "frame_length_ms" => self.features.frame_length_ms = p(key, value)?,
            "frame_shift_ms" => self.features.frame_shift_ms = p(key, value)?,
            "fft_size" => self.features.fft_size = p(key, value)?,
            "mel_low_hz" => self.features.mel_low_hz = p(key, value)?,
            "mel_high_hz" => self.features.mel_high_hz = p(key, value)?,
            "log_floor" => self.features.log_floor = p(key, value)?,
            "pre_emphasis" => self.features.pre_emphasis = p(key, value)?,

            unknown => return Err(format!("unknown config key {unknown:?}")),
        }
        if key == "d_mel" {
            self.features.d_mel = self.model.d_mel;
        }
        Ok(())
    }
}
