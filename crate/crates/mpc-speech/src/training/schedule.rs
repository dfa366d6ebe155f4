//! The warmup learning-rate schedule.

/// Schedule and plateau parameters.
///
/// `canonical_noam` selects the conventional `d_model^{-0.5}` factor instead
/// of the `d_model^{+0.5}` this schedule uses by default; the default follows
/// the formula as printed, and `k = 0.5` largely compensates either way.
#[derive(Clone, Debug)]
pub struct ScheduleConfig {
    pub k: f64,
    pub d_model: usize,
    pub warmup_n: usize,
    pub canonical_noam: bool,
    pub plateau_patience_epochs: usize,
    pub plateau_divisor: f64,
    pub plateau_max_applications: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            k: 0.5,
            d_model: 256,
            warmup_n: 8000,
            canonical_noam: false,
            plateau_patience_epochs: 5,
            plateau_divisor: 10.0,
            plateau_max_applications: 1,
        }
    }
}

/// `lrate = k * d_model^{0.5} * min(n^{-0.5}, n * warmup_n^{-1.5})`,
/// evaluated exactly. Rises linearly to the peak at `n = warmup_n`, then
/// decays as `n^{-0.5}`. Step numbers start at 1.
pub fn lr_at_step(n: usize, cfg: &ScheduleConfig) -> f64 {
    assert!(n >= 1, "learning-rate schedule is defined for steps n >= 1");
    assert!(cfg.k > 0.0 && cfg.warmup_n >= 1, "invalid schedule config");
    let n = n as f64;
    let warmup = cfg.warmup_n as f64;
    let exponent = if cfg.canonical_noam { -0.5 } else { 0.5 };
    cfg.k * (cfg.d_model as f64).powf(exponent) * (n.powf(-0.5)).min(n * warmup.powf(-1.5))
}
