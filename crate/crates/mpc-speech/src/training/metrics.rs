//! Line-delimited training metrics:
//! `step=<n> epoch=<e> phase=<pretrain|finetune> loss=<f> lr=<f> [val_loss=<f>] [cer=<f>]`.

use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub epoch: usize,
    pub phase: &'static str,
    pub loss: f64,
    pub lr: f64,
    pub val_loss: Option<f64>,
    pub cer: Option<f64>,
}

impl std::fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step={} epoch={} phase={} loss={} lr={}",
            self.step, self.epoch, self.phase, self.loss, self.lr
        )?;
        if let Some(v) = self.val_loss {
            write!(f, " val_loss={v}")?;
        }
        if let Some(c) = self.cer {
            write!(f, " cer={c}")?;
        }
        Ok(())
    }
}

/// Accumulates records; renders as the on-disk log text.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, record: MetricsRecord) {
        self.records.push(record);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{r}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_the_documented_format() {
        let r = MetricsRecord {
            step: 40,
            epoch: 2,
            phase: "pretrain",
            loss: 0.5,
            lr: 0.001,
            val_loss: None,
            cer: None,
        };
        assert_eq!(r.to_string(), "step=40 epoch=2 phase=pretrain loss=0.5 lr=0.001");

        let r2 = MetricsRecord {
            step: 90,
            epoch: 3,
            phase: "finetune",
            loss: 1.25,
            lr: 0.0001,
            val_loss: Some(1.5),
            cer: Some(0.125),
        };
        assert_eq!(
            r2.to_string(),
            "step=90 epoch=3 phase=finetune loss=1.25 lr=0.0001 val_loss=1.5 cer=0.125"
        );
    }
}
