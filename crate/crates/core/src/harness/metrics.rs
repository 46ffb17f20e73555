use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Format used for every floating-point CSV cell: 12 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.11e}")
}

/// One optimizer step of an alignment run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub mean_reward: f64,
    pub reward_std: f64,
    /// Group means of each reward component, in configuration order.
    pub component_means: Vec<f64>,
    /// Policy loss plus the scaled KL penalty.
    pub loss: f64,
    pub grad_norm: f64,
    pub lambda_kl: f64,
    /// `D_KL(π_θ ‖ π_ref_N)` after the update.
    pub anchor_kl: f64,
    /// `D_KL(π_θ ‖ π_{k-1})` after the update.
    pub stepwise_kl: f64,
    /// `D_KL(π_θ ‖ π_0)` after the update.
    pub init_kl: f64,
    /// Unscaled KL penalty before the update.
    pub penalty: f64,
    pub anchor_refresh: bool,
    /// Mean per-coordinate standard deviation of the group's final samples.
    pub rollout_std: f64,
}

/// Column names; component columns are `reward_<name>`.
pub fn metrics_header(component_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["step", "mean_reward", "reward_std"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(component_names.iter().map(|n| format!("reward_{n}")));
    h.extend(
        [
            "loss",
            "grad_norm",
            "lambda_kl",
            "anchor_kl",
            "stepwise_kl",
            "init_kl",
            "penalty",
            "anchor_refresh",
            "rollout_std",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

impl MetricsRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.step.to_string(),
            fmt_f64(self.mean_reward),
            fmt_f64(self.reward_std),
        ];
        r.extend(self.component_means.iter().map(|v| fmt_f64(*v)));
        r.extend([
            fmt_f64(self.loss),
            fmt_f64(self.grad_norm),
            fmt_f64(self.lambda_kl),
            fmt_f64(self.anchor_kl),
            fmt_f64(self.stepwise_kl),
            fmt_f64(self.init_kl),
            fmt_f64(self.penalty),
            u8::from(self.anchor_refresh).to_string(),
            fmt_f64(self.rollout_std),
        ]);
        r
    }
}

/// CSV writer that flushes after every row.
pub struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header.iter().map(|s| s.as_ref()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self { writer })
    }

    pub fn row<S: AsRef<str>>(&mut self, record: &[S]) -> Result<()> {
        self.writer
            .write_record(record.iter().map(|s| s.as_ref()))?;
        self.writer.flush().map_err(|e| Error::io("<metrics>", e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io("<metrics>", e))?;
        let mut file = self
            .writer
            .into_inner()
            .map_err(|e| Error::io("<metrics>", e.into_error()))?;
        file.flush().map_err(|e| Error::io("<metrics>", e))
    }
}
