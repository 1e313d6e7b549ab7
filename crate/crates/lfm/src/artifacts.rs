//! JSON documents written by the commands.

use lfm_core::evaluate::{round1, EvalReport};
use lfm_core::linalg::Matrix;
use lfm_core::model::{EpochRecord, TrainedHead};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// A trained head. Both matrices are `dim × dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadFile {
    pub dim: usize,
    pub logit_scale: f64,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub encoder_proj: Vec<f64>,
    pub config: RunConfig,
    pub history: Vec<EpochRecord>,
}

impl HeadFile {
    pub fn new(head: &TrainedHead, config: &RunConfig) -> Self {
        Self {
            dim: head.dim(),
            logit_scale: head.logit_scale,
            w: head.adapter.as_slice().to_vec(),
            encoder_proj: head.encoder_proj.as_slice().to_vec(),
            config: config.clone(),
            history: head.history.clone(),
        }
    }

    pub fn to_head(&self) -> CliResult<TrainedHead> {
        let d = self.dim;
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(CliError::Data(format!(
                "head logit_scale {} is not positive",
                self.logit_scale
            )));
        }
        let adapter = Matrix::from_row_major(d, d, self.w.clone())?;
        let encoder_proj = Matrix::from_row_major(d, d, self.encoder_proj.clone())?;
        if !(adapter.is_finite() && encoder_proj.is_finite()) {
            return Err(CliError::Data("head contains non-finite weights".into()));
        }
        Ok(TrainedHead {
            adapter,
            encoder_proj,
            logit_scale: self.logit_scale,
            history: self.history.clone(),
        })
    }
}

/// Accuracies in percent rounded to 0.1; `null` for a shot group with no
/// classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub arm: String,
    pub many: Option<f64>,
    pub med: Option<f64>,
    pub few: Option<f64>,
    pub all: Option<f64>,
    pub per_class: Vec<Option<f64>>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub config: RunConfig,
}

impl MetricsFile {
    pub fn new(report: &EvalReport, arm: String, config: &RunConfig) -> Self {
        let r = |x: Option<f64>| x.map(round1);
        Self {
            arm,
            many: r(report.many()),
            med: r(report.medium()),
            few: r(report.few()),
            all: r(report.all()),
            per_class: report.per_class.iter().map(|t| r(t.percent())).collect(),
            confusion: report.confusion.clone(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisFile {
    pub tau: f64,
    pub counts: Vec<u64>,
    /// Imbalance factor of the class counts.
    pub gamma: f64,
    pub p_first: Vec<f64>,
    /// Row `i` is the distribution of the second class given first class `i`.
    pub p_cond: Vec<Vec<f64>>,
    /// Probability that a drawn pair contains each class.
    pub p_y: Vec<f64>,
    /// `p + (1 − p) q`, treating the two draws as independent.
    pub p_y_independent: Vec<f64>,
    pub gamma_prime: f64,
    pub gamma_prime_independent: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub passed: bool,
    pub suites: Vec<SuiteOutcome>,
    pub config: RunConfig,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
