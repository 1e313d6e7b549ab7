//! The JSON run configuration shared by every command.
//!
//! Every section is optional and unknown keys are rejected. The resolved
//! form, with defaults filled in and the seed propagated, is echoed into each
//! command's output.

use std::path::{Path, PathBuf};

use lfm_core::datamodel::SyntheticSpec;
use lfm_core::evaluate::ShotThresholds;
use lfm_core::model::{LossKind, MixArm, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The one seed every random stream is derived from.
    pub seed: u64,
    pub data: DataPaths,
    pub synthetic: SyntheticSpec,
    pub longtail: LongTailConfig,
    pub train: TrainConfig,
    pub shots: ShotThresholds,
    pub eval: EvalConfig,
    pub analyze: AnalyzeConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

/// Input files. When `train` is absent, commands that need data generate the
/// synthetic set described by `synthetic` and cut it to `longtail`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub head: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongTailConfig {
    /// Head-class count; the largest class count in the input when unset.
    pub n_max: Option<u64>,
    pub gamma: f64,
}

impl Default for LongTailConfig {
    fn default() -> Self {
        Self {
            n_max: None,
            gamma: 100.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Also write the confusion matrix as CSV.
    pub confusion_csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub tau: f64,
    /// Also write `p_cond` as a CSV matrix.
    pub csv: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    /// Seeds to repeat each cell over, reporting medians. Empty means the run
    /// seed alone.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            taus: vec![0.05],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub label_shift_triples: usize,
    pub ks_samples: usize,
    pub gradient_points: usize,
    pub sampler_draws: usize,
    pub limit_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            label_shift_triples: 10_000,
            ks_samples: 100_000,
            gradient_points: 100,
            sampler_draws: 1_000_000,
            limit_samples: 100_000,
        }
    }
}

/// Parses an arm name: a mixing arm (`none`, `mixup`, `remix`, `lfm`),
/// optionally prefixed by a loss (`ce+lfm`, `balce+remix`).
pub fn parse_arm(name: &str) -> Option<(Option<LossKind>, MixArm)> {
    let (loss, mix) = match name.split_once('+') {
        Some((loss, mix)) => {
            let loss = match loss {
                "ce" => LossKind::CrossEntropy,
                "balce" | "balanced_ce" => LossKind::BalancedCrossEntropy,
                _ => return None,
            };
            (Some(loss), mix)
        }
        None => (None, name),
    };
    MixArm::from_name(mix).map(|m| (loss, m))
}

pub fn arm_label(config: &TrainConfig) -> String {
    let loss = match config.loss {
        LossKind::CrossEntropy => "ce",
        LossKind::BalancedCrossEntropy => "balce",
    };
    format!("{loss}+{}", config.arm.name())
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies command-line overrides, propagates the seed and validates.
    pub fn resolve(mut self, seed: Option<u64>, arm: Option<&str>) -> CliResult<Self> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        for (what, nested) in [
            ("synthetic.seed", self.synthetic.seed),
            ("train.seed", self.train.seed),
        ] {
            if nested != 0 && nested != self.seed {
                return Err(CliError::Config(format!(
                    "{what} = {nested} conflicts with seed = {}; set the top-level seed only",
                    self.seed
                )));
            }
        }
        self.synthetic.seed = self.seed;
        self.train.seed = self.seed;
        if let Some(name) = arm {
            let (loss, mix) = parse_arm(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown arm {name:?}; expected [ce+|balce+]{{none,mixup,remix,lfm}}"
                ))
            })?;
            self.train.arm = mix;
            if let Some(loss) = loss {
                self.train.loss = loss;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        let g = self.longtail.gamma;
        if !(g.is_finite() && g >= 1.0) {
            return Err(lfm_core::Error::InvalidImbalance(g).into());
        }
        if self.longtail.n_max == Some(0) {
            return Err(CliError::Config("longtail.n_max must be positive".into()));
        }
        check_tau(self.analyze.tau)?;
        if self.shots.few_below > self.shots.many_above + 1 {
            return Err(CliError::Config(
                "shots.few_below exceeds shots.many_above + 1".into(),
            ));
        }
        for &a in &self.sweep.alphas {
            if !(a.is_finite() && a >= 0.0) {
                return Err(CliError::Config(format!(
                    "sweep alpha {a} must be finite and nonnegative"
                )));
            }
        }
        for &t in &self.sweep.taus {
            check_tau(t)?;
        }
        if self.sweep.alphas.is_empty() || self.sweep.taus.is_empty() {
            return Err(CliError::Config(
                "sweep.alphas and sweep.taus must be nonempty".into(),
            ));
        }
        let v = &self.verify;
        if [
            v.label_shift_triples,
            v.ks_samples,
            v.gradient_points,
            v.sampler_draws,
            v.limit_samples,
        ]
        .contains(&0)
        {
            return Err(CliError::Config("verify sizes must be positive".into()));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> CliResult<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(lfm_core::Error::InvalidTemperature(tau).into())
    }
}
