use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::head::{EpochRecord, Param, TrainedHead};
use super::loss::log_prior;
use super::schedule::Schedule;
use super::DEFAULT_LOGIT_SCALE;
use crate::datamodel::{ClassCatalog, EmbeddingSet};
use crate::linalg::Matrix;
use crate::mixup::{self, LabelRule, LambdaSampler, MixedExample, RemixParams};
use crate::seed;
use crate::textguide::{build_sampling_model, LocalSamplingModel, PairStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LossKind {
    #[cfg_attr(feature = "serde", serde(rename = "ce"))]
    CrossEntropy,
    #[cfg_attr(feature = "serde", serde(rename = "balanced_ce"))]
    BalancedCrossEntropy,
}

/// How training examples are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MixArm {
    /// Plain rows with one-hot labels.
    None,
    /// Uniform class pairs, `λ_y = λ_x`.
    Mixup,
    /// Uniform class pairs, Remix label rule.
    Remix,
    /// Text-guided pairs with label shift.
    Lfm,
}

impl MixArm {
    pub const ALL: [MixArm; 4] = [MixArm::None, MixArm::Mixup, MixArm::Remix, MixArm::Lfm];

    pub fn name(self) -> &'static str {
        match self {
            MixArm::None => "none",
            MixArm::Mixup => "mixup",
            MixArm::Remix => "remix",
            MixArm::Lfm => "lfm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct StageConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_min: f64,
    /// Label-shift intensity for the LFM arm.
    pub alpha: f64,
    /// Sampling temperature for the LFM arm.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub batch_size: usize,
    pub loss: LossKind,
    pub arm: MixArm,
    pub logit_scale: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub remix: RemixParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let stage = StageConfig {
            epochs: 10,
            lr0: 0.5,
            lr_min: 5e-4,
            alpha: 1.0,
            tau: 0.05,
        };
        Self {
            stage1: StageConfig {
                lr0: 0.05,
                lr_min: 5e-5,
                ..stage
            },
            stage2: stage,
            batch_size: 32,
            loss: LossKind::CrossEntropy,
            arm: MixArm::Lfm,
            logit_scale: DEFAULT_LOGIT_SCALE,
            beta_a: 0.5,
            beta_b: 0.5,
            remix: RemixParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        for st in [&self.stage1, &self.stage2] {
            if !(st.lr_min >= 0.0 && st.lr_min <= st.lr0 && st.lr0.is_finite()) {
                return bad("each stage needs 0 <= lr_min <= lr0");
            }
            if !(st.alpha >= 0.0 && st.alpha.is_finite()) {
                return bad("alpha must be finite and >= 0");
            }
            if !(st.tau > 0.0) {
                return Err(Error::InvalidTemperature(st.tau));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return bad("logit_scale must be positive");
        }
        if !(self.remix.kappa >= 1.0 && (0.0..=1.0).contains(&self.remix.tau)) {
            return bad("remix needs kappa >= 1 and tau in [0, 1]");
        }
        LambdaSampler::new(self.beta_a, self.beta_b)?;
        Ok(())
    }

    pub fn stage(&self, stage: u8) -> &StageConfig {
        if stage == 1 {
            &self.stage1
        } else {
            &self.stage2
        }
    }
}

/// Endless supply of training examples for one arm and one stage.
pub struct ExampleSource<'a> {
    arm: MixArm,
    rule: LabelRule,
    sampler: LambdaSampler,
    counts: &'a [u64],
    data: &'a EmbeddingSet,
    pairs: PairStream<'a>,
    rng: ChaCha8Rng,
}

impl<'a> ExampleSource<'a> {
    pub fn new(
        config: &TrainConfig,
        stage: u8,
        data: &'a EmbeddingSet,
        catalog: &'a ClassCatalog,
    ) -> Result<Self> {
        let st = config.stage(stage);
        let counts = catalog.counts.as_slice();
        let model = match config.arm {
            MixArm::Lfm => build_sampling_model(catalog, st.tau)?,
            _ => LocalSamplingModel::uniform_pairs(counts)?,
        };
        let rule = match config.arm {
            MixArm::Lfm => LabelRule::LabelShift { alpha: st.alpha },
            MixArm::Remix => LabelRule::Remix(config.remix),
            MixArm::None | MixArm::Mixup => LabelRule::Standard,
        };
        let index = u64::from(stage);
        Ok(Self {
            arm: config.arm,
            rule,
            sampler: LambdaSampler::new(config.beta_a, config.beta_b)?,
            counts,
            data,
            pairs: PairStream::new(
                model,
                data,
                seed::derive_indexed(config.seed, seed::TAG_PAIRS, index),
            )?,
            rng: seed::rng(seed::derive_indexed(config.seed, seed::TAG_MIX, index)),
        })
    }

    pub fn sampling_model(&self) -> &LocalSamplingModel {
        self.pairs.model()
    }

    pub fn next_example(&mut self) -> Result<MixedExample> {
        let classes = self.counts.len();
        if self.arm == MixArm::None {
            let row = self.pairs.next_first();
            let x = (self.data.feature(row), self.data.label(row));
            return mixup::blend(x, x, 1.0, 1.0, classes);
        }
        let p = self.pairs.next_pair();
        mixup::mix(
            (self.data.feature(p.first_row), p.first_class),
            (self.data.feature(p.second_row), p.second_class),
            self.counts,
            &self.rule,
            &self.sampler,
            &mut self.rng,
        )
    }
}

/// Two-stage decoupled training.
///
/// Stage 1 trains `encoder_proj` with the adapter held at the identity; stage 2
/// freezes `encoder_proj` and trains the adapter. Every step averages the
/// gradient over `batch_size` examples from the configured arm and takes a
/// plain gradient step at the cosine-annealed learning rate. An epoch is
/// `ceil(n / batch_size)` steps. With a validation set, top-1 accuracy is
/// recorded after each epoch.
pub fn train(
    data: &EmbeddingSet,
    catalog: &ClassCatalog,
    val: Option<&EmbeddingSet>,
    config: &TrainConfig,
) -> Result<TrainedHead> {
    config.validate()?;
    catalog.validate()?;
    data.check_catalog(catalog)?;
    catalog.check_counts(data)?;
    if let Some(v) = val {
        v.check_catalog(catalog)?;
    }

    let dim = catalog.dim();
    let text = catalog.text_matrix();
    let prior = log_prior(&catalog.counts);
    let adjust = match config.loss {
        LossKind::CrossEntropy => None,
        LossKind::BalancedCrossEntropy => Some(prior.as_slice()),
    };
    let mut head = TrainedHead::zero_shot(dim, config.logit_scale);
    let steps_per_epoch = data.len().div_ceil(config.batch_size);

    for (stage, param) in [(1u8, Param::EncoderProj), (2u8, Param::Adapter)] {
        let st = config.stage(stage);
        if st.epochs == 0 {
            continue;
        }
        let mut source = ExampleSource::new(config, stage, data, catalog)?;
        let schedule = Schedule {
            lr0: st.lr0,
            lr_min: st.lr_min,
            total_steps: st.epochs * steps_per_epoch,
        };
        let mut grad = Matrix::zeros(dim, dim);
        for epoch in 0..st.epochs {
            let mut loss_sum = 0.0;
            let mut lr = st.lr0;
            for step in 0..steps_per_epoch {
                lr = schedule.cosine_anneal(epoch * steps_per_epoch + step)?;
                grad.scale(0.0);
                let mut batch_loss = 0.0;
                for _ in 0..config.batch_size {
                    let ex = source.next_example()?;
                    batch_loss += head
                        .accumulate_grad(
                            &ex.feature,
                            &ex.soft_label,
                            &text,
                            adjust,
                            param,
                            &mut grad,
                        )
                        .map_err(|e| match e {
                            // parameters blew up on an earlier step
                            Error::DegenerateVector => Error::Diverged {
                                stage,
                                epoch,
                                step,
                                loss: f64::NAN,
                            },
                            e => e,
                        })?;
                }
                batch_loss /= config.batch_size as f64;
                head.param_mut(param)
                    .axpy(-lr / config.batch_size as f64, &grad);
                if !batch_loss.is_finite() || !head.param(param).is_finite() {
                    return Err(Error::Diverged {
                        stage,
                        epoch,
                        step,
                        loss: batch_loss,
                    });
                }
                loss_sum += batch_loss;
            }
            let val_accuracy = match val {
                Some(v) => Some(accuracy(&head, v, &text)?),
                None => None,
            };
            head.history.push(EpochRecord {
                stage,
                epoch,
                train_loss: loss_sum / steps_per_epoch as f64,
                val_accuracy,
                lr,
            });
        }
    }
    Ok(head)
}

fn accuracy(head: &TrainedHead, val: &EmbeddingSet, text: &Matrix) -> Result<f64> {
    let mut correct = 0usize;
    for (label, f) in val.rows() {
        if head.predict(f, text)? == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / val.len().max(1) as f64)
}

/// Per-class one-hot helper for callers building targets by hand.
pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}
