//! Cosine-similarity classifier head and its two-stage trainer.
//!
//! A base embedding `b` passes through a stand-in for the open image encoder
//! (`encoder_proj`, `d × d`), then the adapter `W` (`d × d`), and is projected
//! onto the unit sphere. Logits are the scaled cosine similarities to the
//! frozen class text features.

mod head;
mod loss;
mod schedule;
mod train;

pub use head::{argmax, cosine_logits, EpochRecord, ForwardTrace, Param, TrainedHead};
pub use loss::{balanced_ce_adjust, log_prior, log_softmax, soft_ce_loss, softmax};
pub use schedule::Schedule;
pub use train::{one_hot, train, ExampleSource, LossKind, MixArm, StageConfig, TrainConfig};

/// Logits are `s · cos`; raw cosines in `[-1, 1]` give CE gradients that are
/// far too small to train with.
pub const DEFAULT_LOGIT_SCALE: f64 = 30.0;
