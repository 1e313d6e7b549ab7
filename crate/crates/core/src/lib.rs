//! Local feature mixup for long-tailed classification over precomputed,
//! unit-norm embeddings.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem or a terminal lives in the companion `lfm` crate.
//!
//! Module map:
//!
//! - [`datamodel`]: embedding sets, class catalogs, long-tail subsetting and
//!   the synthetic benchmark generator.
//! - [`textguide`]: text-similarity pair sampling and the effective class
//!   distribution it induces.
//! - [`mixup`]: label-shift mixup, the Mixup / Remix baselines and the
//!   constrained-argmin oracle for the label-shift rule.
//! - [`model`]: cosine classifier head, losses, gradients and the two-stage
//!   trainer.
//! - [`evaluate`]: many/medium/few-shot metrics and confusion matrices.
//! - [`bench`]: end-to-end runs on the synthetic long-tailed benchmark.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bench;
pub mod datamodel;
mod error;
pub mod evaluate;
pub mod linalg;
pub mod mixup;
pub mod model;
pub mod optim;
pub mod seed;
pub mod textguide;

pub use error::{Error, Result};
