//! Label-shift mixup and the baseline label rules it is compared against.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::optim::golden_section;
use crate::{Error, Result};

/// Blended feature and soft label of one mixed pair.
///
/// `feature = λ_x · x_i + (1 − λ_x) · x_j` exactly; it is not re-normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub feature: Vec<f64>,
    pub soft_label: Vec<f64>,
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// `(class of x_i, class of x_j)`
    pub source: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ShiftParams {
    /// Label-shift intensity, `α ≥ 0`.
    pub alpha: f64,
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta_a: 0.5,
            beta_b: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RemixParams {
    /// Count ratio at which a pair counts as head/tail.
    pub kappa: f64,
    /// Mixing-weight threshold below which the label goes to the tail class.
    pub tau: f64,
}

impl Default for RemixParams {
    fn default() -> Self {
        Self {
            kappa: 3.0,
            tau: 0.5,
        }
    }
}

/// How the label weight `λ_y` is derived from the feature weight `λ_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelRule {
    /// `λ_y = λ_x`
    Standard,
    /// `λ_y = clamp(λ_x − α (n_i − n_j)/(n_i + n_j), 0, 1)`
    LabelShift {
        alpha: f64,
    },
    Remix(RemixParams),
}

impl LabelRule {
    pub fn lambda_y(&self, lambda_x: f64, n_i: u64, n_j: u64) -> f64 {
        match *self {
            LabelRule::Standard => lambda_x,
            LabelRule::LabelShift { alpha } => label_shift(lambda_x, alpha, n_i, n_j),
            LabelRule::Remix(p) => remix_label(lambda_x, n_i, n_j, &p),
        }
    }
}

/// Shifts the label weight away from the more frequent class of the pair.
///
/// With `n_i > n_j` the result is at most `λ_x`, i.e. the mixed label favours
/// the rarer class `y_j`.
pub fn label_shift(lambda_x: f64, alpha: f64, n_i: u64, n_j: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&lambda_x));
    debug_assert!(alpha >= 0.0 && n_i >= 1 && n_j >= 1);
    let (a, b) = (n_i as f64, n_j as f64);
    (lambda_x - alpha * (a - b) / (a + b)).clamp(0.0, 1.0)
}

/// Remix label assignment: when one class outnumbers the other by at least
/// `κ` and the feature weight leans toward the rarer class by more than
/// `τ`, the whole label goes to the rarer class.
pub fn remix_label(lambda_x: f64, n_i: u64, n_j: u64, params: &RemixParams) -> f64 {
    let ratio = n_i as f64 / n_j as f64;
    if ratio >= params.kappa && lambda_x < params.tau {
        0.0
    } else if ratio <= 1.0 / params.kappa && 1.0 - lambda_x < params.tau {
        1.0
    } else {
        lambda_x
    }
}

/// The convex objective whose constrained minimiser is the label-shift rule:
/// `(λ − λ_x)²/2 + α [(λ − 1/2)² − (λ − p)²]` with `p = n_i / (n_i + n_j)`.
pub fn shift_objective(lambda: f64, lambda_x: f64, alpha: f64, p: f64) -> f64 {
    let d = lambda - lambda_x;
    let balance = (lambda - 0.5) * (lambda - 0.5) - (lambda - p) * (lambda - p);
    0.5 * d * d + alpha * balance
}

/// Minimises [`shift_objective`] over `[0, 1]` numerically. This never touches
/// the closed form and exists to cross-check [`label_shift`].
pub fn shift_argmin_oracle(lambda_x: f64, alpha: f64, p: f64) -> f64 {
    golden_section(|l| shift_objective(l, lambda_x, alpha, p), 0.0, 1.0, 1e-10)
}

/// Source of the feature weight `λ_x`.
#[derive(Debug, Clone, Copy)]
pub enum LambdaSampler {
    /// Beta(½, ½), drawn as `sin²(π U / 2)`.
    Arcsine,
    Beta(Beta<f64>),
}

impl LambdaSampler {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a == 0.5 && b == 0.5 {
            return Ok(LambdaSampler::Arcsine);
        }
        Beta::new(a, b)
            .map(LambdaSampler::Beta)
            .map_err(|e| Error::InvalidParameter(format!("Beta({a}, {b}): {e}")))
    }

    pub fn from_params(params: &ShiftParams) -> Result<Self> {
        Self::new(params.beta_a, params.beta_b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LambdaSampler::Arcsine => {
                let s = libm::sin(core::f64::consts::FRAC_PI_2 * rng.random::<f64>());
                s * s
            }
            LambdaSampler::Beta(beta) => beta.sample(rng),
        }
    }
}

/// CDF of Beta(½, ½): `(2/π) · asin(√x)`.
pub fn arcsine_cdf(x: f64) -> f64 {
    core::f64::consts::FRAC_2_PI * libm::asin(libm::sqrt(x.clamp(0.0, 1.0)))
}

/// Mixes two rows with explicit weights.
pub fn blend(
    (x_i, y_i): (&[f64], usize),
    (x_j, y_j): (&[f64], usize),
    lambda_x: f64,
    lambda_y: f64,
    classes: usize,
) -> Result<MixedExample> {
    if x_i.len() != x_j.len() {
        return Err(Error::DimMismatch {
            expected: x_i.len(),
            got: x_j.len(),
        });
    }
    for label in [y_i, y_j] {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    let feature = x_i
        .iter()
        .zip(x_j)
        .map(|(a, b)| lambda_x * a + (1.0 - lambda_x) * b)
        .collect();
    let mut soft_label = vec![0.0; classes];
    soft_label[y_i] += lambda_y;
    soft_label[y_j] += 1.0 - lambda_y;
    Ok(MixedExample {
        feature,
        soft_label,
        lambda_x,
        lambda_y,
        source: (y_i, y_j),
    })
}

/// Draws `λ_x`, derives `λ_y` with `rule` from the class counts and blends.
pub fn mix<R: Rng + ?Sized>(
    first: (&[f64], usize),
    second: (&[f64], usize),
    counts: &[u64],
    rule: &LabelRule,
    sampler: &LambdaSampler,
    rng: &mut R,
) -> Result<MixedExample> {
    let lambda_x = sampler.sample(rng);
    let (n_i, n_j) = (counts[first.1], counts[second.1]);
    let lambda_y = rule.lambda_y(lambda_x, n_i, n_j);
    blend(first, second, lambda_x, lambda_y, counts.len())
}
