//! Self-checks run by `lfm verify`: the closed-form label shift against a
//! numerical minimiser, the λ sampler against the arcsine law, analytic
//! gradients against finite differences, the pair sampler against its own
//! probabilities, and the uniform-temperature limit against plain mixup.

use lfm_core::datamodel::{
    build_longtail_counts, generate_synthetic, random_pairs, subset_longtail, ClassCatalog,
    EmbeddingSet, LongTailSpec, SyntheticSpec,
};
use lfm_core::linalg::{self, Matrix};
use lfm_core::mixup::{arcsine_cdf, label_shift, shift_argmin_oracle, LambdaSampler};
use lfm_core::model::log_prior;
use lfm_core::model::{
    soft_ce_loss, ExampleSource, LossKind, MixArm, Param, StageConfig, TrainConfig, TrainedHead,
};
use lfm_core::seed;
use lfm_core::textguide::{build_sampling_model, LocalSamplingModel, PairStream};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::artifacts::SuiteOutcome;
use crate::config::VerifyConfig;

pub const LABEL_SHIFT_TOL: f64 = 1e-6;
pub const KS_MAX: f64 = 0.01;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const SIGMA_BAND: f64 = 3.0;
pub const CHI2_MIN_P: f64 = 0.001;
pub const UNIFORM_LIMIT_TAU: f64 = 1e6;
pub const UNIFORM_LIMIT_TOL: f64 = 1e-4;

fn suite_rng(seed: u64, suite: u64) -> impl Rng {
    seed::rng(seed::derive_indexed(seed, seed::TAG_VERIFY, suite))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelShiftStats {
    pub triples: usize,
    pub max_abs_error: f64,
}

/// Draws `(λ_x, α, n_i, n_j)` with `λ_x ∈ [0, 1]`, `α ∈ [0, 2]` and counts in
/// `1..=10⁴`, and compares the closed form with the numerical minimiser.
pub fn label_shift_equivalence(triples: usize, seed: u64) -> LabelShiftStats {
    let mut rng = suite_rng(seed, 0);
    let mut max_abs_error = 0.0f64;
    for _ in 0..triples {
        let lambda_x: f64 = rng.random();
        let alpha = 2.0 * rng.random::<f64>();
        let n_i = rng.random_range(1..=10_000u64);
        let n_j = rng.random_range(1..=10_000u64);
        let p = n_i as f64 / (n_i + n_j) as f64;
        let err = (label_shift(lambda_x, alpha, n_i, n_j)
            - shift_argmin_oracle(lambda_x, alpha, p))
        .abs();
        max_abs_error = max_abs_error.max(err);
    }
    LabelShiftStats {
        triples,
        max_abs_error,
    }
}

/// One-sample Kolmogorov–Smirnov statistic. Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic. Sorts both inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS statistic of Beta(½, ½) draws against the arcsine CDF.
pub fn arcsine_ks(samples: usize, seed: u64) -> f64 {
    let mut rng = suite_rng(seed, 1);
    let sampler = LambdaSampler::new(0.5, 0.5).expect("Beta(1/2, 1/2) is valid");
    let mut xs: Vec<f64> = (0..samples).map(|_| sampler.sample(&mut rng)).collect();
    ks_statistic(&mut xs, arcsine_cdf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStats {
    pub points: usize,
    pub max_relative_error: f64,
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok((u, n)) = linalg::normalize(&v) {
            if n > 1e-3 {
                return u;
            }
        }
    }
}

fn perturbed_identity<R: Rng>(rng: &mut R, d: usize, spread: f64) -> Matrix {
    let mut m = Matrix::identity(d);
    m.as_mut_slice()
        .iter_mut()
        .for_each(|x| *x += spread * rng.random_range(-1.0..1.0));
    m
}

fn example_loss(
    head: &TrainedHead,
    base: &[f64],
    target: &[f64],
    text: &Matrix,
    adjust: Option<&[f64]>,
) -> f64 {
    let mut logits = head.logits(base, text).expect("finite point");
    if let Some(adj) = adjust {
        logits.iter_mut().zip(adj).for_each(|(z, a)| *z += a);
    }
    soft_ce_loss(&logits, target).0
}

/// Relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` of the analytic gradient
/// against central differences, at random heads, inputs and soft targets,
/// alternating between the two parameter blocks.
pub fn gradient_check(points: usize, seed: u64) -> GradientStats {
    const H: f64 = 1e-5;
    let mut rng = suite_rng(seed, 2);
    let mut max_relative_error = 0.0f64;
    for point in 0..points {
        let d = rng.random_range(3..=8usize);
        let c = rng.random_range(2..=6usize);
        let mut head = TrainedHead::zero_shot(d, rng.random_range(1.0..30.0));
        head.adapter = perturbed_identity(&mut rng, d, 0.3);
        head.encoder_proj = perturbed_identity(&mut rng, d, 0.3);
        let base = random_unit(&mut rng, d);
        let text = Matrix::from_rows(&(0..c).map(|_| random_unit(&mut rng, d)).collect::<Vec<_>>())
            .expect("rectangular");
        let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let adjust = (point % 3 == 0).then(|| {
            log_prior(
                &(0..c)
                    .map(|_| rng.random_range(1..500u64))
                    .collect::<Vec<_>>(),
            )
        });
        let adjust = adjust.as_deref();
        let param = if point % 2 == 0 {
            Param::Adapter
        } else {
            Param::EncoderProj
        };

        let mut analytic = Matrix::zeros(d, d);
        head.accumulate_grad(&base, &target, &text, adjust, param, &mut analytic)
            .expect("finite point");
        let mut numeric = Matrix::zeros(d, d);
        for k in 0..d * d {
            let orig = head.param(param).as_slice()[k];
            head.param_mut(param).as_mut_slice()[k] = orig + H;
            let up = example_loss(&head, &base, &target, &text, adjust);
            head.param_mut(param).as_mut_slice()[k] = orig - H;
            let down = example_loss(&head, &base, &target, &text, adjust);
            head.param_mut(param).as_mut_slice()[k] = orig;
            numeric.as_mut_slice()[k] = (up - down) / (2.0 * H);
        }
        let mut diff = analytic.clone();
        diff.axpy(-1.0, &numeric);
        let scale = analytic
            .frobenius_sq()
            .sqrt()
            .max(numeric.frobenius_sq().sqrt())
            .max(1e-12);
        max_relative_error = max_relative_error.max(diff.frobenius_sq().sqrt() / scale);
    }
    GradientStats {
        points,
        max_relative_error,
    }
}

/// The ten-class set the sampler suites draw from: `γ = 10` counts from 500
/// down to 50, classes paired at random.
pub fn sampler_fixture(seed: u64) -> lfm_core::Result<(EmbeddingSet, ClassCatalog)> {
    let spec = SyntheticSpec {
        classes: 10,
        dim: 16,
        pair_groups: random_pairs(10, seed),
        train_per_class: 500,
        val_per_class: 1,
        seed,
        ..SyntheticSpec::default()
    };
    let synth = generate_synthetic(&spec)?;
    let counts = build_longtail_counts(&LongTailSpec {
        n_max: 500,
        gamma: 10.0,
        classes: 10,
    })?;
    subset_longtail(&synth.train, &synth.catalog, &counts, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerStats {
    pub draws: usize,
    /// Largest `|observed − expected| / σ` over the conditional cells.
    pub conditional_max_z: f64,
    pub conditional_outside: usize,
    /// Largest `|observed − expected| / σ` over per-class pair membership.
    pub membership_max_z: f64,
    pub membership_outside: usize,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl SamplerStats {
    pub fn passed(&self) -> bool {
        self.conditional_outside == 0 && self.membership_outside == 0 && self.p_value > CHI2_MIN_P
    }
}

/// Draws pairs at `τ = 1` and compares second-class frequencies within each
/// first class against `p_cond`, and the frequency with which each class
/// appears in a pair against the effective class distribution. The χ² test
/// pools the conditional table, one constraint per row.
pub fn sampler_fidelity(draws: usize, seed: u64) -> lfm_core::Result<SamplerStats> {
    let (data, catalog) = sampler_fixture(seed)?;
    let model = build_sampling_model(&catalog, 1.0)?;
    sampler_fidelity_with(
        &model,
        &data,
        draws,
        seed::derive_indexed(seed, seed::TAG_VERIFY, 3),
    )
}

/// Pair counts from a run of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTally {
    pub draws: usize,
    /// `table[i][j]` counts pairs with first class `i` and second class `j`.
    pub table: Vec<Vec<u64>>,
    /// Number of pairs containing each class.
    pub membership: Vec<u64>,
}

pub fn draw_pairs(
    model: &LocalSamplingModel,
    data: &EmbeddingSet,
    draws: usize,
    seed: u64,
) -> lfm_core::Result<PairTally> {
    let c = model.num_classes();
    let mut table = vec![vec![0u64; c]; c];
    let mut membership = vec![0u64; c];
    let mut stream = PairStream::new(model.clone(), data, seed)?;
    for _ in 0..draws {
        let p = stream.next_pair();
        table[p.first_class][p.second_class] += 1;
        membership[p.first_class] += 1;
        membership[p.second_class] += 1;
    }
    Ok(PairTally {
        draws,
        table,
        membership,
    })
}

pub fn sampler_fidelity_with(
    model: &LocalSamplingModel,
    data: &EmbeddingSet,
    draws: usize,
    seed: u64,
) -> lfm_core::Result<SamplerStats> {
    Ok(score_pairs(model, &draw_pairs(model, data, draws, seed)?))
}

/// Scores observed pair counts against `model`.
pub fn score_pairs(model: &LocalSamplingModel, tally: &PairTally) -> SamplerStats {
    let PairTally {
        draws,
        table,
        membership,
    } = tally;
    let draws = *draws;
    let (mut conditional_max_z, mut conditional_outside) = (0.0f64, 0usize);
    let (mut chi2, mut dof) = (0.0, 0usize);
    for (i, row) in table.iter().enumerate() {
        let n_i: u64 = row.iter().sum();
        let mut cells = 0usize;
        for (j, &observed) in row.iter().enumerate() {
            let p = model.p_cond_row(i)[j];
            let expected = n_i as f64 * p;
            if p == 0.0 || n_i == 0 {
                if observed != 0 {
                    conditional_outside += 1;
                    conditional_max_z = f64::INFINITY;
                }
                continue;
            }
            let sigma = (n_i as f64 * p * (1.0 - p)).sqrt();
            let z = if sigma > 0.0 {
                (observed as f64 - expected).abs() / sigma
            } else {
                0.0
            };
            conditional_max_z = conditional_max_z.max(z);
            conditional_outside += usize::from(z > SIGMA_BAND);
            chi2 += (observed as f64 - expected).powi(2) / expected;
            cells += 1;
        }
        dof += cells.saturating_sub(1);
    }

    let (mut membership_max_z, mut membership_outside) = (0.0f64, 0usize);
    let n = draws as f64;
    for (k, &p) in model.effective_class_distribution().iter().enumerate() {
        let sigma = (p * (1.0 - p) / n).sqrt();
        let dev = (membership[k] as f64 / n - p).abs();
        let z = if sigma > 0.0 {
            dev / sigma
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        membership_max_z = membership_max_z.max(z);
        membership_outside += usize::from(z > SIGMA_BAND);
    }

    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(chi2)
    };
    SamplerStats {
        draws,
        conditional_max_z,
        conditional_outside,
        membership_max_z,
        membership_outside,
        chi2,
        dof,
        p_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitStats {
    /// Largest off-diagonal `|p_cond − 1/(C−1)|` at `τ = 10⁶`.
    pub uniform_max_deviation: f64,
    pub ks_lambda_x: f64,
    pub ks_lambda_y: f64,
    /// Largest `|λ_y − λ_x|` seen in either arm.
    pub max_label_gap: f64,
}

impl LimitStats {
    pub fn passed(&self) -> bool {
        self.uniform_max_deviation <= UNIFORM_LIMIT_TOL
            && self.ks_lambda_x < KS_MAX
            && self.ks_lambda_y < KS_MAX
            && self.max_label_gap == 0.0
    }
}

fn lambda_draws(
    config: &TrainConfig,
    data: &EmbeddingSet,
    catalog: &ClassCatalog,
    samples: usize,
) -> lfm_core::Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut source = ExampleSource::new(config, 2, data, catalog)?;
    let (mut xs, mut ys, mut gap) = (
        Vec::with_capacity(samples),
        Vec::with_capacity(samples),
        0.0f64,
    );
    for _ in 0..samples {
        let e = source.next_example()?;
        gap = gap.max((e.lambda_y - e.lambda_x).abs());
        xs.push(e.lambda_x);
        ys.push(e.lambda_y);
    }
    Ok((xs, ys, gap))
}

/// At `τ = 10⁶` the text-guided sampler is uniform over the other classes, and
/// with `α = 0` the LFM arm then draws the same `(λ_x, λ_y)` law as mixup.
/// The two arms run on independent seeds.
pub fn limit_equivalence(samples: usize, seed: u64) -> lfm_core::Result<LimitStats> {
    let (data, catalog) = sampler_fixture(seed)?;
    let model = build_sampling_model(&catalog, UNIFORM_LIMIT_TAU)?;
    let c = model.num_classes();
    let uniform = 1.0 / (c - 1) as f64;
    let mut uniform_max_deviation = 0.0f64;
    for i in 0..c {
        for (j, &p) in model.p_cond_row(i).iter().enumerate() {
            if i != j {
                uniform_max_deviation = uniform_max_deviation.max((p - uniform).abs());
            }
        }
    }

    let stage = StageConfig {
        epochs: 1,
        lr0: 0.0,
        lr_min: 0.0,
        alpha: 0.0,
        tau: UNIFORM_LIMIT_TAU,
    };
    let base = TrainConfig {
        stage1: stage,
        stage2: stage,
        loss: LossKind::CrossEntropy,
        ..TrainConfig::default()
    };
    let lfm = TrainConfig {
        arm: MixArm::Lfm,
        seed: seed::derive_indexed(seed, seed::TAG_VERIFY, 4),
        ..base
    };
    let mixup = TrainConfig {
        arm: MixArm::Mixup,
        seed: seed::derive_indexed(seed, seed::TAG_VERIFY, 5),
        ..base
    };
    let (mut lx, mut ly, gap_a) = lambda_draws(&lfm, &data, &catalog, samples)?;
    let (mut mx, mut my, gap_b) = lambda_draws(&mixup, &data, &catalog, samples)?;
    Ok(LimitStats {
        uniform_max_deviation,
        ks_lambda_x: ks_two_sample(&mut lx, &mut mx),
        ks_lambda_y: ks_two_sample(&mut ly, &mut my),
        max_label_gap: gap_a.max(gap_b),
    })
}

fn outcome(name: &str, passed: bool, detail: String) -> SuiteOutcome {
    SuiteOutcome {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every suite and reports one outcome per suite.
pub fn run_all(config: &VerifyConfig, seed: u64) -> Vec<SuiteOutcome> {
    let mut out = Vec::new();

    let t = label_shift_equivalence(config.label_shift_triples, seed);
    out.push(outcome(
        "label-shift closed form vs numeric argmin",
        t.max_abs_error <= LABEL_SHIFT_TOL,
        format!(
            "{} triples, max |error| {:.3e} (limit {LABEL_SHIFT_TOL:e})",
            t.triples, t.max_abs_error
        ),
    ));

    let ks = arcsine_ks(config.ks_samples, seed);
    out.push(outcome(
        "Beta(1/2,1/2) sampler vs arcsine CDF",
        ks < KS_MAX,
        format!("{} samples, KS {ks:.5} (limit {KS_MAX})", config.ks_samples),
    ));

    let g = gradient_check(config.gradient_points, seed);
    out.push(outcome(
        "analytic gradients vs central differences",
        g.max_relative_error < GRADIENT_TOL,
        format!(
            "{} points, max relative error {:.3e} (limit {GRADIENT_TOL:e})",
            g.points, g.max_relative_error
        ),
    ));

    out.push(match sampler_fidelity(config.sampler_draws, seed) {
        Ok(s) => outcome(
            "pair sampler frequencies",
            s.passed(),
            format!(
                "{} draws, conditional max z {:.2} ({} cells beyond {SIGMA_BAND} sigma), membership max z {:.2} ({} beyond), chi2 {:.1} on {} dof, p {:.4}",
                s.draws, s.conditional_max_z, s.conditional_outside, s.membership_max_z, s.membership_outside, s.chi2, s.dof, s.p_value
            ),
        ),
        Err(e) => outcome("pair sampler frequencies", false, e.to_string()),
    });

    out.push(match limit_equivalence(config.limit_samples, seed) {
        Ok(l) => outcome(
            "uniform-temperature limit and mixup equivalence",
            l.passed(),
            format!(
                "max |p_cond - 1/(C-1)| {:.2e}, KS lambda_x {:.5}, KS lambda_y {:.5}, max |lambda_y - lambda_x| {:e}",
                l.uniform_max_deviation, l.ks_lambda_x, l.ks_lambda_y, l.max_label_gap
            ),
        ),
        Err(e) => outcome("uniform-temperature limit and mixup equivalence", false, e.to_string()),
    });
    out
}
