//! Text-similarity-guided pair sampling.
//!
//! The first class of a pair follows the training distribution `n_k / Σ n`.
//! The second is drawn from a temperature softmax over the text-feature
//! similarities to the first class, with the first class itself excluded.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{ClassCatalog, EmbeddingSet};
use crate::{linalg, seed};
use crate::{Error, Result};

/// First-class distribution, conditional second-class matrix and the
/// inverse-CDF tables used for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSamplingModel {
    tau: f64,
    classes: usize,
    counts: Vec<u64>,
    p_first: Vec<f64>,
    p_cond: Vec<f64>,
    cdf: Vec<f64>,
}

/// Builds the sampling model from the catalog's text features and counts.
pub fn build_sampling_model(catalog: &ClassCatalog, tau: f64) -> Result<LocalSamplingModel> {
    catalog.validate()?;
    let c = catalog.num_classes();
    let t = &catalog.text_features;
    let mut sims = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            sims[i * c + j] = linalg::dot(&t[i], &t[j]);
        }
    }
    LocalSamplingModel::from_similarities(&catalog.counts, &sims, tau)
}

impl LocalSamplingModel {
    /// `similarities` is a row-major `C × C` matrix; its diagonal is ignored.
    pub fn from_similarities(counts: &[u64], similarities: &[f64], tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidTemperature(tau));
        }
        let c = counts.len();
        check_counts(counts)?;
        if similarities.len() != c * c {
            return Err(Error::DimMismatch {
                expected: c * c,
                got: similarities.len(),
            });
        }
        let mut p_cond = vec![0.0; c * c];
        for i in 0..c {
            let row = &similarities[i * c..(i + 1) * c];
            // Subtract the off-diagonal max so exp() cannot overflow at small τ.
            let max = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            let out = &mut p_cond[i * c..(i + 1) * c];
            let mut total = 0.0;
            for (j, (o, &s)) in out.iter_mut().zip(row).enumerate() {
                if j != i {
                    *o = libm::exp((s - max) / tau);
                    total += *o;
                }
            }
            out.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Self::assemble(counts, p_cond, tau))
    }

    /// Second class uniform over the other `C − 1` classes: the pairing used
    /// by the standard Mixup and Remix arms, and the `τ → ∞` limit of the
    /// text-guided model.
    pub fn uniform_pairs(counts: &[u64]) -> Result<Self> {
        check_counts(counts)?;
        let c = counts.len();
        let off = 1.0 / (c - 1) as f64;
        let p_cond = (0..c * c)
            .map(|k| if k / c == k % c { 0.0 } else { off })
            .collect();
        Ok(Self::assemble(counts, p_cond, f64::INFINITY))
    }

    fn assemble(counts: &[u64], p_cond: Vec<f64>, tau: f64) -> Self {
        let c = counts.len();
        let total: u64 = counts.iter().sum();
        let p_first = counts.iter().map(|&n| n as f64 / total as f64).collect();
        let mut cdf = vec![0.0; c * c];
        for i in 0..c {
            let row = &p_cond[i * c..(i + 1) * c];
            let out = &mut cdf[i * c..(i + 1) * c];
            let mut acc = 0.0;
            for (o, &p) in out.iter_mut().zip(row) {
                acc += p;
                *o = acc;
            }
            // Pin the tail to exactly 1 from the last class with mass, so a
            // draw can never land on a zero-probability (diagonal) entry.
            if let Some(last) = row.iter().rposition(|&p| p > 0.0) {
                out[last..].iter_mut().for_each(|x| *x = 1.0);
            }
        }
        Self {
            tau,
            classes: c,
            counts: counts.to_vec(),
            p_first,
            p_cond,
            cdf,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn p_first(&self) -> &[f64] {
        &self.p_first
    }

    /// Row-major `C × C` conditional matrix, row = first class.
    pub fn p_cond(&self) -> &[f64] {
        &self.p_cond
    }

    pub fn p_cond_row(&self, first: usize) -> &[f64] {
        &self.p_cond[first * self.classes..(first + 1) * self.classes]
    }

    /// Maps a uniform `u ∈ [0, 1)` to a second class given the first.
    pub fn second_class(&self, first: usize, u: f64) -> usize {
        let row = &self.cdf[first * self.classes..(first + 1) * self.classes];
        row.partition_point(|&c| c <= u).min(self.classes - 1)
    }

    /// Marginal probability that the second class is `y`:
    /// `Σ_{k≠y} p(y | k) p(k)`.
    pub fn second_marginal(&self) -> Vec<f64> {
        let c = self.classes;
        (0..c)
            .map(|y| {
                (0..c)
                    .filter(|&k| k != y)
                    .map(|k| self.p_cond[k * c + y] * self.p_first[k])
                    .sum()
            })
            .collect()
    }

    /// Probability that class `y` is one of the two members of a sampled pair.
    ///
    /// The two members always differ, so the events "first is y" and
    /// "second is y" are disjoint and their probabilities add:
    /// `p(y) + Σ_{k≠y} p(y | k) p(k)`. Entries do not sum to one; they sum to
    /// two.
    pub fn effective_class_distribution(&self) -> Vec<f64> {
        self.p_first
            .iter()
            .zip(self.second_marginal())
            .map(|(p, q)| p + q)
            .collect()
    }

    /// The union rule `p(y) + (1 − p(y)) · Σ_{k≠y} p(y | k) p(k)`, which
    /// treats the two pair members as independent draws. It understates the
    /// exact pair-membership probability by `p(y) · Σ_{k≠y} p(y | k) p(k)`;
    /// the gap vanishes when every class is rare.
    pub fn independent_union_distribution(&self) -> Vec<f64> {
        self.p_first
            .iter()
            .zip(self.second_marginal())
            .map(|(p, q)| p + (1.0 - p) * q)
            .collect()
    }

    /// `γ′ = max_y p(Y = y) / min_y p(Y = y)` over
    /// [`effective_class_distribution`](Self::effective_class_distribution).
    ///
    /// On long-tailed counts this has stayed at or below the raw imbalance
    /// factor in every configuration tried, but no proof of that bound is
    /// known.
    pub fn effective_imbalance_factor(&self) -> f64 {
        imbalance_ratio(&self.effective_class_distribution())
    }
}

fn check_counts(counts: &[u64]) -> Result<()> {
    if counts.len() < 2 {
        return Err(Error::TooFewClasses {
            min: 2,
            got: counts.len(),
        });
    }
    match counts.iter().position(|&n| n == 0) {
        Some(k) => Err(Error::EmptyClass(k)),
        None => Ok(()),
    }
}

/// `max / min` of a positive vector.
pub fn imbalance_ratio(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// One sampled pair, as row indices into the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledPair {
    pub first_row: usize,
    pub first_class: usize,
    pub second_row: usize,
    pub second_class: usize,
}

/// Endless stream of pairs over a training set.
///
/// First rows come from a per-epoch shuffle of the whole set, so each epoch
/// visits every row exactly once as a first member. Second rows are drawn
/// with replacement from the class picked by the sampling model.
pub struct PairStream<'a> {
    model: LocalSamplingModel,
    by_class: Vec<Vec<usize>>,
    labels: &'a [usize],
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl<'a> PairStream<'a> {
    pub fn new(model: LocalSamplingModel, data: &'a EmbeddingSet, seed: u64) -> Result<Self> {
        let by_class = data.indices_by_class(model.num_classes())?;
        if let Some(k) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(k));
        }
        Ok(Self {
            model,
            by_class,
            labels: data.labels(),
            order: (0..data.len()).collect(),
            cursor: data.len(),
            epoch: 0,
            rng: seed::rng(seed),
        })
    }

    pub fn model(&self) -> &LocalSamplingModel {
        &self.model
    }

    /// Number of first-member passes started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next first-member row, without drawing a partner.
    pub fn next_first(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let row = self.order[self.cursor];
        self.cursor += 1;
        row
    }

    pub fn next_pair(&mut self) -> SampledPair {
        let first_row = self.next_first();
        let first_class = self.labels[first_row];
        let second_class = self
            .model
            .second_class(first_class, self.rng.random::<f64>());
        let pool = &self.by_class[second_class];
        let second_row = pool[self.rng.random_range(0..pool.len())];
        SampledPair {
            first_row,
            first_class,
            second_row,
            second_class,
        }
    }
}

impl Iterator for PairStream<'_> {
    type Item = SampledPair;

    fn next(&mut self) -> Option<SampledPair> {
        Some(self.next_pair())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::SplitTag;
    use proptest::prelude::*;

    fn sims3(s12: f64, s13: f64, s23: f64) -> Vec<f64> {
        vec![1.0, s12, s13, s12, 1.0, s23, s13, s23, 1.0]
    }

    fn row_sums_ok(m: &LocalSamplingModel) {
        let c = m.num_classes();
        for i in 0..c {
            let row = m.p_cond_row(i);
            assert_eq!(row[i], 0.0);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_classes_always_swap() {
        let m =
            LocalSamplingModel::from_similarities(&[7, 2], &[1.0, -0.3, -0.3, 1.0], 0.05).unwrap();
        assert_eq!(m.p_cond(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn identical_features_give_uniform_rows() {
        let m = LocalSamplingModel::from_similarities(&[1; 5], &[1.0; 25], 0.05).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.0 } else { 0.25 };
                assert_eq!(m.p_cond_row(i)[j], want);
            }
        }
    }

    #[test]
    fn three_class_reference_value() {
        // 1 / (1 + e^-12), evaluated at high precision.
        let m =
            LocalSamplingModel::from_similarities(&[1, 1, 1], &sims3(0.8, 0.2, 0.0), 0.05).unwrap();
        assert!((m.p_cond_row(0)[1] - 0.999_993_855_825_397_8).abs() < 1e-15);
        row_sums_ok(&m);
    }

    #[test]
    fn tiny_temperature_does_not_overflow() {
        let m = LocalSamplingModel::from_similarities(&[3, 2, 1], &sims3(0.9, -0.9, 0.1), 0.002)
            .unwrap();
        row_sums_ok(&m);
        assert!(m.p_cond().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn rejects_non_positive_temperature() {
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                LocalSamplingModel::from_similarities(&[1, 1], &[1.0; 4], tau),
                Err(Error::InvalidTemperature(_))
            ));
        }
    }

    #[test]
    fn p_first_tracks_counts() {
        let m = LocalSamplingModel::uniform_pairs(&[6, 3, 1]).unwrap();
        for (p, want) in m.p_first().iter().zip([0.6, 0.3, 0.1]) {
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_cdf_skips_diagonal() {
        let m = LocalSamplingModel::uniform_pairs(&[1, 1, 1]).unwrap();
        for u in [0.0, 0.3, 0.5, 0.999_999_999_999] {
            assert_ne!(m.second_class(2, u), 2);
            assert_ne!(m.second_class(0, u), 0);
        }
        assert_eq!(m.second_class(2, 0.999_999_999_999), 1);
    }

    #[test]
    fn balanced_uniform_effective_distribution_is_flat() {
        let m = LocalSamplingModel::uniform_pairs(&[4; 6]).unwrap();
        let e = m.effective_class_distribution();
        assert!(e.iter().all(|&x| (x - e[0]).abs() < 1e-15));
        assert!((m.effective_imbalance_factor() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_class_closed_form() {
        let m = LocalSamplingModel::uniform_pairs(&[100, 1]).unwrap();
        let (p1, p2) = (100.0 / 101.0, 1.0 / 101.0);
        // Second member is always the other class.
        let e = m.effective_class_distribution();
        assert!((e[0] - (p1 + p2)).abs() < 1e-15);
        assert!((e[1] - (p2 + p1)).abs() < 1e-15);
        assert!((m.effective_imbalance_factor() - 1.0).abs() < 1e-12);
        let u = m.independent_union_distribution();
        assert!((u[0] - (p1 + (1.0 - p1) * p2)).abs() < 1e-15);
        assert!((u[1] - (p2 + (1.0 - p2) * p1)).abs() < 1e-15);
        // Both entries are 10101 / 10201.
        assert!((u[0] - 10101.0 / 10201.0).abs() < 1e-15);
        assert!((imbalance_ratio(&u) - 1.0).abs() < 1e-12);
    }

    fn labelled(counts: &[usize]) -> EmbeddingSet {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| core::iter::repeat(k).take(n))
            .collect();
        let features = labels.iter().flat_map(|_| [1.0, 0.0]).collect();
        EmbeddingSet::new(2, labels, features, SplitTag::Train).unwrap()
    }

    #[test]
    fn degenerate_row_forces_partner() {
        let mut sims = vec![0.0; 16];
        sims[1] = 1.0;
        let m = LocalSamplingModel::from_similarities(&[3, 1, 1, 1], &sims, 1e-4).unwrap();
        assert_eq!(m.p_cond_row(0), &[0.0, 1.0, 0.0, 0.0]);
        let data = labelled(&[3, 1, 1, 1]);
        let mut s = PairStream::new(m.clone(), &data, 5).unwrap();
        for p in s.by_ref().take(500) {
            assert_ne!(p.first_class, p.second_class);
            assert_eq!(data.label(p.second_row), p.second_class);
            if p.first_class == 0 {
                assert_eq!(p.second_class, 1);
            }
        }
    }

    #[test]
    fn stream_is_seeded_and_visits_each_row_per_epoch() {
        let m = LocalSamplingModel::uniform_pairs(&[5, 3, 2]).unwrap();
        let data = labelled(&[5, 3, 2]);
        let a: Vec<_> = PairStream::new(m.clone(), &data, 1)
            .unwrap()
            .take(40)
            .collect();
        let b: Vec<_> = PairStream::new(m.clone(), &data, 1)
            .unwrap()
            .take(40)
            .collect();
        assert_eq!(a, b);
        for epoch in a.chunks(10) {
            let mut rows: Vec<_> = epoch.iter().map(|p| p.first_row).collect();
            rows.sort_unstable();
            assert_eq!(rows, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stream_rejects_empty_class() {
        let m = LocalSamplingModel::uniform_pairs(&[1, 1, 1]).unwrap();
        let data = labelled(&[2, 0, 1]);
        assert!(matches!(
            PairStream::new(m.clone(), &data, 0),
            Err(Error::EmptyClass(1))
        ));
    }

    fn arb_model() -> impl Strategy<Value = (Vec<u64>, Vec<f64>, f64)> {
        (2usize..7).prop_flat_map(|c| {
            (
                proptest::collection::vec(1u64..1000, c),
                proptest::collection::vec(-1.0f64..1.0, c * c),
                prop_oneof![1e-3f64..0.01, 0.01f64..1.0, 1.0f64..100.0],
            )
        })
    }

    proptest! {
        #[test]
        fn rows_are_stochastic_with_zero_diagonal((counts, sims, tau) in arb_model()) {
            let m = LocalSamplingModel::from_similarities(&counts, &sims, tau).unwrap();
            row_sums_ok(&m);
            let e = m.effective_class_distribution();
            for (y, &p) in m.p_first().iter().enumerate() {
                prop_assert!(e[y] >= p);
            }
        }

        #[test]
        fn raising_similarity_raises_probability(
            (counts, mut sims, tau) in arb_model(),
            bump in 0.01f64..0.5,
        ) {
            let c = counts.len();
            prop_assume!(c >= 3);
            let tau = tau.max(0.05);
            let before = LocalSamplingModel::from_similarities(&counts, &sims, tau).unwrap().p_cond_row(0)[1];
            prop_assume!(before < 1.0 - 1e-9 && before > 1e-200);
            sims[1] += bump;
            let after = LocalSamplingModel::from_similarities(&counts, &sims, tau).unwrap().p_cond_row(0)[1];
            prop_assert!(after > before, "{before} -> {after}");
        }

        #[test]
        fn huge_temperature_is_uniform((counts, sims, _) in arb_model()) {
            let m = LocalSamplingModel::from_similarities(&counts, &sims, 1e6).unwrap();
            let c = counts.len();
            for i in 0..c {
                for j in (0..c).filter(|&j| j != i) {
                    prop_assert!((m.p_cond_row(i)[j] - 1.0 / (c - 1) as f64).abs() < 1e-4);
                }
            }
        }
    }
}
