//! Embedding sets, class catalogs, long-tailed subsets and the synthetic
//! benchmark generator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Matrix, UNIT_NORM_TOL};
use crate::seed;
use crate::{Error, Result};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "a photo of a {CLASS}";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SplitTag {
    Train,
    Val,
}

/// Labelled unit-norm feature rows, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    labels: Vec<usize>,
    features: Vec<f64>,
    split: SplitTag,
}

impl EmbeddingSet {
    /// Builds a set from a flat row-major feature buffer. Every row must be
    /// unit norm within [`UNIT_NORM_TOL`].
    pub fn new(
        dim: usize,
        labels: Vec<usize>,
        features: Vec<f64>,
        split: SplitTag,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimMismatch {
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        for (row, chunk) in features.chunks_exact(dim).enumerate() {
            let norm = linalg::norm(chunk);
            if !(libm::fabs(norm - 1.0) <= UNIT_NORM_TOL) {
                return Err(Error::NotUnitNorm { row, norm });
            }
        }
        Ok(Self {
            dim,
            labels,
            features,
            split,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn feature(&self, row: usize) -> &[f64] {
        &self.features[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.labels
            .iter()
            .copied()
            .zip(self.features.chunks_exact(self.dim))
    }

    /// Row indices grouped by label, in file order.
    pub fn indices_by_class(&self, classes: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); classes];
        for (row, &label) in self.labels.iter().enumerate() {
            out.get_mut(label)
                .ok_or(Error::LabelOutOfRange { label, classes })?
                .push(row);
        }
        Ok(out)
    }

    pub fn class_counts(&self, classes: usize) -> Result<Vec<usize>> {
        Ok(self
            .indices_by_class(classes)?
            .iter()
            .map(Vec::len)
            .collect())
    }

    /// Checks that dimensions and labels agree with `catalog`.
    pub fn check_catalog(&self, catalog: &ClassCatalog) -> Result<()> {
        if catalog.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: catalog.dim(),
                got: self.dim,
            });
        }
        let classes = catalog.num_classes();
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let mut labels = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            labels.push(self.labels[r]);
            features.extend_from_slice(self.feature(r));
        }
        Self {
            dim: self.dim,
            labels,
            features,
            split: self.split,
        }
    }
}

/// Class names, training-split counts and frozen text features.
///
/// Counts are stored in class-index order and are not required to be sorted.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ClassCatalog {
    pub names: Vec<String>,
    pub counts: Vec<u64>,
    pub prompt_template: String,
    pub text_features: Vec<Vec<f64>>,
}

impl ClassCatalog {
    pub fn new(names: Vec<String>, counts: Vec<u64>, text_features: Vec<Vec<f64>>) -> Result<Self> {
        let catalog = Self {
            names,
            counts,
            prompt_template: String::from(DEFAULT_PROMPT_TEMPLATE),
            text_features,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.names.len();
        if c < 2 {
            return Err(Error::TooFewClasses { min: 2, got: c });
        }
        for (what, len) in [
            ("counts", self.counts.len()),
            ("text_features", self.text_features.len()),
        ] {
            if len != c {
                return Err(Error::InvalidParameter(format!(
                    "catalog has {c} names but {len} {what}"
                )));
            }
        }
        if let Some(class) = self.counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(class));
        }
        let dim = self.text_features[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("text features are empty".into()));
        }
        for (row, f) in self.text_features.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: f.len(),
                });
            }
            let norm = linalg::norm(f);
            if !(libm::fabs(norm - 1.0) <= UNIT_NORM_TOL) {
                return Err(Error::NotUnitNorm { row, norm });
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn dim(&self) -> usize {
        self.text_features.first().map_or(0, Vec::len)
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Text features as a `C × d` matrix.
    pub fn text_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.text_features).expect("validated catalog is rectangular")
    }

    /// The prompt for one class, e.g. "a photo of a dog".
    pub fn prompt(&self, class: usize) -> String {
        self.prompt_template.replace("{CLASS}", &self.names[class])
    }

    /// Class indices ordered by count, largest first. Ties keep index order.
    pub fn sorted_by_count(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]));
        order
    }

    /// `n_max / n_min` over the stored counts.
    pub fn imbalance_factor(&self) -> f64 {
        let max = self.counts.iter().copied().max().unwrap_or(1);
        let min = self.counts.iter().copied().min().unwrap_or(1).max(1);
        max as f64 / min as f64
    }

    /// Fails unless `counts` matches the per-class row counts of `data`.
    pub fn check_counts(&self, data: &EmbeddingSet) -> Result<()> {
        let actual = data.class_counts(self.num_classes())?;
        for (class, (&catalog, &data)) in self.counts.iter().zip(&actual).enumerate() {
            if catalog != data as u64 {
                return Err(Error::CountMismatch {
                    class,
                    catalog,
                    data,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LongTailSpec {
    pub n_max: u64,
    pub gamma: f64,
    pub classes: usize,
}

/// Exponential long-tail profile `floor(n_max · γ^(−k/(C−1)))`.
///
/// This reproduces the CIFAR10-LT / CIFAR100-LT training-set totals exactly,
/// e.g. 12,406 images for ten classes at `n_max = 5000`, `γ = 100`.
pub fn build_longtail_counts(spec: &LongTailSpec) -> Result<Vec<u64>> {
    let LongTailSpec {
        n_max,
        gamma,
        classes,
    } = *spec;
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::InvalidImbalance(gamma));
    }
    if classes < 2 {
        return Err(Error::TooFewClasses {
            min: 2,
            got: classes,
        });
    }
    if (n_max as f64) < gamma {
        return Err(Error::EmptyTail { n_max, gamma });
    }
    let span = (classes - 1) as f64;
    let counts = (0..classes)
        .map(|k| {
            let exact = n_max as f64 * libm::pow(gamma, -(k as f64) / span);
            // pow can land a hair under an exact integer (n_max / γ at the tail)
            libm::floor(exact * (1.0 + 1e-12)) as u64
        })
        .collect();
    Ok(counts)
}

/// Draws `counts[k]` rows of each class `k` without replacement. Selected rows
/// keep their original relative order; the returned catalog carries the new
/// counts.
pub fn subset_longtail(
    data: &EmbeddingSet,
    catalog: &ClassCatalog,
    counts: &[u64],
    seed: u64,
) -> Result<(EmbeddingSet, ClassCatalog)> {
    data.check_catalog(catalog)?;
    let classes = catalog.num_classes();
    if counts.len() != classes {
        return Err(Error::InvalidParameter(format!(
            "{} counts given for {classes} classes",
            counts.len()
        )));
    }
    let by_class = data.indices_by_class(classes)?;
    let mut rng = seed::rng(seed::derive(seed, seed::TAG_SUBSET));
    let mut keep = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for (class, (pool, &want)) in by_class.iter().zip(counts).enumerate() {
        if (pool.len() as u64) < want {
            return Err(Error::InsufficientSamples {
                class,
                name: catalog.names[class].clone(),
                available: pool.len(),
                requested: want,
            });
        }
        let mut pool = pool.clone();
        pool.shuffle(&mut rng);
        keep.extend_from_slice(&pool[..want as usize]);
    }
    keep.sort_unstable();
    let subset = data.select(&keep);
    let mut out_catalog = catalog.clone();
    out_catalog.counts = counts.to_vec();
    Ok((subset, out_catalog))
}

/// Desk-scale stand-in for vision-language embeddings: class prototypes on the
/// unit sphere, paired classes close together and the rest near-orthogonal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Disjoint class pairs whose prototypes sit at cosine `pair_cosine`.
    pub pair_groups: Vec<(usize, usize)>,
    pub pair_cosine: f64,
    /// Per-coordinate standard deviation of the image-feature noise.
    pub intra_noise: f64,
    /// Per-coordinate standard deviation of a fixed per-class offset between
    /// a class's image-feature centre and its text feature. Zero puts image
    /// features around the text features themselves, which makes zero-shot
    /// prediction near-optimal.
    pub image_offset: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 16,
            pair_groups: Vec::new(),
            pair_cosine: 0.85,
            intra_noise: 0.1,
            image_offset: 0.0,
            train_per_class: 500,
            val_per_class: 50,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "dim must be >= 3, got {}",
                self.dim
            )));
        }
        if self.classes < 4 {
            return Err(Error::TooFewClasses {
                min: 4,
                got: self.classes,
            });
        }
        if !(self.pair_cosine >= 0.8 && self.pair_cosine < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pair_cosine must be in [0.8, 1), got {}",
                self.pair_cosine
            )));
        }
        for (name, v) in [
            ("intra_noise", self.intra_noise),
            ("image_offset", self.image_offset),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.train_per_class == 0 || self.val_per_class == 0 {
            return Err(Error::InvalidParameter(
                "per-class row counts must be positive".into(),
            ));
        }
        let mut seen = vec![false; self.classes];
        for &(a, b) in &self.pair_groups {
            for k in [a, b] {
                if k >= self.classes {
                    return Err(Error::LabelOutOfRange {
                        label: k,
                        classes: self.classes,
                    });
                }
                if core::mem::replace(&mut seen[k], true) {
                    return Err(Error::InvalidParameter(format!(
                        "class {k} appears in more than one pair slot"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Splits the classes into `C / 2` disjoint pairs at random. Which classes are
/// semantically related has nothing to do with how many samples they have, so
/// a pair may join two head classes, two tail classes or one of each.
pub fn random_pairs(classes: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..classes).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::TAG_PAIRING)));
    order.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: EmbeddingSet,
    pub val: EmbeddingSet,
    pub catalog: ClassCatalog,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (c, d) = (spec.classes, spec.dim);
    let mut rng = seed::rng(seed::derive(spec.seed, seed::TAG_SYNTH));

    // Random directions, orthonormalised while they still fit in d dimensions.
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(c);
    for k in 0..c {
        loop {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if k < d {
                for p in &protos {
                    let proj = linalg::dot(&v, p);
                    v.iter_mut().zip(p).for_each(|(x, y)| *x -= proj * y);
                }
            }
            if let Ok((u, _)) = linalg::normalize(&v) {
                protos.push(u);
                break;
            }
        }
    }

    // Pull the second class of each pair onto the cone around the first.
    let cos = spec.pair_cosine;
    let sin = libm::sqrt(1.0 - cos * cos);
    for &(a, b) in &spec.pair_groups {
        let anchor = protos[a].clone();
        let mut dir = protos[b].clone();
        let proj = linalg::dot(&dir, &anchor);
        dir.iter_mut()
            .zip(&anchor)
            .for_each(|(x, y)| *x -= proj * y);
        let (dir, _) = linalg::normalize(&dir)?;
        let blended: Vec<f64> = anchor
            .iter()
            .zip(&dir)
            .map(|(x, y)| cos * x + sin * y)
            .collect();
        protos[b] = linalg::normalize(&blended)?.0;
    }

    let centres: Vec<Vec<f64>> = if spec.image_offset == 0.0 {
        protos.clone()
    } else {
        protos
            .iter()
            .map(|p| {
                let shifted: Vec<f64> = p
                    .iter()
                    .map(|&x| x + spec.image_offset * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                linalg::normalize(&shifted).map(|(u, _)| u)
            })
            .collect::<Result<_>>()?
    };

    let mut draw = |per_class: usize, split: SplitTag| -> Result<EmbeddingSet> {
        let mut labels = Vec::with_capacity(c * per_class);
        let mut features = Vec::with_capacity(c * per_class * d);
        for (k, proto) in centres.iter().enumerate() {
            for _ in 0..per_class {
                labels.push(k);
                if spec.intra_noise == 0.0 {
                    features.extend_from_slice(proto);
                    continue;
                }
                let noisy: Vec<f64> = proto
                    .iter()
                    .map(|&p| p + spec.intra_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                features.extend(linalg::normalize(&noisy)?.0);
            }
        }
        EmbeddingSet::new(d, labels, features, split)
    };
    let train = draw(spec.train_per_class, SplitTag::Train)?;
    let val = draw(spec.val_per_class, SplitTag::Val)?;

    let names = (0..c).map(|k| format!("class_{k:03}")).collect();
    let catalog = ClassCatalog::new(names, vec![spec.train_per_class as u64; c], protos)?;
    Ok(SyntheticData {
        train,
        val,
        catalog,
    })
}
