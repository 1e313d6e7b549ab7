//! Shot-split accuracy and confusion matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::datamodel::{ClassCatalog, EmbeddingSet};
use crate::model::TrainedHead;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShotCategory {
    Many,
    Medium,
    Few,
}

impl ShotCategory {
    pub const ALL: [ShotCategory; 3] =
        [ShotCategory::Many, ShotCategory::Medium, ShotCategory::Few];

    fn index(self) -> usize {
        self as usize
    }
}

/// `many` if `n > many_above`, `few` if `n < few_below`, otherwise `medium`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ShotThresholds {
    pub many_above: u64,
    pub few_below: u64,
}

impl Default for ShotThresholds {
    fn default() -> Self {
        Self {
            many_above: 100,
            few_below: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSplit {
    pub categories: Vec<ShotCategory>,
    pub thresholds: ShotThresholds,
}

pub fn shot_split(counts: &[u64], thresholds: ShotThresholds) -> ShotSplit {
    let categories = counts
        .iter()
        .map(|&n| {
            if n > thresholds.many_above {
                ShotCategory::Many
            } else if n < thresholds.few_below {
                ShotCategory::Few
            } else {
                ShotCategory::Medium
            }
        })
        .collect();
    ShotSplit {
        categories,
        thresholds,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    /// Percent correct, or `None` for an empty group.
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indexed by [`ShotCategory`]: many, medium, few.
    pub groups: [Tally; 3],
    pub overall: Tally,
    pub per_class: Vec<Tally>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn group(&self, cat: ShotCategory) -> Option<f64> {
        self.groups[cat.index()].percent()
    }

    pub fn many(&self) -> Option<f64> {
        self.group(ShotCategory::Many)
    }

    pub fn medium(&self) -> Option<f64> {
        self.group(ShotCategory::Medium)
    }

    pub fn few(&self) -> Option<f64> {
        self.group(ShotCategory::Few)
    }

    /// Total correct over total rows, not the mean of the group accuracies.
    pub fn all(&self) -> Option<f64> {
        self.overall.percent()
    }

    /// Overall tally rebuilt from the three groups; always equals `overall`.
    pub fn recombined(&self) -> Tally {
        self.groups.iter().fold(Tally::default(), |acc, g| Tally {
            correct: acc.correct + g.correct,
            total: acc.total + g.total,
        })
    }
}

/// Builds a report from parallel label / prediction sequences.
pub fn report_from_predictions(
    labels: impl IntoIterator<Item = usize>,
    predictions: impl IntoIterator<Item = usize>,
    split: &ShotSplit,
) -> EvalReport {
    let c = split.categories.len();
    let mut confusion = vec![vec![0u64; c]; c];
    let mut per_class = vec![Tally::default(); c];
    let mut groups = [Tally::default(); 3];
    for (truth, pred) in labels.into_iter().zip(predictions) {
        confusion[truth][pred] += 1;
        let hit = u64::from(truth == pred);
        for t in [
            &mut per_class[truth],
            &mut groups[split.categories[truth].index()],
        ] {
            t.total += 1;
            t.correct += hit;
        }
    }
    let overall = Tally {
        correct: per_class.iter().map(|t| t.correct).sum(),
        total: per_class.iter().map(|t| t.total).sum(),
    };
    EvalReport {
        groups,
        overall,
        per_class,
        confusion,
    }
}

pub fn evaluate(
    head: &TrainedHead,
    val: &EmbeddingSet,
    catalog: &ClassCatalog,
    split: &ShotSplit,
) -> Result<EvalReport> {
    val.check_catalog(catalog)?;
    let text = catalog.text_matrix();
    let predictions = val
        .rows()
        .map(|(_, f)| head.predict(f, &text))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_predictions(
        val.labels().iter().copied(),
        predictions,
        split,
    ))
}

/// Rounds a percentage to one decimal place.
pub fn round1(x: f64) -> f64 {
    libm::round(x * 10.0) / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ShotCategory::*;

    #[test]
    fn thresholds() {
        let s = shot_split(&[5000, 50, 5], ShotThresholds::default());
        assert_eq!(s.categories, vec![Many, Medium, Few]);
        let s = shot_split(&[100, 20, 101, 19], ShotThresholds::default());
        assert_eq!(s.categories, vec![Medium, Medium, Many, Few]);
    }

    #[test]
    fn empty_group_is_none() {
        let split = shot_split(&[101; 4], ShotThresholds::default());
        let r = report_from_predictions([0, 1, 2, 3], [0, 1, 2, 0], &split);
        assert_eq!(r.few(), None);
        assert_eq!(r.medium(), None);
        assert_eq!(r.many(), Some(75.0));
    }

    #[test]
    fn perfect_predictor() {
        let split = shot_split(&[500, 50, 5], ShotThresholds::default());
        let labels = [0, 0, 1, 1, 2, 2];
        let r = report_from_predictions(labels, labels, &split);
        for g in [r.many(), r.medium(), r.few(), r.all()] {
            assert_eq!(g, Some(100.0));
        }
        assert_eq!(
            r.confusion,
            vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]
        );
    }

    #[test]
    fn constant_predictor_on_balanced_val() {
        let split = shot_split(&[500, 300, 50, 5], ShotThresholds::default());
        let labels: Vec<usize> = (0..4).flat_map(|k| [k; 5]).collect();
        let r = report_from_predictions(labels.iter().copied(), [0; 20], &split);
        assert_eq!(r.all(), Some(25.0));
        assert_eq!(r.many(), Some(50.0));
        for (k, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), 5, "row {k}");
        }
        assert_eq!(r.recombined(), r.overall);
    }

    #[test]
    fn overall_is_pooled_not_averaged() {
        let split = shot_split(&[500, 5], ShotThresholds::default());
        // many: 1/1, few: 1/3 -> pooled 50%, unweighted mean 66.7%
        let r = report_from_predictions([0, 1, 1, 1], [0, 1, 0, 0], &split);
        assert_eq!(r.all(), Some(50.0));
        assert_eq!(round1(r.few().unwrap()), 33.3);
    }
}
