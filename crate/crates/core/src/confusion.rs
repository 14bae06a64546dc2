//! Extended `(C+1)`-class confusion matrix with the open super-class as the
//! final row/column. The matrix stores raw counts only, so every downstream
//! metric shares one counting pass.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::{decide, Label, ScoreTable};

/// Rates derived from one class's TP/FP/FN/TN view. Any 0/0 ratio is defined
/// as 0 so macro averages stay finite on degenerate splits; such classes are
/// reported by [`ExtendedConfusionMatrix::degenerate_classes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassRates {
    pub tpr: f64,
    pub tnr: f64,
    pub precision: f64,
}

/// Confusion counts at a fixed threshold: rows are true classes, columns are
/// predicted classes, index `C` is the open class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedConfusionMatrix {
    num_known_classes: usize,
    counts: Vec<Vec<u64>>,
    threshold: f64,
    total: u64,
}

impl ExtendedConfusionMatrix {
    /// Counts decisions of a normalized table at the given threshold.
    pub fn from_table(table: &ScoreTable, threshold: f64) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyInput("cannot build confusion matrix".into()));
        }
        let pairs = table.samples().iter().map(|sample| {
            (sample.true_label, decide(sample, threshold).predicted)
        });
        Ok(Self::from_label_pairs(
            table.num_known_classes(),
            threshold,
            pairs,
        ))
    }

    /// Counts explicit (true, predicted) label pairs, e.g. from a decision
    /// file that carries no scores.
    pub fn from_label_pairs(
        num_known_classes: usize,
        threshold: f64,
        pairs: impl IntoIterator<Item = (Label, Label)>,
    ) -> Self {
        let side = num_known_classes + 1;
        let mut counts = vec![vec![0u64; side]; side];
        let mut total = 0u64;
        for (true_label, predicted) in pairs {
            counts[true_label.index(num_known_classes)][predicted.index(num_known_classes)] += 1;
            total += 1;
        }
        ExtendedConfusionMatrix {
            num_known_classes,
            counts,
            threshold,
            total,
        }
    }

    pub fn num_known_classes(&self) -> usize {
        self.num_known_classes
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Index of the open class row/column.
    pub fn open_index(&self) -> usize {
        self.num_known_classes
    }

    fn check_index(&self, class: usize) -> Result<()> {
        if class > self.num_known_classes {
            Err(Error::ClassIndexOutOfRange {
                index: class,
                num_classes: self.num_known_classes,
            })
        } else {
            Ok(())
        }
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.true_positives(class)
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum::<u64>() - self.true_positives(class)
    }

    pub fn true_negatives(&self, class: usize) -> u64 {
        self.total
            - self.true_positives(class)
            - self.false_positives(class)
            - self.false_negatives(class)
    }

    /// TPR, TNR, and precision for one class (`C` addresses the open class).
    pub fn per_class_rates(&self, class: usize) -> Result<ClassRates> {
        self.check_index(class)?;
        let tp = self.true_positives(class) as f64;
        let fn_ = self.false_negatives(class) as f64;
        let fp = self.false_positives(class) as f64;
        let tn = self.true_negatives(class) as f64;
        Ok(ClassRates {
            tpr: safe_ratio(tp, tp + fn_),
            tnr: safe_ratio(tn, tn + fp),
            precision: safe_ratio(tp, tp + fp),
        })
    }

    /// Known classes whose TPR or precision hit the 0/0 convention, with the
    /// reason; surfaced as warnings in metric reports.
    pub fn degenerate_classes(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for class in 0..=self.num_known_classes {
            if self.true_positives(class) + self.false_negatives(class) == 0 {
                out.push((class, "no true samples; TPR 0/0 treated as 0".to_string()));
            }
            if self.true_positives(class) + self.false_positives(class) == 0 {
                out.push((class, "no predictions; precision 0/0 treated as 0".to_string()));
            }
        }
        out
    }
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ScoreConvention, ScoredSample};
    use proptest::prelude::*;

    /// Six-row table: a1,a2 true 0 predicted 0; b1 true 1 predicted 1;
    /// b2 true 1 rejected; u1,u2 open rejected. Threshold 0.5.
    pub(crate) fn worked_table() -> ScoreTable {
        let rows = vec![
            ("a1", Label::Known(0), vec![0.1, 0.9]),
            ("a2", Label::Known(0), vec![0.2, 0.8]),
            ("b1", Label::Known(1), vec![0.9, 0.3]),
            ("b2", Label::Known(1), vec![0.6, 0.7]),
            ("u1", Label::Open, vec![0.8, 0.7]),
            ("u2", Label::Open, vec![0.95, 0.85]),
        ];
        let samples = rows
            .into_iter()
            .map(|(id, label, scores)| ScoredSample::with_derived_open_score(id, label, scores))
            .collect();
        ScoreTable::new(ScoreConvention::OpenHigh, 2, samples).unwrap()
    }

    #[test]
    fn worked_table_counts() {
        let m = ExtendedConfusionMatrix::from_table(&worked_table(), 0.5).unwrap();
        assert_eq!(m.counts(), &[vec![2, 0, 0], vec![0, 1, 1], vec![0, 0, 2]]);
        assert_eq!(m.true_positives(0), 2);
        assert_eq!(m.false_positives(0), 0);
        assert_eq!(m.false_negatives(0), 0);
        assert_eq!(m.true_negatives(0), 4);
        assert_eq!(m.true_positives(1), 1);
        assert_eq!(m.false_negatives(1), 1);
        assert_eq!(m.true_negatives(1), 4);
        assert_eq!(m.true_positives(2), 2);
        assert_eq!(m.false_positives(2), 1);
        assert_eq!(m.false_negatives(2), 0);
    }

    #[test]
    fn single_open_sample_above_threshold() {
        let table = ScoreTable::new(
            ScoreConvention::OpenHigh,
            1,
            vec![ScoredSample::new("u", Label::Open, vec![0.2], 0.9)],
        )
        .unwrap();
        let m = ExtendedConfusionMatrix::from_table(&table, 0.5).unwrap();
        assert_eq!(m.counts(), &[vec![0, 0], vec![0, 1]]);
        assert_eq!(m.true_positives(m.open_index()), 1);
    }

    #[test]
    fn infinite_threshold_rejects_nothing() {
        let m = ExtendedConfusionMatrix::from_table(&worked_table(), f64::INFINITY).unwrap();
        let open = m.open_index();
        let rejected: u64 = m.counts().iter().map(|row| row[open]).sum();
        assert_eq!(rejected, 0);
    }

    #[test]
    fn empty_table_is_an_error() {
        let table = ScoreTable::new(ScoreConvention::OpenHigh, 1, vec![]).unwrap();
        assert!(matches!(
            ExtendedConfusionMatrix::from_table(&table, 0.5),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn worked_table_class_rates() {
        let m = ExtendedConfusionMatrix::from_table(&worked_table(), 0.5).unwrap();
        let class1 = m.per_class_rates(1).unwrap();
        assert_eq!(class1.tpr, 0.5);
        assert_eq!(class1.precision, 1.0);
        assert_eq!(class1.tnr, 1.0);
        let open = m.per_class_rates(2).unwrap();
        assert_eq!(open.tpr, 1.0);
        assert_eq!(open.precision, 2.0 / 3.0);
    }

    #[test]
    fn zero_over_zero_rates_are_zero() {
        // Class 1 never occurs and is never predicted.
        let m = ExtendedConfusionMatrix::from_label_pairs(
            2,
            0.5,
            vec![(Label::Known(0), Label::Known(0)), (Label::Open, Label::Open)],
        );
        let rates = m.per_class_rates(1).unwrap();
        assert_eq!(rates.tpr, 0.0);
        assert_eq!(rates.precision, 0.0);
        assert!(!m.degenerate_classes().is_empty());
    }

    #[test]
    fn index_out_of_range_is_an_error() {
        let m = ExtendedConfusionMatrix::from_table(&worked_table(), 0.5).unwrap();
        assert!(matches!(
            m.per_class_rates(3),
            Err(Error::ClassIndexOutOfRange { .. })
        ));
    }

    fn arb_table() -> impl Strategy<Value = ScoreTable> {
        proptest::collection::vec((0usize..4, proptest::collection::vec(-16i32..16, 3)), 1..24)
            .prop_map(|rows| {
                let samples = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (label, scores))| {
                        let label = if label == 3 { Label::Open } else { Label::Known(label) };
                        let scores: Vec<f64> = scores.iter().map(|&v| v as f64 / 4.0).collect();
                        ScoredSample::with_derived_open_score(format!("s{i}"), label, scores)
                    })
                    .collect();
                ScoreTable::new(ScoreConvention::OpenHigh, 3, samples).unwrap()
            })
    }

    proptest! {
        #[test]
        fn rows_and_columns_partition_the_total(table in arb_table(), tq in -16i32..16) {
            let m = ExtendedConfusionMatrix::from_table(&table, tq as f64 / 4.0).unwrap();
            let by_rows: u64 = (0..=m.open_index())
                .map(|i| m.true_positives(i) + m.false_negatives(i))
                .sum();
            let by_cols: u64 = (0..=m.open_index())
                .map(|i| m.true_positives(i) + m.false_positives(i))
                .sum();
            prop_assert_eq!(by_rows, m.total());
            prop_assert_eq!(by_cols, m.total());
        }

        #[test]
        fn open_column_is_non_increasing_in_threshold(
            table in arb_table(),
            lo in -16i32..16,
            delta in 0i32..8,
        ) {
            let low = lo as f64 / 4.0;
            let high = (lo + delta) as f64 / 4.0;
            let m_low = ExtendedConfusionMatrix::from_table(&table, low).unwrap();
            let m_high = ExtendedConfusionMatrix::from_table(&table, high).unwrap();
            let rejected = |m: &ExtendedConfusionMatrix| -> u64 {
                m.counts().iter().map(|row| row[m.open_index()]).sum()
            };
            prop_assert!(rejected(&m_high) <= rejected(&m_low));
        }

        #[test]
        fn counting_is_permutation_invariant(table in arb_table(), seed in 0u64..64) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = table.samples().to_vec();
            shuffled.shuffle(&mut rng);
            let permuted =
                ScoreTable::new(table.convention(), table.num_known_classes(), shuffled).unwrap();
            let a = ExtendedConfusionMatrix::from_table(&table, 0.25).unwrap();
            let b = ExtendedConfusionMatrix::from_table(&permuted, 0.25).unwrap();
            prop_assert_eq!(a.counts(), b.counts());
        }
    }
}
