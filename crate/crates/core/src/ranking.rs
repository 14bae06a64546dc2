//! Threshold-free ranking metrics and curves: close-set accuracy, the
//! open-vs-close ranking AUC, aggregation baselines, the OSCR and
//! OFPR-COTPR curves, OpenAUC via three routes, Error@TPR, and the recall
//! lower bound derived from OpenAUC.
//!
//! Pair counting is done on sorted score arrays in `O((N_k + N_u) log N)`;
//! every route reduces to integer pair counts followed by a single division,
//! so routes that are algebraically equal are also bit-identical in `f64`.

use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::table::{ScoreTable, ScoredSample};

/// How pairs with exactly equal open scores are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum TieMode {
    /// Ties score zero, matching the strict ranking indicator.
    #[default]
    Strict,
    /// Mann-Whitney style: ties count one half.
    Half,
}

/// Computation route for OpenAUC. All routes agree exactly on valid tables;
/// the redundancy is a built-in consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OpenAucRoute {
    /// Direct gated pair count.
    Pairwise,
    /// Step-function area under the OFPR-COTPR curve, accumulated in
    /// integers. Strict ties only.
    Sweep,
    /// Reassign every misclassified close sample an open score above all
    /// open samples, then compute the plain ranking AUC.
    Masked,
}

/// Integer pair counts behind the ranking metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairStats {
    pub n_close: u64,
    pub n_open: u64,
    pub correct_close: u64,
    pub concordant_pairs: u64,
    pub tied_pairs: u64,
}

impl PairStats {
    pub fn total_pairs(&self) -> u64 {
        self.n_close * self.n_open
    }

    /// Pair count divided once by `n_close * n_open`.
    pub fn value(&self, ties: TieMode) -> f64 {
        match ties {
            TieMode::Strict => self.concordant_pairs as f64 / self.total_pairs() as f64,
            TieMode::Half => {
                (2 * self.concordant_pairs + self.tied_pairs) as f64
                    / (2 * self.total_pairs()) as f64
            }
        }
    }
}

fn split_populations(table: &ScoreTable) -> (Vec<&ScoredSample>, Vec<&ScoredSample>) {
    table
        .samples()
        .iter()
        .partition(|s| !s.true_label.is_open())
}

fn require_both(table: &ScoreTable) -> Result<(Vec<&ScoredSample>, Vec<&ScoredSample>)> {
    let (close, open) = split_populations(table);
    if close.is_empty() {
        return Err(Error::NoCloseSamples);
    }
    if open.is_empty() {
        return Err(Error::NoOpenSamples);
    }
    Ok((close, open))
}

fn is_correct(sample: &ScoredSample) -> bool {
    match sample.true_label {
        crate::table::Label::Known(c) => sample.argmin_class() == c,
        crate::table::Label::Open => false,
    }
}

fn sorted_scores(samples: &[&ScoredSample]) -> Vec<f64> {
    let mut v: Vec<f64> = samples.iter().map(|s| s.open_score).collect();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Number of entries strictly greater than / exactly equal to `x`.
fn greater_and_equal(sorted: &[f64], x: f64) -> (u64, u64) {
    let le = sorted.partition_point(|&v| v <= x);
    let lt = sorted.partition_point(|&v| v < x);
    ((sorted.len() - le) as u64, (le - lt) as u64)
}

fn pair_stats(close: &[&ScoredSample], open: &[&ScoredSample], gated: bool) -> PairStats {
    let open_sorted = sorted_scores(open);
    let mut concordant = 0u64;
    let mut tied = 0u64;
    let mut correct = 0u64;
    for sample in close {
        let ok = is_correct(sample);
        if ok {
            correct += 1;
        }
        if gated && !ok {
            continue;
        }
        let (gt, eq) = greater_and_equal(&open_sorted, sample.open_score);
        concordant += gt;
        tied += eq;
    }
    PairStats {
        n_close: close.len() as u64,
        n_open: open.len() as u64,
        correct_close: correct,
        concordant_pairs: concordant,
        tied_pairs: tied,
    }
}

/// Pair counts for the plain ranking AUC (every close sample participates).
pub fn auc_pair_stats(table: &ScoreTable) -> Result<PairStats> {
    let (close, open) = require_both(table)?;
    Ok(pair_stats(&close, &open, false))
}

/// Pair counts for OpenAUC (only correctly classified close samples count).
pub fn openauc_pair_stats(table: &ScoreTable) -> Result<PairStats> {
    let (close, open) = require_both(table)?;
    Ok(pair_stats(&close, &open, true))
}

/// Fraction of close-set samples whose argmin class matches the true label.
/// Threshold-free; open samples are excluded.
pub fn close_set_accuracy(table: &ScoreTable) -> Result<f64> {
    let (close, _) = split_populations(table);
    if close.is_empty() {
        return Err(Error::NoCloseSamples);
    }
    let correct = close.iter().filter(|s| is_correct(s)).count();
    Ok(correct as f64 / close.len() as f64)
}

/// Probability that a random open sample outranks a random close sample.
pub fn auc(table: &ScoreTable, ties: TieMode) -> Result<f64> {
    Ok(auc_pair_stats(table)?.value(ties))
}

/// The three decoupled ways of combining close-set accuracy with the AUC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateBaselines {
    pub product: f64,
    pub sum: f64,
    pub pointwise_sum: f64,
}

pub fn aggregate_baselines(table: &ScoreTable, ties: TieMode) -> Result<AggregateBaselines> {
    let stats = auc_pair_stats(table)?;
    let acc = stats.correct_close as f64 / stats.n_close as f64;
    let auc = stats.value(ties);
    let pointwise = match ties {
        TieMode::Strict => {
            (stats.correct_close * stats.n_open + stats.concordant_pairs) as f64
                / stats.total_pairs() as f64
        }
        TieMode::Half => {
            (2 * (stats.correct_close * stats.n_open + stats.concordant_pairs)
                + stats.tied_pairs) as f64
                / (2 * stats.total_pairs()) as f64
        }
    };
    Ok(AggregateBaselines {
        product: acc * auc,
        sum: acc + auc,
        pointwise_sum: pointwise,
    })
}

/// Area under the OFPR-COTPR curve / gated pairwise ranking probability.
pub fn openauc(table: &ScoreTable, route: OpenAucRoute, ties: TieMode) -> Result<f64> {
    match route {
        OpenAucRoute::Pairwise => Ok(openauc_pair_stats(table)?.value(ties)),
        OpenAucRoute::Sweep => {
            if ties == TieMode::Half {
                return Err(Error::InvalidParameter(
                    "half-tie mode is not defined for the sweep route".into(),
                ));
            }
            let (close, open) = require_both(table)?;
            Ok(openauc_sweep_count(&close, &open) as f64
                / (close.len() as u64 * open.len() as u64) as f64)
        }
        OpenAucRoute::Masked => {
            let (close, open) = require_both(table)?;
            let max_open = open
                .iter()
                .map(|s| s.open_score)
                .fold(f64::NEG_INFINITY, f64::max);
            let mask = max_open + 1.0;
            let open_sorted = sorted_scores(&open);
            let mut concordant = 0u64;
            let mut tied = 0u64;
            for sample in &close {
                let score = if is_correct(sample) { sample.open_score } else { mask };
                let (gt, eq) = greater_and_equal(&open_sorted, score);
                concordant += gt;
                tied += eq;
            }
            let stats = PairStats {
                n_close: close.len() as u64,
                n_open: open.len() as u64,
                correct_close: 0,
                concordant_pairs: concordant,
                tied_pairs: tied,
            };
            Ok(stats.value(ties))
        }
    }
}

/// Left-step integral of the OFPR-COTPR step function, in integer pairs:
/// each distinct open score contributes its multiplicity times the number of
/// correctly classified close samples strictly below it.
fn openauc_sweep_count(close: &[&ScoredSample], open: &[&ScoredSample]) -> u64 {
    let open_sorted = sorted_scores(open);
    let mut gated: Vec<f64> = close
        .iter()
        .filter(|s| is_correct(s))
        .map(|s| s.open_score)
        .collect();
    gated.sort_unstable_by(f64::total_cmp);

    let mut count = 0u64;
    let mut below = 0usize;
    let mut i = 0usize;
    while i < open_sorted.len() {
        let v = open_sorted[i];
        let mut mult = 0u64;
        while i < open_sorted.len() && open_sorted[i] == v {
            mult += 1;
            i += 1;
        }
        while below < gated.len() && gated[below] < v {
            below += 1;
        }
        count += mult * below as u64;
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Roc,
    Oscr,
    OfprCotpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub threshold: f64,
}

/// An operating-characteristic curve: `x` is non-decreasing and the list
/// includes the points produced by the -inf and +inf sentinel thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Midpoints between consecutive distinct values, ascending.
fn midpoints(values: &mut Vec<f64>) -> Vec<f64> {
    values.sort_unstable_by(f64::total_cmp);
    values.dedup();
    values
        .windows(2)
        .map(|w| w[0] + (w[1] - w[0]) / 2.0)
        .collect()
}

/// Rejection ROC of the open-set score: x is the close-set rejection rate,
/// y the open-set rejection rate, swept from +inf down to -inf.
pub fn roc_curve(table: &ScoreTable) -> Result<Curve> {
    let (close, open) = require_both(table)?;
    let close_sorted = sorted_scores(&close);
    let open_sorted = sorted_scores(&open);
    let mut all: Vec<f64> = close_sorted.iter().chain(open_sorted.iter()).copied().collect();
    let mut thresholds = vec![f64::INFINITY];
    let mut mids = midpoints(&mut all);
    mids.reverse();
    thresholds.extend(mids);
    thresholds.push(f64::NEG_INFINITY);

    let points = thresholds
        .into_iter()
        .map(|t| {
            let fp = greater_and_equal(&close_sorted, t).0;
            let tp = greater_and_equal(&open_sorted, t).0;
            CurvePoint {
                x: fp as f64 / close.len() as f64,
                y: tp as f64 / open.len() as f64,
                threshold: t,
            }
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::Roc,
        points,
    })
}

/// Correct-classification rate against open-sample false positive rate,
/// thresholded in the confidence domain (negated canonical scores).
pub fn oscr_curve(table: &ScoreTable) -> Result<Curve> {
    let (close, open) = require_both(table)?;
    // Confidence of being known for open samples; confidence assigned to the
    // true class for close samples.
    let mut open_conf: Vec<f64> = open.iter().map(|s| -s.open_score).collect();
    open_conf.sort_unstable_by(f64::total_cmp);
    let close_info: Vec<(bool, f64)> = close
        .iter()
        .map(|s| {
            let true_class = match s.true_label {
                crate::table::Label::Known(c) => c,
                crate::table::Label::Open => unreachable!("close partition"),
            };
            (is_correct(s), -s.class_scores[true_class])
        })
        .collect();
    let mut correct_conf: Vec<f64> = close_info
        .iter()
        .filter(|(ok, _)| *ok)
        .map(|(_, c)| *c)
        .collect();
    correct_conf.sort_unstable_by(f64::total_cmp);

    let mut all: Vec<f64> = open_conf
        .iter()
        .copied()
        .chain(close_info.iter().map(|(_, c)| *c))
        .collect();
    let mut thresholds = vec![f64::INFINITY];
    let mut mids = midpoints(&mut all);
    mids.reverse();
    thresholds.extend(mids);
    thresholds.push(f64::NEG_INFINITY);

    let points = thresholds
        .into_iter()
        .map(|t| {
            let fp = greater_and_equal(&open_conf, t).0;
            let ccr = greater_and_equal(&correct_conf, t).0;
            CurvePoint {
                x: fp as f64 / open.len() as f64,
                y: ccr as f64 / close.len() as f64,
                threshold: t,
            }
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::Oscr,
        points,
    })
}

/// Generalized open-set FPR against conditional open-set TPR, thresholding
/// the open score directly with the `<=` acceptance rule.
pub fn ofpr_cotpr_curve(table: &ScoreTable) -> Result<Curve> {
    let (close, open) = require_both(table)?;
    let open_sorted = sorted_scores(&open);
    let mut gated: Vec<f64> = close
        .iter()
        .filter(|s| is_correct(s))
        .map(|s| s.open_score)
        .collect();
    gated.sort_unstable_by(f64::total_cmp);

    let mut all: Vec<f64> = close
        .iter()
        .chain(open.iter())
        .map(|s| s.open_score)
        .collect();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(midpoints(&mut all));
    thresholds.push(f64::INFINITY);

    let points = thresholds
        .into_iter()
        .map(|t| {
            let accepted_open = open_sorted.partition_point(|&v| v <= t) as u64;
            let accepted_correct = gated.partition_point(|&v| v <= t) as u64;
            CurvePoint {
                x: accepted_open as f64 / open.len() as f64,
                y: accepted_correct as f64 / close.len() as f64,
                threshold: t,
            }
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::OfprCotpr,
        points,
    })
}

/// Close-set rejection error at the most permissive threshold whose open-set
/// recall reaches `target_tpr`. The target is interpreted exactly.
pub fn error_at_tpr(table: &ScoreTable, target_tpr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_tpr) {
        return Err(Error::InvalidParameter(
            "target TPR must lie in [0, 1]".into(),
        ));
    }
    error_at_tpr_exact(table, &exact::from_f64(target_tpr)?)
}

/// As [`error_at_tpr`], with the target as an exact rational so that decimal
/// targets like 0.95 compare exactly against count ratios.
pub fn error_at_tpr_exact(table: &ScoreTable, target_tpr: &BigRational) -> Result<f64> {
    let (close, open) = require_both(table)?;
    let close_sorted = sorted_scores(&close);
    let open_sorted = sorted_scores(&open);
    let n_open = open.len() as u64;

    let mut all: Vec<f64> = close_sorted.iter().chain(open_sorted.iter()).copied().collect();
    let mut thresholds = vec![f64::INFINITY];
    let mut mids = midpoints(&mut all);
    mids.reverse();
    thresholds.extend(mids);
    thresholds.push(f64::NEG_INFINITY);

    for t in thresholds {
        let rejected_open = greater_and_equal(&open_sorted, t).0;
        if exact::ratio(rejected_open, n_open) >= *target_tpr {
            let rejected_close = greater_and_equal(&close_sorted, t).0;
            return Ok(rejected_close as f64 / close.len() as f64);
        }
    }
    // Unreachable with finite scores: the -inf sentinel rejects everything.
    Ok(1.0)
}

/// Lower bound on open-set recall implied by an OpenAUC value at a threshold
/// with close-set rejection rate `fpr_open`: `1 - (1 - openauc) / fpr_open`.
/// May be negative (a vacuous bound); callers clamp for display only.
pub fn tpr_lower_bound(openauc_value: f64, fpr_open: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&openauc_value) {
        return Err(Error::InvalidParameter(
            "openauc value must lie in [0, 1]".into(),
        ));
    }
    if fpr_open == 0.0 {
        return Err(Error::UndefinedBound);
    }
    if !(0.0..=1.0).contains(&fpr_open) {
        return Err(Error::InvalidParameter(
            "fpr_open must lie in (0, 1]".into(),
        ));
    }
    Ok(1.0 - (1.0 - openauc_value) / fpr_open)
}

/// Distinct open-score thresholds in descending order with the two infinite
/// sentinels, the grid used by per-threshold metric sweeps.
pub fn decision_sweep_thresholds(table: &ScoreTable) -> Vec<f64> {
    let mut values: Vec<f64> = table.samples().iter().map(|s| s.open_score).collect();
    values.sort_unstable_by(f64::total_cmp);
    values.dedup();
    values.reverse();
    let mut thresholds = Vec::with_capacity(values.len() + 2);
    thresholds.push(f64::INFINITY);
    thresholds.extend(values);
    thresholds.push(f64::NEG_INFINITY);
    thresholds
}

/// Open- and close-set rejection counts at one threshold:
/// `(rejected_open, rejected_close)`.
pub fn rejection_counts_at(table: &ScoreTable, threshold: f64) -> (u64, u64) {
    let mut rejected_open = 0u64;
    let mut rejected_close = 0u64;
    for s in table.samples() {
        if s.open_score > threshold {
            if s.true_label.is_open() {
                rejected_open += 1;
            } else {
                rejected_close += 1;
            }
        }
    }
    (rejected_open, rejected_close)
}

/// The most permissive sweep threshold at which the OpenAUC recall bound is
/// non-vacuous, i.e. the close-set rejection rate exceeds `1 - OpenAUC`.
/// Returns `(threshold, fpr_open, tpr_open)`. Comparison is exact in pair
/// counts.
pub fn bound_operating_point(table: &ScoreTable) -> Result<Option<(f64, f64, f64)>> {
    let stats = openauc_pair_stats(table)?;
    let total = stats.total_pairs() as u128;
    let missed = total - stats.concordant_pairs as u128;
    for t in decision_sweep_thresholds(table) {
        let (rej_open, rej_close) = rejection_counts_at(table, t);
        // fpr > 1 - openauc  <=>  rej_close * n_open > total - concordant
        if (rej_close as u128) * (stats.n_open as u128) > missed {
            return Ok(Some((
                t,
                rej_close as f64 / stats.n_close as f64,
                rej_open as f64 / stats.n_open as f64,
            )));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Label, ScoreConvention, ScoredSample, ScoreTable};
    use num_traits::Zero;
    use proptest::prelude::*;

    fn table_from(rows: Vec<(Label, Vec<f64>, f64)>) -> ScoreTable {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, scores, r))| {
                ScoredSample::new(format!("s{i}"), label, scores, r)
            })
            .collect();
        ScoreTable::new(ScoreConvention::OpenHigh, 2, samples).unwrap()
    }

    /// close: r=0.1 correct, r=0.2 wrong; open: r=0.3.
    fn three_sample_table() -> ScoreTable {
        table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.9, 0.2], 0.2),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ])
    }

    #[test]
    fn close_set_accuracy_cases() {
        assert_eq!(close_set_accuracy(&three_sample_table()).unwrap(), 0.5);
        let all_correct = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(1), vec![0.9, 0.2], 0.2),
        ]);
        assert_eq!(close_set_accuracy(&all_correct).unwrap(), 1.0);
        let all_wrong = table_from(vec![(Label::Known(1), vec![0.1, 0.9], 0.1)]);
        assert_eq!(close_set_accuracy(&all_wrong).unwrap(), 0.0);
        let no_close = table_from(vec![(Label::Open, vec![0.1, 0.9], 0.1)]);
        assert!(matches!(
            close_set_accuracy(&no_close),
            Err(Error::NoCloseSamples)
        ));
    }

    #[test]
    fn auc_pair_enumeration() {
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.1, 0.9], 0.4),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ]);
        assert_eq!(auc(&t, TieMode::Strict).unwrap(), 0.5);
    }

    #[test]
    fn auc_perfect_ranking() {
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.9),
        ]);
        assert_eq!(auc(&t, TieMode::Strict).unwrap(), 1.0);
    }

    #[test]
    fn auc_tie_conventions() {
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.5),
            (Label::Open, vec![0.5, 0.6], 0.5),
        ]);
        assert_eq!(auc(&t, TieMode::Strict).unwrap(), 0.0);
        assert_eq!(auc(&t, TieMode::Half).unwrap(), 0.5);
    }

    #[test]
    fn aggregate_baseline_cases() {
        let perfect = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.9),
        ]);
        let a = aggregate_baselines(&perfect, TieMode::Strict).unwrap();
        assert_eq!((a.product, a.sum, a.pointwise_sum), (1.0, 2.0, 2.0));

        let mixed = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.9, 0.2], 0.4),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ]);
        let b = aggregate_baselines(&mixed, TieMode::Strict).unwrap();
        assert_eq!(b.product, 0.25);
        assert_eq!(b.sum, 1.0);
        assert_eq!(b.pointwise_sum, 1.0);

        let all_wrong = table_from(vec![
            (Label::Known(1), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.9),
        ]);
        let c = aggregate_baselines(&all_wrong, TieMode::Strict).unwrap();
        assert_eq!(c.product, 0.0);
    }

    #[test]
    fn openauc_three_examples() {
        for route in [OpenAucRoute::Pairwise, OpenAucRoute::Sweep, OpenAucRoute::Masked] {
            assert_eq!(
                openauc(&three_sample_table(), route, TieMode::Strict).unwrap(),
                0.5,
                "route {route:?}"
            );
        }

        // All close correct: OpenAUC equals the plain AUC.
        let all_correct = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(1), vec![0.9, 0.2], 0.4),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ]);
        let auc_v = auc(&all_correct, TieMode::Strict).unwrap();
        assert_eq!(
            openauc(&all_correct, OpenAucRoute::Pairwise, TieMode::Strict).unwrap(),
            auc_v
        );

        // All close misclassified: OpenAUC is zero.
        let all_wrong = table_from(vec![
            (Label::Known(1), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.9),
        ]);
        assert_eq!(
            openauc(&all_wrong, OpenAucRoute::Pairwise, TieMode::Strict).unwrap(),
            0.0
        );
    }

    #[test]
    fn oscr_curve_shapes() {
        // Perfectly separated, all correct: passes through (0, 1).
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(1), vec![0.8, 0.2], 0.2),
            (Label::Open, vec![0.5, 0.6], 0.5),
        ]);
        let curve = oscr_curve(&t).unwrap();
        assert!(curve.points.iter().any(|p| p.x == 0.0 && p.y == 1.0));

        // One open, one correct close, open ranked higher.
        let t2 = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.4),
        ]);
        let curve2 = oscr_curve(&t2).unwrap();
        assert!(curve2.points.iter().any(|p| p.x == 0.0 && p.y == 1.0));
        assert!(curve2.points.iter().any(|p| p.x == 1.0 && p.y == 1.0));

        // All close misclassified: y is zero everywhere.
        let t3 = table_from(vec![
            (Label::Known(1), vec![0.1, 0.9], 0.1),
            (Label::Open, vec![0.5, 0.6], 0.4),
        ]);
        assert!(oscr_curve(&t3).unwrap().points.iter().all(|p| p.y == 0.0));
    }

    #[test]
    fn ofpr_cotpr_sentinels_and_interior_point() {
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.9, 0.2], 0.2),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ]);
        let curve = ofpr_cotpr_curve(&t).unwrap();
        let first = curve.points.first().unwrap();
        assert_eq!((first.x, first.y), (0.0, 0.0));
        let last = curve.points.last().unwrap();
        assert_eq!((last.x, last.y), (1.0, 0.5));
        // Midpoint threshold 0.25: no open sample accepted, one correct
        // close sample accepted.
        assert!(curve
            .points
            .iter()
            .any(|p| p.threshold == 0.25 && p.x == 0.0 && p.y == 0.5));
    }

    #[test]
    fn roc_endpoints_always_present() {
        let curve = roc_curve(&three_sample_table()).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!((first.x, first.y), (0.0, 0.0));
        assert_eq!((last.x, last.y), (1.0, 1.0));
    }

    #[test]
    fn error_at_tpr_cases() {
        // Perfectly separated populations.
        let sep = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.1, 0.9], 0.2),
            (Label::Open, vec![0.5, 0.6], 0.8),
        ]);
        assert_eq!(error_at_tpr(&sep, 0.95).unwrap(), 0.0);

        // Full recall forces one close rejection.
        let t = table_from(vec![
            (Label::Known(0), vec![0.1, 0.9], 0.1),
            (Label::Known(0), vec![0.1, 0.9], 0.4),
            (Label::Open, vec![0.5, 0.6], 0.3),
        ]);
        assert_eq!(error_at_tpr(&t, 1.0).unwrap(), 0.5);

        // Zero target is satisfied at +inf with no rejections.
        assert_eq!(error_at_tpr(&t, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tpr_lower_bound_cases() {
        assert_eq!(tpr_lower_bound(0.9, 0.5).unwrap(), 0.8);
        assert_eq!(tpr_lower_bound(1.0, 0.25).unwrap(), 1.0);
        assert_eq!(tpr_lower_bound(0.5, 0.25).unwrap(), -1.0);
        assert!(matches!(tpr_lower_bound(0.9, 0.0), Err(Error::UndefinedBound)));
    }

    #[test]
    fn missing_population_errors() {
        let no_open = table_from(vec![(Label::Known(0), vec![0.1, 0.9], 0.1)]);
        assert!(matches!(auc(&no_open, TieMode::Strict), Err(Error::NoOpenSamples)));
        let no_close = table_from(vec![(Label::Open, vec![0.1, 0.9], 0.1)]);
        assert!(matches!(auc(&no_close, TieMode::Strict), Err(Error::NoCloseSamples)));
    }

    prop_compose! {
        /// Random table with distinct scores drawn from an exact grid.
        fn arb_distinct_table()(
            n_close in 1usize..24,
            n_open in 1usize..24,
            seed in 0u64..10_000,
        ) -> ScoreTable {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let total = n_close + n_open;
            let mut grid: Vec<f64> = (0..total * 3).map(|i| i as f64 * 0.25).collect();
            grid.shuffle(&mut rng);
            let mut rows = Vec::new();
            for i in 0..total {
                let open_label = i >= n_close;
                let label = if open_label {
                    Label::Open
                } else {
                    Label::Known(rng.random_range(0..2))
                };
                let scores = vec![rng.random_range(0..8) as f64 / 4.0, rng.random_range(0..8) as f64 / 4.0];
                rows.push((label, scores, grid[i]));
            }
            let samples = rows
                .into_iter()
                .enumerate()
                .map(|(i, (l, s, r))| ScoredSample::new(format!("s{i}"), l, s, r))
                .collect();
            ScoreTable::new(ScoreConvention::OpenHigh, 2, samples).unwrap()
        }
    }

    proptest! {
        #[test]
        fn routes_agree_exactly_on_tie_free_tables(table in arb_distinct_table()) {
            let pairwise = openauc(&table, OpenAucRoute::Pairwise, TieMode::Strict).unwrap();
            let sweep = openauc(&table, OpenAucRoute::Sweep, TieMode::Strict).unwrap();
            let masked = openauc(&table, OpenAucRoute::Masked, TieMode::Strict).unwrap();
            prop_assert_eq!(pairwise, sweep);
            prop_assert_eq!(pairwise, masked);
        }

        #[test]
        fn openauc_bounded_by_auc_and_accuracy(table in arb_distinct_table()) {
            let open_v = openauc(&table, OpenAucRoute::Pairwise, TieMode::Strict).unwrap();
            let auc_v = auc(&table, TieMode::Strict).unwrap();
            let acc = close_set_accuracy(&table).unwrap();
            prop_assert!(open_v <= auc_v);
            prop_assert!(open_v <= acc);
            if acc == 1.0 {
                prop_assert_eq!(open_v, auc_v);
            }
        }

        #[test]
        fn ranking_metrics_invariant_under_increasing_transform(
            table in arb_distinct_table(),
            scale in 1i32..4,
            shift in -8i32..8,
        ) {
            let transform = |v: f64| (scale as f64) * v + (shift as f64) / 4.0;
            let samples: Vec<_> = table
                .samples()
                .iter()
                .map(|s| {
                    ScoredSample::new(
                        s.id.clone(),
                        s.true_label,
                        s.class_scores.clone(),
                        transform(s.open_score),
                    )
                })
                .collect();
            let mapped =
                ScoreTable::new(table.convention(), table.num_known_classes(), samples).unwrap();
            prop_assert_eq!(
                auc(&table, TieMode::Strict).unwrap(),
                auc(&mapped, TieMode::Strict).unwrap()
            );
            prop_assert_eq!(
                openauc(&table, OpenAucRoute::Pairwise, TieMode::Strict).unwrap(),
                openauc(&mapped, OpenAucRoute::Pairwise, TieMode::Strict).unwrap()
            );
            let e_orig = error_at_tpr(&table, 0.75).unwrap();
            let e_mapped = error_at_tpr(&mapped, 0.75).unwrap();
            prop_assert_eq!(e_orig, e_mapped);
        }

        #[test]
        fn recall_bound_holds_at_every_sweep_threshold(table in arb_distinct_table()) {
            let stats = openauc_pair_stats(&table).unwrap();
            let missed = stats.total_pairs() - stats.concordant_pairs;
            for t in decision_sweep_thresholds(&table) {
                let (rej_open, rej_close) = rejection_counts_at(&table, t);
                if rej_close == 0 {
                    continue;
                }
                // tpr >= 1 - (1-k)/a  <=>  rejected_close * missed_open <= missed pairs.
                let fn_open = stats.n_open - rej_open;
                prop_assert!((rej_close as u128) * (fn_open as u128) <= missed as u128);
            }
        }

        #[test]
        fn pair_stats_invariants(table in arb_distinct_table()) {
            let stats = auc_pair_stats(&table).unwrap();
            prop_assert!(stats.concordant_pairs + stats.tied_pairs <= stats.total_pairs());
            prop_assert!(stats.correct_close <= stats.n_close);
        }
    }

    /// Exact rational check that the left-step area of the OFPR-COTPR curve
    /// equals the pairwise statistic on dyadic-size instances.
    #[test]
    fn curve_area_equals_pairwise_statistic_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            // Powers of two keep every curve coordinate exact in f64.
            let n_close = 8;
            let n_open = 4;
            let mut rows = Vec::new();
            for i in 0..n_close + n_open {
                let label = if i < n_close {
                    Label::Known(rng.random_range(0..2))
                } else {
                    Label::Open
                };
                let scores =
                    vec![rng.random_range(0..16) as f64 / 4.0, rng.random_range(0..16) as f64 / 4.0];
                let r = rng.random_range(0..64) as f64 / 8.0;
                rows.push(ScoredSample::new(format!("s{i}"), label, scores, r));
            }
            let table = ScoreTable::new(ScoreConvention::OpenHigh, 2, rows).unwrap();
            let curve = ofpr_cotpr_curve(&table).unwrap();
            let mut area = BigRational::zero();
            for w in curve.points.windows(2) {
                let dx = exact::from_f64(w[1].x).unwrap() - exact::from_f64(w[0].x).unwrap();
                area += dx * exact::from_f64(w[0].y).unwrap();
            }
            let stats = openauc_pair_stats(&table).unwrap();
            assert_eq!(area, exact::ratio(stats.concordant_pairs, stats.total_pairs()));
        }
    }

    #[test]
    fn curve_x_is_non_decreasing() {
        let table = three_sample_table();
        for curve in [
            roc_curve(&table).unwrap(),
            oscr_curve(&table).unwrap(),
            ofpr_cotpr_curve(&table).unwrap(),
        ] {
            for w in curve.points.windows(2) {
                assert!(w[1].x >= w[0].x, "{:?}", curve.kind);
            }
        }
    }
}
