//! Constructive metric audits.
//!
//! Each audit takes a prediction table, rewrites it with a small adversarial
//! transformation, and verifies the predicted metric behavior exactly:
//! classification metrics are compared in rational arithmetic and ranking
//! metrics as integer pair counts, so "unchanged" means unchanged to the
//! last bit, not within a tolerance.
//!
//! The first two constructions operate on plain (label, prediction) rows
//! because their bookkeeping is entirely confusion-matrix-level; the score
//! swaps need full score tables. Eligible samples are always consumed in
//! ascending row order, so audits are reproducible.

use num_rational::BigRational;
use serde::Serialize;

use crate::classification::{
    aks_exact, aus_exact, normalized_accuracy_exact, open_set_fscore_exact, youden_index_exact,
    FscoreMode,
};
use crate::confusion::ExtendedConfusionMatrix;
use crate::error::{Error, Result};
use crate::exact;
use crate::ranking::{auc_pair_stats, openauc_pair_stats, PairStats};
use crate::report::MetricReport;
use crate::table::{Label, ScoreTable};

/// One labeled sample with its final predicted label (no scores).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionRow {
    pub id: String,
    pub true_label: Label,
    pub predicted: Label,
}

/// Input schema for the confusion-matrix-level audits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTable {
    num_known_classes: usize,
    rows: Vec<DecisionRow>,
}

impl DecisionTable {
    pub fn new(num_known_classes: usize, rows: Vec<DecisionRow>) -> Result<Self> {
        if num_known_classes == 0 {
            return Err(Error::InvalidParameter(
                "number of known classes must be at least 1".into(),
            ));
        }
        for row in &rows {
            for (what, label) in [("label", row.true_label), ("prediction", row.predicted)] {
                if let Label::Known(c) = label {
                    if c >= num_known_classes {
                        return Err(Error::MalformedInput(format!(
                            "row `{}` has {what} {} but only {} known classes",
                            row.id, c, num_known_classes
                        )));
                    }
                }
            }
        }
        Ok(DecisionTable {
            num_known_classes,
            rows,
        })
    }

    pub fn num_known_classes(&self) -> usize {
        self.num_known_classes
    }

    pub fn rows(&self) -> &[DecisionRow] {
        &self.rows
    }

    pub fn confusion(&self) -> ExtendedConfusionMatrix {
        ExtendedConfusionMatrix::from_label_pairs(
            self.num_known_classes,
            0.0,
            self.rows.iter().map(|r| (r.true_label, r.predicted)),
        )
    }
}

/// Which adversarial rewrite an audit report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    /// Exchange the predictions of a rejected open sample and a
    /// misclassified close sample; known-class counts are untouched.
    Prop1,
    /// Relabel a rejected open sample and a rejected close sample to the
    /// close sample's true class.
    Prop2,
    /// Swap the open scores of a correctly and an incorrectly classified
    /// close sample around an open sample sitting between them.
    Prop3,
    /// Swap the open scores of a rejected open sample and an accepted,
    /// misclassified close sample.
    Prop5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The precondition held and the predicted metric relation was observed
    /// exactly.
    ConfirmedInconsistent,
    ConditionNotMet,
}

/// Outcome of one audit: metric snapshots before and after the rewrite plus
/// the verified verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub construction: Construction,
    pub steps_applied: usize,
    pub metric_before: MetricReport,
    pub metric_after: MetricReport,
    pub tp_open_before: Option<u64>,
    pub tp_open_after: Option<u64>,
    pub verdict: Verdict,
    pub precondition_held: bool,
    pub notes: Vec<String>,
}

/// The metric whose invariance a prediction-exchange audit certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditMetric {
    FscoreMacro,
    FscoreMicro,
    Youden,
}

impl AuditMetric {
    fn eval(self, m: &ExtendedConfusionMatrix) -> BigRational {
        match self {
            AuditMetric::FscoreMacro => open_set_fscore_exact(m, FscoreMode::Macro),
            AuditMetric::FscoreMicro => open_set_fscore_exact(m, FscoreMode::Micro),
            AuditMetric::Youden => youden_index_exact(m),
        }
    }
}

fn classification_report(m: &ExtendedConfusionMatrix) -> MetricReport {
    let mut report = MetricReport::new();
    for (name, value) in [
        ("f_macro", open_set_fscore_exact(m, FscoreMode::Macro)),
        ("f_micro", open_set_fscore_exact(m, FscoreMode::Micro)),
        ("youden", youden_index_exact(m)),
    ] {
        report.put_with_fraction(name, exact::to_f64(&value), exact::format_fraction(&value));
    }
    report
}

fn sum_known_fp(m: &ExtendedConfusionMatrix) -> u64 {
    (0..m.num_known_classes()).map(|i| m.false_positives(i)).sum()
}

fn sum_known_fn(m: &ExtendedConfusionMatrix) -> u64 {
    (0..m.num_known_classes()).map(|i| m.false_negatives(i)).sum()
}

/// Repeatedly exchanges the prediction of a rejected open sample with that
/// of a close sample misclassified into a known class. Every known-class
/// count is preserved, so any metric reading only those counts is exactly
/// unchanged while the open-class true positives drain away.
pub fn construct_prop1(
    table: &DecisionTable,
    metric: AuditMetric,
) -> Result<(AuditReport, DecisionTable)> {
    if !table.rows.iter().any(|r| r.true_label.is_open()) {
        return Err(Error::NoOpenSamples);
    }
    let before = table.confusion();
    let open_idx = before.open_index();
    let tp_open_before = before.true_positives(open_idx);
    let precondition_held = sum_known_fp(&before) >= tp_open_before;

    let mut rows = table.rows.clone();
    let open_pred_open: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.true_label.is_open() && r.predicted.is_open())
        .map(|(i, _)| i)
        .collect();
    let close_wrong_known: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            !r.true_label.is_open() && !r.predicted.is_open() && r.predicted != r.true_label
        })
        .map(|(i, _)| i)
        .collect();

    let steps = open_pred_open.len().min(close_wrong_known.len());
    for k in 0..steps {
        let x1 = open_pred_open[k];
        let x2 = close_wrong_known[k];
        rows[x1].predicted = rows[x2].predicted;
        rows[x2].predicted = Label::Open;
    }
    let transformed = DecisionTable::new(table.num_known_classes, rows)?;
    let after = transformed.confusion();
    let tp_open_after = after.true_positives(open_idx);

    let metric_equal = metric.eval(&before) == metric.eval(&after);
    let mut notes = Vec::new();
    if !precondition_held {
        notes.push("known-class false positives fall short of open-class true positives".into());
    }
    if precondition_held && tp_open_after > 0 {
        notes.push(format!(
            "eligible close-set partners exhausted with {tp_open_after} open true positives left \
             (only misclassified close samples can absorb the exchange)"
        ));
    }
    let verdict = if precondition_held && metric_equal && tp_open_after == 0 && steps > 0 {
        Verdict::ConfirmedInconsistent
    } else {
        Verdict::ConditionNotMet
    };
    if !metric_equal {
        notes.push("metric changed under the exchange; construction invariant violated".into());
    }

    Ok((
        AuditReport {
            construction: Construction::Prop1,
            steps_applied: steps,
            metric_before: classification_report(&before),
            metric_after: classification_report(&after),
            tp_open_before: Some(tp_open_before),
            tp_open_after: Some(tp_open_after),
            verdict,
            precondition_held,
            notes,
        },
        transformed,
    ))
}

/// Repeatedly relabels a (rejected open, rejected close) pair to the close
/// sample's true class. Each step keeps the known-sample accuracy constant
/// and strictly raises the open-sample accuracy, hence strictly raises the
/// normalized accuracy, while open-class true positives decrease.
pub fn construct_prop2(
    table: &DecisionTable,
    lambda_na: f64,
) -> Result<(AuditReport, DecisionTable)> {
    construct_prop2_with_ratio(table, &exact::from_f64(lambda_na)?, lambda_na)
}

pub fn construct_prop2_with_ratio(
    table: &DecisionTable,
    lambda_na: &BigRational,
    lambda_display: f64,
) -> Result<(AuditReport, DecisionTable)> {
    if !table.rows.iter().any(|r| r.true_label.is_open()) {
        return Err(Error::NoOpenSamples);
    }
    let before = table.confusion();
    let open_idx = before.open_index();
    let tp_open_before = before.true_positives(open_idx);
    let fp_open_before = before.false_positives(open_idx);
    let precondition_held =
        sum_known_fn(&before) >= tp_open_before && tp_open_before > fp_open_before;

    let nacc_report = |m: &ExtendedConfusionMatrix| -> Result<MetricReport> {
        let n = normalized_accuracy_exact(m, lambda_na)?;
        let mut report = MetricReport::new();
        for (name, value) in [("aks", &n.aks), ("aus", &n.aus), ("nacc", &n.nacc)] {
            report.put_with_fraction(name, exact::to_f64(value), exact::format_fraction(value));
        }
        report.put("lambda_na", lambda_display);
        Ok(report)
    };

    let mut rows = table.rows.clone();
    let mut steps = 0usize;
    let mut notes = Vec::new();
    let mut every_step_increased = true;

    if precondition_held {
        let open_pred_open: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.true_label.is_open() && r.predicted.is_open())
            .map(|(i, _)| i)
            .collect();
        let close_pred_open: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.true_label.is_open() && r.predicted.is_open())
            .map(|(i, _)| i)
            .collect();

        let mut current = table.clone();
        for (&x1, &x2) in open_pred_open.iter().zip(close_pred_open.iter()) {
            let m = current.confusion();
            let tp = m.true_positives(open_idx);
            let fp = m.false_positives(open_idx);
            if tp + fp <= 2 {
                notes.push(
                    "step refused: open-prediction count would leave a non-positive \
                     denominator"
                        .into(),
                );
                break;
            }
            let y2 = rows[x2].true_label;
            rows[x1].predicted = y2;
            rows[x2].predicted = y2;
            let next = DecisionTable::new(table.num_known_classes, rows.clone())?;
            let next_m = next.confusion();
            let aks_equal = aks_exact(&m) == aks_exact(&next_m);
            let aus_increased = aus_exact(&next_m) > aus_exact(&m);
            if !(aks_equal && aus_increased) {
                every_step_increased = false;
            }
            current = next;
            steps += 1;
        }
        let remaining = current.confusion().true_positives(open_idx);
        if remaining > 0 {
            notes.push(format!(
                "rejected close-set partners exhausted with {remaining} open true positives \
                 left (each step consumes one rejected close sample)"
            ));
        }
    } else {
        notes.push("preconditions not met; table left untouched".into());
    }

    let transformed = DecisionTable::new(table.num_known_classes, rows)?;
    let after = transformed.confusion();
    let nacc_before = normalized_accuracy_exact(&before, lambda_na)?;
    let nacc_after = normalized_accuracy_exact(&after, lambda_na)?;
    let strictly_increased = nacc_after.nacc > nacc_before.nacc;

    let verdict = if precondition_held && steps > 0 && every_step_increased && strictly_increased {
        Verdict::ConfirmedInconsistent
    } else {
        Verdict::ConditionNotMet
    };

    Ok((
        AuditReport {
            construction: Construction::Prop2,
            steps_applied: steps,
            metric_before: nacc_report(&before)?,
            metric_after: nacc_report(&after)?,
            tp_open_before: Some(tp_open_before),
            tp_open_after: Some(after.true_positives(open_idx)),
            verdict,
            precondition_held,
            notes,
        },
        transformed,
    ))
}

fn ranking_report(table: &ScoreTable) -> Result<MetricReport> {
    let stats = auc_pair_stats(table)?;
    let gated = openauc_pair_stats(table)?;
    let total = stats.total_pairs();
    let mut report = MetricReport::new();
    let acc = exact::ratio(stats.correct_close, stats.n_close);
    let auc = exact::ratio(stats.concordant_pairs, total);
    let open = exact::ratio(gated.concordant_pairs, total);
    let product = &acc * &auc;
    let sum = &acc + &auc;
    let pointwise = exact::ratio(stats.correct_close * stats.n_open + stats.concordant_pairs, total);
    for (name, value) in [
        ("acc_known", &acc),
        ("auc", &auc),
        ("openauc", &open),
        ("agg_product", &product),
        ("agg_sum", &sum),
        ("agg_pointwise", &pointwise),
    ] {
        report.put_with_fraction(name, exact::to_f64(value), exact::format_fraction(value));
    }
    Ok(report)
}

fn count_open_strictly_between(open_sorted: &[f64], lo: f64, hi: f64) -> u64 {
    let below_hi = open_sorted.partition_point(|&v| v < hi);
    let at_or_below_lo = open_sorted.partition_point(|&v| v <= lo);
    (below_hi.saturating_sub(at_or_below_lo)) as u64
}

struct RankingCounts {
    stats: PairStats,
    gated: PairStats,
}

fn ranking_counts(table: &ScoreTable) -> Result<RankingCounts> {
    Ok(RankingCounts {
        stats: auc_pair_stats(table)?,
        gated: openauc_pair_stats(table)?,
    })
}

/// Iteratively swaps the open scores of a correctly classified close sample
/// and a misclassified one whenever an open sample sits strictly between
/// them. Close-set accuracy, ranking AUC, and all three aggregation
/// baselines are exactly preserved; every swap removes at least one
/// correctly-ranked gated pair, so OpenAUC strictly drops.
pub fn construct_prop3(table: &ScoreTable) -> Result<(AuditReport, ScoreTable)> {
    let mut current = table.normalize()?;
    let before_counts = ranking_counts(&current)?;
    let metric_before = ranking_report(&current)?;

    let open_sorted: Vec<f64> = {
        let mut v: Vec<f64> = current
            .samples()
            .iter()
            .filter(|s| s.true_label.is_open())
            .map(|s| s.open_score)
            .collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    };

    let find_witness = |t: &ScoreTable| -> Option<(usize, usize)> {
        let samples = t.samples();
        for (i, si) in samples.iter().enumerate() {
            let correct = match si.true_label {
                Label::Known(c) => si.argmin_class() == c,
                Label::Open => continue,
            };
            if !correct {
                continue;
            }
            for (j, sj) in samples.iter().enumerate() {
                let wrong = match sj.true_label {
                    Label::Known(c) => sj.argmin_class() != c,
                    Label::Open => continue,
                };
                if !wrong || sj.open_score <= si.open_score {
                    continue;
                }
                if count_open_strictly_between(&open_sorted, si.open_score, sj.open_score) > 0 {
                    return Some((i, j));
                }
            }
        }
        None
    };

    let mut steps = 0usize;
    let mut last_gated = before_counts.gated.concordant_pairs;
    let mut per_step_ok = true;
    while let Some((i, j)) = find_witness(&current) {
        let ri = current.samples()[i].open_score;
        let rj = current.samples()[j].open_score;
        current = current.with_open_score(i, rj).with_open_score(j, ri);
        steps += 1;
        let gated_now = openauc_pair_stats(&current)?.concordant_pairs;
        if gated_now >= last_gated {
            per_step_ok = false;
        }
        last_gated = gated_now;
    }

    let after_counts = ranking_counts(&current)?;
    let metric_after = ranking_report(&current)?;
    let invariants_hold = before_counts.stats.correct_close == after_counts.stats.correct_close
        && before_counts.stats.concordant_pairs == after_counts.stats.concordant_pairs
        && before_counts.stats.tied_pairs == after_counts.stats.tied_pairs;
    let decreased_enough = before_counts.gated.concordant_pairs
        >= after_counts.gated.concordant_pairs + steps as u64;

    let mut notes = Vec::new();
    if steps == 0 {
        notes.push("no witness triple (correct low / wrong high / open between)".into());
    }
    let verdict = if steps > 0 && invariants_hold && per_step_ok && decreased_enough {
        Verdict::ConfirmedInconsistent
    } else {
        Verdict::ConditionNotMet
    };

    Ok((
        AuditReport {
            construction: Construction::Prop3,
            steps_applied: steps,
            metric_before,
            metric_after,
            tp_open_before: None,
            tp_open_after: None,
            verdict,
            precondition_held: steps > 0,
            notes,
        },
        current,
    ))
}

/// Swaps the open scores of the first rejected open sample and the first
/// accepted misclassified close sample at the given threshold. OpenAUC can
/// only fall, and falls strictly exactly when a correctly classified close
/// sample lies inside the swapped score interval.
pub fn verify_prop5(table: &ScoreTable, threshold: f64) -> Result<(AuditReport, ScoreTable)> {
    let normalized = table.normalize()?;
    let metric_before = ranking_report(&normalized)?;
    let before_gated = openauc_pair_stats(&normalized)?;

    let samples = normalized.samples();
    let x1 = samples
        .iter()
        .position(|s| s.true_label.is_open() && s.open_score > threshold);
    let x2 = samples.iter().position(|s| match s.true_label {
        Label::Known(c) => s.open_score <= threshold && s.argmin_class() != c,
        Label::Open => false,
    });

    let (x1, x2) = match (x1, x2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let report = AuditReport {
                construction: Construction::Prop5,
                steps_applied: 0,
                metric_before: metric_before.clone(),
                metric_after: metric_before,
                tp_open_before: Some(count_rejected_open(&normalized, threshold)),
                tp_open_after: Some(count_rejected_open(&normalized, threshold)),
                verdict: Verdict::ConditionNotMet,
                precondition_held: false,
                notes: vec![
                    "no witness pair (rejected open sample + accepted misclassified close \
                     sample) at this threshold"
                        .into(),
                ],
            };
            return Ok((report, normalized));
        }
    };

    let r_high = samples[x1].open_score;
    let r_low = samples[x2].open_score;
    let tp_open_before = count_rejected_open(&normalized, threshold);

    // Expected drop in gated concordant pairs: correctly classified close
    // samples with r in [r_low, r_high).
    let mut predicted_drop = 0u64;
    let mut strict_gap = 0u64;
    for s in samples {
        if let Label::Known(c) = s.true_label {
            if s.argmin_class() == c {
                if s.open_score >= r_low && s.open_score < r_high {
                    predicted_drop += 1;
                }
                if s.open_score > r_low && s.open_score < r_high {
                    strict_gap += 1;
                }
            }
        }
    }

    let transformed = normalized.with_open_score(x1, r_low).with_open_score(x2, r_high);
    let after_gated = openauc_pair_stats(&transformed)?;
    let metric_after = ranking_report(&transformed)?;

    let observed_drop = before_gated
        .concordant_pairs
        .saturating_sub(after_gated.concordant_pairs);
    let non_increasing = after_gated.concordant_pairs <= before_gated.concordant_pairs;

    let mut notes = Vec::new();
    if strict_gap > 0 {
        notes.push(format!(
            "strict decrease: {strict_gap} correctly classified close sample(s) inside the \
             swapped interval"
        ));
    } else if predicted_drop == 0 {
        notes.push("empty interval: the ranking metric is exactly unchanged".into());
    }
    let verdict = if non_increasing
        && observed_drop == predicted_drop
        && (strict_gap == 0 || observed_drop > 0)
    {
        Verdict::ConfirmedInconsistent
    } else {
        Verdict::ConditionNotMet
    };

    Ok((
        AuditReport {
            construction: Construction::Prop5,
            steps_applied: 1,
            metric_before,
            metric_after,
            tp_open_before: Some(tp_open_before),
            tp_open_after: Some(count_rejected_open(&transformed, threshold)),
            verdict,
            precondition_held: true,
            notes,
        },
        transformed,
    ))
}

fn count_rejected_open(table: &ScoreTable, threshold: f64) -> u64 {
    table
        .samples()
        .iter()
        .filter(|s| s.true_label.is_open() && s.open_score > threshold)
        .count() as u64
}
