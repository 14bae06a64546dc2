//! Threshold-dependent classification metrics over the extended confusion
//! matrix: open-set F-score (macro and micro over known classes), Youden's
//! index, and normalized accuracy with its AKS/AUS parts.
//!
//! All values are computed in exact rational arithmetic from the integer
//! counts and converted to `f64` once, so identities such as
//! `nacc = lambda * aks + (1 - lambda) * aus` hold exactly.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::confusion::ExtendedConfusionMatrix;
use crate::error::{Error, Result};
use crate::exact;

/// How per-class precision/recall are aggregated over known classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FscoreMode {
    Macro,
    Micro,
}

/// All scalar classification metrics at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub f_macro: f64,
    pub f_micro: f64,
    pub youden_j: f64,
    pub aks: f64,
    pub aus: f64,
    pub nacc: f64,
    pub lambda_na: f64,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

impl ClassificationMetrics {
    /// Computes every metric for one matrix. `lambda_na` must lie in (0,1).
    pub fn compute(m: &ExtendedConfusionMatrix, lambda_na: f64) -> Result<Self> {
        let lambda = exact::from_f64(lambda_na)?;
        Self::compute_with_ratio(m, &lambda, lambda_na)
    }

    /// Same as [`ClassificationMetrics::compute`] but with the balance
    /// constant given as an exact rational (e.g. parsed from a decimal
    /// string), keeping reported fractions small.
    pub fn compute_with_ratio(
        m: &ExtendedConfusionMatrix,
        lambda_na: &BigRational,
        lambda_display: f64,
    ) -> Result<Self> {
        let exact = exact_metrics(m, lambda_na)?;
        let warnings = m
            .degenerate_classes()
            .into_iter()
            .map(|(class, reason)| {
                let name = if class == m.open_index() {
                    "open".to_string()
                } else {
                    class.to_string()
                };
                format!("degenerate class {name}: {reason}")
            })
            .collect();
        Ok(ClassificationMetrics {
            f_macro: exact::to_f64(&exact.f_macro),
            f_micro: exact::to_f64(&exact.f_micro),
            youden_j: exact::to_f64(&exact.youden),
            aks: exact::to_f64(&exact.aks),
            aus: exact::to_f64(&exact.aus),
            nacc: exact::to_f64(&exact.nacc),
            lambda_na: lambda_display,
            threshold: m.threshold(),
            warnings,
        })
    }
}

/// The same metric set as exact rationals, for callers that print fractions
/// or assert equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactClassificationMetrics {
    pub f_macro: BigRational,
    pub f_micro: BigRational,
    pub youden: BigRational,
    pub aks: BigRational,
    pub aus: BigRational,
    pub nacc: BigRational,
}

pub fn exact_metrics(
    m: &ExtendedConfusionMatrix,
    lambda_na: &BigRational,
) -> Result<ExactClassificationMetrics> {
    let nacc = normalized_accuracy_exact(m, lambda_na)?;
    Ok(ExactClassificationMetrics {
        f_macro: open_set_fscore_exact(m, FscoreMode::Macro),
        f_micro: open_set_fscore_exact(m, FscoreMode::Micro),
        youden: youden_index_exact(m),
        aks: nacc.aks,
        aus: nacc.aus,
        nacc: nacc.nacc,
    })
}

/// Harmonic mean of known-class precision and recall; 0 when both vanish.
pub fn open_set_fscore(m: &ExtendedConfusionMatrix, mode: FscoreMode) -> f64 {
    exact::to_f64(&open_set_fscore_exact(m, mode))
}

pub fn open_set_fscore_exact(m: &ExtendedConfusionMatrix, mode: FscoreMode) -> BigRational {
    let (precision, recall) = match mode {
        FscoreMode::Macro => (
            macro_average(m, |m, i| {
                exact::ratio_or_zero(m.true_positives(i), m.true_positives(i) + m.false_positives(i))
            }),
            macro_average(m, |m, i| {
                exact::ratio_or_zero(m.true_positives(i), m.true_positives(i) + m.false_negatives(i))
            }),
        ),
        FscoreMode::Micro => {
            let mut tp = 0u64;
            let mut tp_fp = 0u64;
            let mut tp_fn = 0u64;
            for i in 0..m.num_known_classes() {
                tp += m.true_positives(i);
                tp_fp += m.true_positives(i) + m.false_positives(i);
                tp_fn += m.true_positives(i) + m.false_negatives(i);
            }
            (exact::ratio_or_zero(tp, tp_fp), exact::ratio_or_zero(tp, tp_fn))
        }
    };
    let sum = &precision + &recall;
    if sum.is_zero() {
        BigRational::zero()
    } else {
        BigRational::from_integer(2.into()) * precision * recall / sum
    }
}

/// Macro-averaged TPR plus macro-averaged TNR minus one, over known classes.
pub fn youden_index(m: &ExtendedConfusionMatrix) -> f64 {
    exact::to_f64(&youden_index_exact(m))
}

pub fn youden_index_exact(m: &ExtendedConfusionMatrix) -> BigRational {
    let tpr = macro_average(m, |m, i| {
        exact::ratio_or_zero(m.true_positives(i), m.true_positives(i) + m.false_negatives(i))
    });
    let tnr = macro_average(m, |m, i| {
        exact::ratio_or_zero(m.true_negatives(i), m.true_negatives(i) + m.false_positives(i))
    });
    tpr + tnr - BigRational::one()
}

fn macro_average(
    m: &ExtendedConfusionMatrix,
    per_class: impl Fn(&ExtendedConfusionMatrix, usize) -> BigRational,
) -> BigRational {
    let c = m.num_known_classes();
    let sum: BigRational = (0..c).map(|i| per_class(m, i)).sum();
    sum / BigRational::from_integer((c as u64).into())
}

/// Accuracy on known samples, accuracy on unknown samples, and their convex
/// combination.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAccuracy {
    pub aks: f64,
    pub aus: f64,
    pub nacc: f64,
}

pub(crate) struct NormalizedAccuracyExact {
    pub aks: BigRational,
    pub aus: BigRational,
    pub nacc: BigRational,
}

/// `lambda_na * AKS + (1 - lambda_na) * AUS` with `lambda_na` in (0,1).
/// AUS is 0/0-degenerate when nothing is predicted open; that case maps to 0.
pub fn normalized_accuracy(
    m: &ExtendedConfusionMatrix,
    lambda_na: f64,
) -> Result<NormalizedAccuracy> {
    let lambda = exact::from_f64(lambda_na)?;
    let exact = normalized_accuracy_exact(m, &lambda)?;
    Ok(NormalizedAccuracy {
        aks: exact::to_f64(&exact.aks),
        aus: exact::to_f64(&exact.aus),
        nacc: exact::to_f64(&exact.nacc),
    })
}

pub(crate) fn normalized_accuracy_exact(
    m: &ExtendedConfusionMatrix,
    lambda_na: &BigRational,
) -> Result<NormalizedAccuracyExact> {
    if !(lambda_na > &BigRational::zero() && lambda_na < &BigRational::one()) {
        return Err(Error::InvalidParameter(
            "lambda_na must lie strictly between 0 and 1".into(),
        ));
    }
    let aks = aks_exact(m);
    let aus = aus_exact(m);
    let nacc = lambda_na * &aks + (BigRational::one() - lambda_na) * &aus;
    Ok(NormalizedAccuracyExact { aks, aus, nacc })
}

pub(crate) fn aks_exact(m: &ExtendedConfusionMatrix) -> BigRational {
    let mut num = 0u64;
    let mut den = 0u64;
    for i in 0..m.num_known_classes() {
        num += m.true_positives(i) + m.true_negatives(i);
        den += m.true_positives(i)
            + m.true_negatives(i)
            + m.false_positives(i)
            + m.false_negatives(i);
    }
    exact::ratio_or_zero(num, den)
}

pub(crate) fn aus_exact(m: &ExtendedConfusionMatrix) -> BigRational {
    let open = m.open_index();
    exact::ratio_or_zero(
        m.true_positives(open),
        m.true_positives(open) + m.false_positives(open),
    )
}
