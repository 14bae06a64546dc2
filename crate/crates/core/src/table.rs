//! Canonical data model for labeled, scored predictions.
//!
//! A [`ScoreTable`] holds one row per sample: the true label, one score per
//! known class, and a scalar open-set score. Two score directions exist in
//! the wild; [`ScoreTable::normalize`] canonicalizes everything to
//! [`ScoreConvention::OpenHigh`], under which a larger open score means
//! "more likely open-set" and the predicted class is the argmin of the
//! class scores. All downstream metrics assume a normalized table.

use serde::Serialize;

use crate::error::{Error, Result};

/// A class label: one of `C` known classes or the open (unknown) super-class.
///
/// Files encode the open class as `-1`; in-memory it indexes slot `C` of the
/// extended confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    Known(usize),
    Open,
}

impl Label {
    /// Row/column index in a `(C+1)`-class matrix.
    pub fn index(self, num_known_classes: usize) -> usize {
        match self {
            Label::Known(c) => c,
            Label::Open => num_known_classes,
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, Label::Open)
    }

    /// The `-1`-for-open integer encoding used by prediction files.
    pub fn to_file_encoding(self) -> i64 {
        match self {
            Label::Known(c) => c as i64,
            Label::Open => -1,
        }
    }

    pub fn from_file_encoding(value: i64, num_known_classes: usize) -> Result<Label> {
        if value == -1 {
            Ok(Label::Open)
        } else if value >= 0 && (value as usize) < num_known_classes {
            Ok(Label::Known(value as usize))
        } else {
            Err(Error::MalformedInput(format!(
                "label {value} out of range for {num_known_classes} known classes"
            )))
        }
    }
}

/// Direction convention of the scores in a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScoreConvention {
    /// Larger `open_score` means more likely open-set; larger
    /// `class_scores[c]` means *less* likely class `c`. Predictions are
    /// argmin. This is the canonical internal convention.
    OpenHigh,
    /// Larger `class_scores[c]` means more likely class `c` (softmax-style
    /// confidences). Converted on normalization by negating class scores and
    /// recomputing the open score as the minimum of the negated scores.
    ConfidenceHigh,
}

/// One labeled sample with its per-class scores and open-set score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredSample {
    pub id: String,
    pub true_label: Label,
    pub class_scores: Vec<f64>,
    pub open_score: f64,
}

impl ScoredSample {
    pub fn new(
        id: impl Into<String>,
        true_label: Label,
        class_scores: Vec<f64>,
        open_score: f64,
    ) -> Self {
        ScoredSample {
            id: id.into(),
            true_label,
            class_scores,
            open_score,
        }
    }

    /// Builds a sample whose open score is derived as the minimum class
    /// score (the canonical rule when no explicit open score is supplied).
    pub fn with_derived_open_score(
        id: impl Into<String>,
        true_label: Label,
        class_scores: Vec<f64>,
    ) -> Self {
        let open = min_score(&class_scores);
        ScoredSample::new(id, true_label, class_scores, open)
    }

    /// Index of the smallest class score, ties broken by lowest index.
    pub fn argmin_class(&self) -> usize {
        argmin(&self.class_scores)
    }
}

fn min_score(scores: &[f64]) -> f64 {
    scores.iter().copied().fold(f64::INFINITY, f64::min)
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// The outcome of thresholding one sample: rejected to the open class or
/// accepted and assigned a known class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub rejected: bool,
    pub predicted: Label,
}

/// An ordered collection of scored samples sharing one known-class count and
/// one score convention. Immutable after construction; all operations on it
/// are pure, so tables can be shared freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    convention: ScoreConvention,
    num_known_classes: usize,
    samples: Vec<ScoredSample>,
}

impl ScoreTable {
    pub fn new(
        convention: ScoreConvention,
        num_known_classes: usize,
        samples: Vec<ScoredSample>,
    ) -> Result<Self> {
        if num_known_classes == 0 {
            return Err(Error::InvalidParameter(
                "number of known classes must be at least 1".into(),
            ));
        }
        for sample in &samples {
            if sample.class_scores.len() != num_known_classes {
                return Err(Error::ScoreLengthMismatch {
                    id: sample.id.clone(),
                    got: sample.class_scores.len(),
                    expected: num_known_classes,
                });
            }
            if !sample.open_score.is_finite()
                || sample.class_scores.iter().any(|s| !s.is_finite())
            {
                return Err(Error::NonFiniteScore {
                    id: sample.id.clone(),
                });
            }
            if let Label::Known(c) = sample.true_label {
                if c >= num_known_classes {
                    return Err(Error::MalformedInput(format!(
                        "sample `{}` has label {} but only {} known classes",
                        sample.id, c, num_known_classes
                    )));
                }
            }
        }
        Ok(ScoreTable {
            convention,
            num_known_classes,
            samples,
        })
    }

    pub fn convention(&self) -> ScoreConvention {
        self.convention
    }

    pub fn num_known_classes(&self) -> usize {
        self.num_known_classes
    }

    pub fn samples(&self) -> &[ScoredSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_close(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| !s.true_label.is_open())
            .count()
    }

    pub fn num_open(&self) -> usize {
        self.samples.iter().filter(|s| s.true_label.is_open()).count()
    }

    /// Canonicalizes the table to the [`ScoreConvention::OpenHigh`]
    /// direction. Sample order is preserved and the call is idempotent.
    ///
    /// For a confidence-style table the class scores are negated and the
    /// open score recomputed as the minimum of the negated scores (so it
    /// equals the negated maximum confidence); any explicitly supplied open
    /// score is superseded, since under that convention the rejector is a
    /// function of the class confidences.
    pub fn normalize(&self) -> Result<ScoreTable> {
        match self.convention {
            ScoreConvention::OpenHigh => Ok(self.clone()),
            ScoreConvention::ConfidenceHigh => {
                let samples = self
                    .samples
                    .iter()
                    .map(|s| {
                        let negated: Vec<f64> = s.class_scores.iter().map(|v| -v).collect();
                        let open = min_score(&negated);
                        ScoredSample::new(s.id.clone(), s.true_label, negated, open)
                    })
                    .collect();
                ScoreTable::new(ScoreConvention::OpenHigh, self.num_known_classes, samples)
            }
        }
    }

    /// Replaces the open score of the sample at `index`, keeping everything
    /// else intact. Used by the audit constructions; scores stay finite by
    /// construction there.
    pub(crate) fn with_open_score(&self, index: usize, open_score: f64) -> ScoreTable {
        let mut table = self.clone();
        table.samples[index].open_score = open_score;
        table
    }
}

/// Applies the rejection rule and close-set classifier to one sample.
///
/// Requires the canonical open-high convention. A sample is rejected exactly
/// when its open score is strictly greater than the threshold; otherwise the
/// predicted class is the argmin of the class scores, ties broken by lowest
/// index, so repeated calls are deterministic.
pub fn decide(sample: &ScoredSample, threshold: f64) -> Decision {
    if sample.open_score > threshold {
        Decision {
            rejected: true,
            predicted: Label::Open,
        }
    } else {
        Decision {
            rejected: false,
            predicted: Label::Known(sample.argmin_class()),
        }
    }
}
