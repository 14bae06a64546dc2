#![allow(clippy::needless_range_loop)]

//! Metrics, audits, and a small trainer for open-set recognition.
//!
//! The crate is organized around one data model ([`table::ScoreTable`])
//! and four consumers of it:
//!
//! - [`confusion`]: the extended `(C+1)`-class confusion matrix at a fixed
//!   rejection threshold.
//! - [`classification`]: threshold-dependent metrics (open-set F-score,
//!   Youden's index, normalized accuracy), computed in exact rational
//!   arithmetic.
//! - [`ranking`]: threshold-free metrics and curves (close-set accuracy,
//!   ranking AUC, OSCR and OFPR-COTPR curves, OpenAUC by three mutually
//!   checking routes, Error@TPR, the recall lower bound).
//! - [`audit`]: constructive rewrites showing which metrics can be gamed
//!   and verifying that the gated ranking metric cannot.
//!
//! [`synth`], [`mlp`], and [`trainer`] implement the desk-scale end of the
//! story: generating blob datasets, and minimizing the gated pairwise
//! ranking risk with mixup-synthesized open features.
//!
//! Everything is pure and immutable after construction; tables and matrices
//! can be shared across threads freely.

pub mod audit;
pub mod classification;
pub mod confusion;
pub mod error;
pub mod exact;
pub mod mlp;
pub mod ranking;
pub mod report;
pub mod synth;
pub mod table;
pub mod trainer;

pub use error::{Error, Result};
pub use table::{decide, Decision, Label, ScoreConvention, ScoreTable, ScoredSample};
