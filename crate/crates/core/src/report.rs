//! A named map of scalar metric values, with optional exact-fraction
//! renderings and degenerate-case warnings. This is the unit the audits
//! snapshot before and after a construction, and the payload the CLI turns
//! into a report document.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
    /// Reduced `p/q` strings for metrics that were computed rationally.
    pub fractions: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn put_with_fraction(&mut self, name: &str, value: f64, fraction: String) {
        self.values.insert(name.to_string(), value);
        self.fractions.insert(name.to_string(), fraction);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}
