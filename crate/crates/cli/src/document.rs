//! Report documents: ordered sections of named values rendered either as an
//! aligned text table or as JSON. Values computed rationally carry their
//! reduced fraction alongside the 12-digit decimal.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Value {
        value: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        fraction: Option<String>,
    },
    Text {
        text: String,
    },
    Unavailable {
        error: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub key: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    pub entries: Vec<Entry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            entries: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn value(&mut self, key: &str, value: f64) -> &mut Self {
        self.entries.push(Entry {
            key: key.into(),
            outcome: Outcome::Value {
                value,
                fraction: None,
            },
        });
        self
    }

    pub fn fraction(&mut self, key: &str, value: f64, fraction: String) -> &mut Self {
        self.entries.push(Entry {
            key: key.into(),
            outcome: Outcome::Value {
                value,
                fraction: Some(fraction),
            },
        });
        self
    }

    pub fn text(&mut self, key: &str, text: impl Into<String>) -> &mut Self {
        self.entries.push(Entry {
            key: key.into(),
            outcome: Outcome::Text { text: text.into() },
        });
        self
    }

    pub fn unavailable(&mut self, key: &str, error: impl Into<String>) -> &mut Self {
        self.entries.push(Entry {
            key: key.into(),
            outcome: Outcome::Unavailable {
                error: error.into(),
            },
        });
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Document {
    pub title: String,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn new(title: impl Into<String>) -> Self {
        Document {
            title: title.into(),
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        for section in &self.sections {
            let _ = writeln!(out, "\n[{}]", section.name);
            let width = section
                .entries
                .iter()
                .map(|e| e.key.len())
                .max()
                .unwrap_or(0)
                .max(12);
            for entry in &section.entries {
                match &entry.outcome {
                    Outcome::Value { value, fraction } => {
                        let decimal = format!("{value:.12}");
                        match fraction {
                            Some(frac) => {
                                let _ = writeln!(
                                    out,
                                    "  {:width$}  {decimal:>16}  = {frac}",
                                    entry.key
                                );
                            }
                            None => {
                                let _ = writeln!(out, "  {:width$}  {decimal:>16}", entry.key);
                            }
                        }
                    }
                    Outcome::Text { text } => {
                        let _ = writeln!(out, "  {:width$}  {text}", entry.key);
                    }
                    Outcome::Unavailable { error } => {
                        let _ = writeln!(out, "  {:width$}  unavailable: {error}", entry.key);
                    }
                }
            }
            for warning in &section.warnings {
                let _ = writeln!(out, "  warning: {warning}");
            }
        }
        out
    }
}
