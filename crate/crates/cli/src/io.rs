//! Prediction and decision file formats.
//!
//! Prediction files are comma-separated with header
//! `id,label,score_0,...,score_{C-1}[,r]`, an optional leading directive
//! line `# convention=open_high|confidence_high` (default open_high), and
//! labels encoded as `0..C-1` with `-1` for the open class. Decision files
//! carry `id,label,prediction` with the same label encoding. All parse
//! errors name the offending line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use osr_core::audit::{DecisionRow, DecisionTable};
use osr_core::{Label, ScoreConvention, ScoreTable, ScoredSample};

use crate::CliError;

pub enum InputTable {
    Scores(ScoreTable),
    Decisions(DecisionTable),
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::parse(format!("{}:{}: {}", path.display(), line, msg.into()))
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(|f| f.trim()).collect()
}

/// Reads either file format, deciding by the header row.
pub fn read_input(path: &Path) -> Result<InputTable, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().peekable();

    let mut convention = ScoreConvention::OpenHigh;
    if let Some((_, first)) = lines.peek() {
        if let Some(rest) = first.trim().strip_prefix('#') {
            let (line_no, _) = lines.next().unwrap();
            let directive = rest.trim();
            match directive.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                Some(("convention", "open_high")) => {}
                Some(("convention", "confidence_high")) => {
                    convention = ScoreConvention::ConfidenceHigh;
                }
                _ => {
                    return Err(parse_err(
                        path,
                        line_no + 1,
                        format!("unknown directive `#{directive}`"),
                    ))
                }
            }
        }
    }

    let (header_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields = split_fields(header);
    if fields == ["id", "label", "prediction"] {
        let rows = parse_decision_rows(path, lines)?;
        let table = decision_table_from_rows(path, rows)?;
        return Ok(InputTable::Decisions(table));
    }
    let num_classes = validate_prediction_header(path, header_no + 1, &fields)?;
    let has_r = *fields.last().unwrap() == "r";
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = split_fields(line);
        if row.len() != fields.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, got {}", fields.len(), row.len()),
            ));
        }
        let label_value: i64 = row[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label `{}`", row[1])))?;
        let label = Label::from_file_encoding(label_value, num_classes)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let mut scores = Vec::with_capacity(num_classes);
        for (c, field) in row[2..2 + num_classes].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad score_{c} `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("score_{c} is not finite")));
            }
            scores.push(v);
        }
        let sample = if has_r {
            let r: f64 = row[2 + num_classes]
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad r `{}`", row[2 + num_classes])))?;
            if !r.is_finite() {
                return Err(parse_err(path, line_no, "r is not finite"));
            }
            ScoredSample::new(row[0], label, scores, r)
        } else {
            ScoredSample::with_derived_open_score(row[0], label, scores)
        };
        samples.push(sample);
    }
    let table = ScoreTable::new(convention, num_classes, samples)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    Ok(InputTable::Scores(table))
}

fn validate_prediction_header(
    path: &Path,
    line_no: usize,
    fields: &[&str],
) -> Result<usize, CliError> {
    if fields.len() < 3 || fields[0] != "id" || fields[1] != "label" {
        return Err(parse_err(
            path,
            line_no,
            "header must be `id,label,score_0,...[,r]` or `id,label,prediction`",
        ));
    }
    let has_r = *fields.last().unwrap() == "r";
    let score_fields = &fields[2..fields.len() - usize::from(has_r)];
    if score_fields.is_empty() {
        return Err(parse_err(path, line_no, "no score columns in header"));
    }
    for (c, field) in score_fields.iter().enumerate() {
        if *field != format!("score_{c}") {
            return Err(parse_err(
                path,
                line_no,
                format!("expected column `score_{c}`, found `{field}`"),
            ));
        }
    }
    Ok(score_fields.len())
}

type NumberedLines<'a> = std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>;

fn parse_decision_rows(
    path: &Path,
    lines: NumberedLines<'_>,
) -> Result<Vec<(usize, String, i64, i64)>, CliError> {
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line);
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let label: i64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label `{}`", fields[1])))?;
        let prediction: i64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad prediction `{}`", fields[2])))?;
        rows.push((line_no, fields[0].to_string(), label, prediction));
    }
    Ok(rows)
}

fn decision_table_from_rows(
    path: &Path,
    rows: Vec<(usize, String, i64, i64)>,
) -> Result<DecisionTable, CliError> {
    // The known-class count is implied by the largest class mentioned.
    let max_known = rows
        .iter()
        .flat_map(|(_, _, l, p)| [*l, *p])
        .filter(|v| *v >= 0)
        .max()
        .unwrap_or(0);
    let num_classes = (max_known + 1).max(1) as usize;
    let mut decision_rows = Vec::with_capacity(rows.len());
    for (line_no, id, label, prediction) in rows {
        let true_label = Label::from_file_encoding(label, num_classes)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let predicted = Label::from_file_encoding(prediction, num_classes)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        decision_rows.push(DecisionRow {
            id,
            true_label,
            predicted,
        });
    }
    DecisionTable::new(num_classes, decision_rows)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

pub fn render_prediction_file(table: &ScoreTable) -> String {
    let mut out = String::new();
    let convention = match table.convention() {
        ScoreConvention::OpenHigh => "open_high",
        ScoreConvention::ConfidenceHigh => "confidence_high",
    };
    let _ = writeln!(out, "# convention={convention}");
    let mut header = String::from("id,label");
    for c in 0..table.num_known_classes() {
        let _ = write!(header, ",score_{c}");
    }
    header.push_str(",r");
    let _ = writeln!(out, "{header}");
    for sample in table.samples() {
        let _ = write!(out, "{},{}", sample.id, sample.true_label.to_file_encoding());
        for score in &sample.class_scores {
            let _ = write!(out, ",{score}");
        }
        let _ = writeln!(out, ",{}", sample.open_score);
    }
    out
}

pub fn render_decision_file(table: &DecisionTable) -> String {
    let mut out = String::from("id,label,prediction\n");
    for row in table.rows() {
        let _ = writeln!(
            out,
            "{},{},{}",
            row.id,
            row.true_label.to_file_encoding(),
            row.predicted.to_file_encoding()
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// `data/x.csv` becomes `data/x.adv.csv`.
pub fn adversarial_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".into());
    input.with_file_name(format!("{stem}.adv.csv"))
}
