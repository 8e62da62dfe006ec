//! Tab-separated pair files: `source<TAB>mt[<TAB>score[<TAB>variance]]`.
//!
//! Scores are on the 0–100 scale in files and normalized to `[0, 1]` in
//! memory. Variances are stored as-is on the normalized scale.

use std::fs;
use std::path::Path;

use super::{denormalize_score, normalize_score, Dataset, Example, Origin};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ReadOptions {
    /// Skip the first line.
    pub has_header: bool,
    pub origin: Origin,
}

pub fn read_pairs(path: impl AsRef<Path>, options: &ReadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut ds = parse_pairs(&text, options)?;
    ds.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ds.provenance = path.display().to_string();
    Ok(ds)
}

pub fn parse_pairs(text: &str, options: &ReadOptions) -> Result<Dataset> {
    let mut examples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if options.has_header && line == 1 {
            continue;
        }
        let fields: Vec<&str> = raw.strip_suffix('\r').unwrap_or(raw).split('\t').collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 to 4 tab-separated columns, found {}", fields.len()),
            });
        }
        let mut ex = Example::new(fields[0], fields[1]);
        ex.origin = options.origin;
        if let Some(score) = fields.get(2) {
            let raw_score: f64 = score.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("score {score:?} is not a number"),
            })?;
            ex.label = Some(normalize_score(raw_score).map_err(|_| Error::Range {
                value: raw_score,
                line: Some(line),
            })?);
        }
        if let Some(var) = fields.get(3) {
            let v: f64 = var.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("variance {var:?} is not a number"),
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parse {
                    line,
                    msg: format!("variance {v} must be finite and non-negative"),
                });
            }
            ex.variance = Some(v);
        }
        examples.push(ex);
    }
    Ok(Dataset {
        examples,
        ..Dataset::default()
    })
}

pub fn format_pairs(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        for text in [&e.source, &e.mt] {
            if text.contains(['\t', '\n', '\r']) {
                return Err(Error::Contract(format!(
                    "example {i}: sentence contains a tab or newline"
                )));
            }
        }
        out.push_str(&e.source);
        out.push('\t');
        out.push_str(&e.mt);
        match (e.label, e.variance) {
            (Some(label), variance) => {
                out.push('\t');
                out.push_str(&format_score(denormalize_score(label)));
                if let Some(v) = variance {
                    out.push('\t');
                    out.push_str(&v.to_string());
                }
            }
            (None, Some(_)) => {
                return Err(Error::Contract(format!(
                    "example {i}: variance without a label cannot be written"
                )))
            }
            (None, None) => {}
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_pairs(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_pairs(dataset)?)?;
    Ok(())
}

/// Ten decimals with trailing zeros trimmed.
fn format_score(raw: f64) -> String {
    let s = format!("{raw:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
