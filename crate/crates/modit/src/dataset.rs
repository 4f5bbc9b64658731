//! Line-delimited JSON records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use modit_core::pipeline::{DatasetRecord, Extraction};

use crate::FormatError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    code_before: String,
    code_after: String,
    guidance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_p: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span: Option<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    /// Records skipped because their guidance was blank or corrupted.
    pub dropped: usize,
}

/// Blank, or carrying replacement characters or control characters.
fn corrupted(guidance: &str) -> bool {
    guidance.trim().is_empty() || guidance.chars().any(|c| c == '\u{fffd}' || (c.is_control() && !c.is_whitespace()))
}

/// Parses one record per non-empty line. Schema errors carry the 1-based
/// line number; records with unusable guidance are dropped and counted.
pub fn load_jsonl(reader: impl BufRead) -> Result<Dataset, FormatError> {
    let mut records = Vec::new();
    let mut dropped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FormatError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine = serde_json::from_str(&line).map_err(|e| FormatError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        let extraction = match (r.e_p, r.e_n, r.span) {
            (Some(e_p), Some(e_n), Some([s, e])) => Some(Extraction { e_p, e_n, span: (s, e) }),
            (None, None, None) => None,
            _ => {
                return Err(FormatError::Line {
                    line: line_no,
                    message: "e_p, e_n and span must appear together".into(),
                })
            }
        };
        if corrupted(&r.guidance) {
            dropped += 1;
            continue;
        }
        records.push(DatasetRecord {
            id: r.id,
            code_before: r.code_before,
            code_after: r.code_after,
            guidance: r.guidance,
            extraction,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} records with blank or corrupted guidance");
    }
    Ok(Dataset { records, dropped })
}

pub fn write_jsonl(mut out: impl Write, records: &[DatasetRecord]) -> Result<(), FormatError> {
    for r in records {
        let x = r.extraction.as_ref();
        let line = RecordLine {
            id: r.id.clone(),
            code_before: r.code_before.clone(),
            code_after: r.code_after.clone(),
            guidance: r.guidance.clone(),
            e_p: x.map(|x| x.e_p.clone()),
            e_n: x.map(|x| x.e_n.clone()),
            span: x.map(|x| [x.span.0, x.span.1]),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| FormatError::Schema(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
