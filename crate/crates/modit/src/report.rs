//! Accuracy table, raw per-example verdicts and the timing sidecar.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use modit_core::model::Variant;
use modit_core::pipeline::{EvalReport, EvalRow, Phi, SplitKind, Verdict, VerdictRow};

use crate::FormatError;

fn mark(on: bool) -> &'static str {
    if on {
        "✓"
    } else {
        "✗"
    }
}

/// Tab-separated table: one line per (Φ, variant) with the modality flags
/// as ✓/✗ columns and examples, correct and top-1 % for each split.
pub fn render_report(report: &EvalReport) -> String {
    let splits: Vec<SplitKind> = SplitKind::ALL
        .into_iter()
        .filter(|s| report.rows.iter().any(|r| r.split == *s))
        .collect();
    let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
    let mut out = format!("# seeds\t{}\n", seeds.join(","));
    out.push_str("phi\tvariant\te_p\tG\tC\tannotated\tfull_code");
    for s in &splits {
        let n = s.name();
        out.push_str(&format!("\t{n}_examples\t{n}_correct\t{n}_top1"));
    }
    out.push('\n');
    let mut cells: Vec<(Phi, Variant)> = Vec::new();
    for r in &report.rows {
        if !cells.contains(&(r.phi, r.variant)) {
            cells.push((r.phi, r.variant));
        }
    }
    for (phi, variant) in cells {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            phi.label(),
            variant.name(),
            mark(phi.edit()),
            mark(phi.guidance()),
            mark(phi.context()),
            mark(phi.annotated()),
            mark(phi.full_code())
        ));
        for &s in &splits {
            match report.row(phi, variant, s) {
                Some(r) => out.push_str(&format!("\t{}\t{}\t{:.2}", r.examples, r.correct, r.accuracy())),
                None => out.push_str("\t-\t-\t-"),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a table written by [`render_report`].
pub fn parse_report(text: &str) -> Result<EvalReport, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, message: &str| FormatError::Line {
        line,
        message: message.to_string(),
    };
    let (n, first) = lines.next().ok_or_else(|| FormatError::Schema("empty report".into()))?;
    let seeds = first
        .strip_prefix("# seeds\t")
        .ok_or_else(|| bad(n, "expected the seeds line"))?;
    let seeds = if seeds.is_empty() {
        Vec::new()
    } else {
        seeds
            .split(',')
            .map(|s| s.parse().map_err(|_| bad(n, "seed is not an integer")))
            .collect::<Result<_, _>>()?
    };
    let (n, header) = lines.next().ok_or_else(|| FormatError::Schema("report has no header".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 7 || (cols.len() - 7) % 3 != 0 {
        return Err(bad(n, "malformed header"));
    }
    let splits = cols[7..]
        .chunks(3)
        .map(|c| {
            c[0].strip_suffix("_examples")
                .and_then(SplitKind::from_name)
                .ok_or_else(|| bad(n, "unknown split column"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != cols.len() {
            return Err(bad(n, "wrong number of columns"));
        }
        let phi = Phi::from_id(f[0]).ok_or_else(|| bad(n, "unknown phi"))?;
        let variant = Variant::from_name(f[1]).ok_or_else(|| bad(n, "unknown variant"))?;
        for (k, &split) in splits.iter().enumerate() {
            let c = &f[7 + 3 * k..10 + 3 * k];
            if c[0] == "-" {
                continue;
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "count is not an integer"));
            rows.push(EvalRow {
                phi,
                variant,
                split,
                examples: num(c[0])?,
                correct: num(c[1])?,
            });
        }
    }
    // Row order in the report is by cell, then split.
    Ok(EvalReport { seeds, rows })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictLine {
    phi: String,
    variant: String,
    split: String,
    id: String,
    correct: bool,
    prediction: String,
    expected: String,
}

pub fn write_verdicts(mut out: impl Write, verdicts: &[VerdictRow]) -> Result<(), FormatError> {
    for v in verdicts {
        let line = VerdictLine {
            phi: v.phi.id().into(),
            variant: v.variant.name().into(),
            split: v.split.name().into(),
            id: v.verdict.id.clone(),
            correct: v.verdict.correct,
            prediction: v.verdict.prediction.clone(),
            expected: v.verdict.expected.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| FormatError::Schema(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_verdicts(input: impl BufRead) -> Result<Vec<VerdictRow>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let bad = |message: String| FormatError::Line { line: i + 1, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: VerdictLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(VerdictRow {
            phi: Phi::from_id(&v.phi).ok_or_else(|| bad(format!("unknown phi {:?}", v.phi)))?,
            variant: Variant::from_name(&v.variant).ok_or_else(|| bad(format!("unknown variant {:?}", v.variant)))?,
            split: SplitKind::from_name(&v.split).ok_or_else(|| bad(format!("unknown split {:?}", v.split)))?,
            verdict: Verdict {
                id: v.id,
                prediction: v.prediction,
                expected: v.expected,
                correct: v.correct,
            },
        });
    }
    Ok(out)
}

/// Wall-clock seconds per cell, kept apart from the deterministic report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub cells: Vec<(String, String, f64)>,
    pub total_seconds: f64,
}
