//! Report assembly: JSON and aligned text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ErrorBreakdown, PrfReport, StageRecall};

/// One named row of P/R/F1 counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    #[serde(flatten)]
    pub report: PrfReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sections: Vec<Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorBreakdown>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageRecall>,
    /// Duplicate predictions ignored by mention-level scoring.
    pub duplicates: usize,
}

impl EvalReport {
    pub fn push(&mut self, name: impl Into<String>, report: PrfReport) {
        self.sections.push(Section {
            name: name.into(),
            report,
        });
    }

    pub fn section(&self, name: &str) -> Option<&PrfReport> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self
            .sections
            .iter()
            .map(|s| s.name.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}",
            "section", "precision", "recall", "f1", "tp", "fp", "fn"
        );
        for s in &self.sections {
            let r = &s.report;
            let cell = |v: f64, undefined: bool| {
                if undefined {
                    "N/A".to_string()
                } else {
                    format!("{v:.4}")
                }
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}",
                s.name,
                cell(r.precision, r.precision_undefined),
                cell(r.recall, r.recall_undefined),
                cell(r.f1, r.precision_undefined && r.recall_undefined),
                r.tp,
                r.fp,
                r.fn_
            );
        }
        if self.duplicates > 0 {
            let _ = writeln!(out, "duplicate predictions ignored: {}", self.duplicates);
        }
        if let Some(e) = &self.errors {
            let _ = writeln!(out, "\nfalse positives: {}", e.false_positives);
            for (label, v) in [
                ("correct span, bad entity", e.correct_span_bad_entity),
                ("  and correct type", e.correct_span_and_type),
                (
                    "correct entity, overlapping span",
                    e.correct_entity_overlapping_span,
                ),
                ("  containing true span", e.correct_entity_containing_span),
            ] {
                let _ = writeln!(out, "{label:<34}{:>7.1}%", 100.0 * v);
            }
        }
        if !self.stages.is_empty() {
            let _ = writeln!(
                out,
                "\n{:<20}  {:>8}  {:>8}  {:>8}",
                "stage", "gold in", "gold out", "recall"
            );
            for s in &self.stages {
                let recall = s
                    .recall
                    .map_or_else(|| "N/A".to_string(), |r| format!("{r:.4}"));
                let _ = writeln!(
                    out,
                    "{:<20}  {:>8}  {:>8}  {:>8}",
                    s.stage, s.gold_in, s.gold_out, recall
                );
            }
        }
        out
    }
}

/// `k,recall` lines with a header.
pub fn recall_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("k,recall\n");
    for (k, r) in rows {
        let _ = writeln!(out, "{k},{r}");
    }
    out
}
