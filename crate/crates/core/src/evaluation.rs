//! Confusion matrices and per-class classification reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DiagnosisLabel;
use crate::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0} outside 0..{NUM_CLASSES}")]
    OutOfRangeLabel(usize),
    #[error("nothing to evaluate")]
    EmptyEvaluation,
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in DiagnosisLabel::ALL {
            out.push(',');
            out.push_str(c.name());
        }
        out.push('\n');
        for (c, row) in DiagnosisLabel::ALL.iter().zip(&self.counts) {
            out.push_str(c.name());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= NUM_CLASSES {
            return Err(EvalError::OutOfRangeLabel(t));
        }
        if p >= NUM_CLASSES {
            return Err(EvalError::OutOfRangeLabel(p));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision/recall/F1 with a 0.0 convention for every zero
/// denominator. Macro averages include zero-metric classes.
pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let per_class: Vec<ClassMetrics> = (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.support(c),
            }
        })
        .collect();

    let n = NUM_CLASSES as f64;
    let macro_avg = ClassMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / n,
        support: total,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    let weighted_avg = ClassMetrics {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        support: total,
    };
    Ok(ClassificationReport {
        classes: DiagnosisLabel::ALL.iter().map(|c| c.name().to_string()).collect(),
        per_class,
        accuracy: ratio(cm.trace(), total),
        macro_avg,
        weighted_avg,
    })
}

/// Two-decimal rendering with halves rounded away from zero.
pub fn round2(v: f64) -> String {
    // nudge so decimal halves stored just below x.xx5 still round up
    let scaled = (v * 100.0 + 1e-9f64.copysign(v)).round();
    format!("{:.2}", scaled / 100.0)
}

impl ClassificationReport {
    /// Fixed-width text table in the familiar precision/recall/f1/support
    /// layout.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .chain(["weighted avg".len()])
            .max()
            .unwrap_or(12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1-score", "support"
        );
        out.push('\n');
        let row = |out: &mut String, name: &str, m: &ClassMetrics| {
            let _ = writeln!(
                out,
                "{:>width$} {:>9} {:>9} {:>9} {:>9}",
                name,
                round2(m.precision),
                round2(m.recall),
                round2(m.f1),
                m.support
            );
        };
        for (name, m) in self.classes.iter().zip(&self.per_class) {
            row(&mut out, name, m);
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            "accuracy",
            "",
            "",
            round2(self.accuracy),
            self.macro_avg.support
        );
        row(&mut out, "macro avg", &self.macro_avg);
        row(&mut out, "weighted avg", &self.weighted_avg);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Metric-by-metric difference `b - a`, per class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportDelta {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn compare(a: &ClassificationReport, b: &ClassificationReport) -> (Vec<ReportDelta>, f64) {
    let per_class = a
        .classes
        .iter()
        .zip(a.per_class.iter().zip(&b.per_class))
        .map(|(name, (x, y))| ReportDelta {
            class: name.clone(),
            precision: y.precision - x.precision,
            recall: y.recall - x.recall,
            f1: y.f1 - x.f1,
        })
        .collect();
    (per_class, b.accuracy - a.accuracy)
}

pub fn format_comparison(a: &ClassificationReport, b: &ClassificationReport) -> String {
    let (deltas, acc) = compare(a, b);
    let mut out = String::new();
    let _ = writeln!(out, "{:>14} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score");
    let signed = |v: f64| {
        let s = round2(v.abs());
        if s == "0.00" {
            format!(" {s}")
        } else if v < 0.0 {
            format!("-{s}")
        } else {
            format!("+{s}")
        }
    };
    for d in &deltas {
        let _ = writeln!(
            out,
            "{:>14} {:>10} {:>10} {:>10}",
            d.class,
            signed(d.precision),
            signed(d.recall),
            signed(d.f1)
        );
    }
    let _ = writeln!(out, "{:>14} {:>10} {:>10} {:>10}", "accuracy", "", "", signed(acc));
    out
}
