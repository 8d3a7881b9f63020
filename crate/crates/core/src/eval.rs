//! Precision, recall and F1 at token and entity level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::corpus::LabeledSentence;
use crate::labels::{repair_bio, EntityType, Label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    Token,
    #[default]
    Entity,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Token => "token",
            EvalMode::Entity => "entity",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(EvalMode::Token),
            "entity" => Ok(EvalMode::Entity),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// A typed span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entity {
    pub ty: EntityType,
    pub start: usize,
    pub end: usize,
}

/// Maximal spans of a BIO sequence. Orphan `I-x` labels are treated as `B-x`.
pub fn extract_entities(labels: &[Label]) -> BTreeSet<Entity> {
    let mut labels = labels.to_vec();
    repair_bio(&mut labels);
    let mut out = BTreeSet::new();
    let mut open: Option<(EntityType, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        match *label {
            Label::I(t) if open.is_some_and(|(o, _)| o == t) => {}
            other => {
                if let Some((ty, start)) = open.take() {
                    out.insert(Entity { ty, start, end: i });
                }
                if let Label::B(t) | Label::I(t) = other {
                    open = Some((t, i));
                }
            }
        }
    }
    if let Some((ty, start)) = open {
        out.insert(Entity {
            ty,
            start,
            end: labels.len(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences.
    pub support: u64,
    pub predicted: u64,
    pub true_positives: u64,
}

impl ClassMetrics {
    fn from_counts(tp: u64, predicted: u64, gold: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            support: gold,
            predicted,
            true_positives: tp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    /// Classes with any gold or predicted occurrence.
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
}

#[derive(Default)]
struct Counts {
    tp: u64,
    predicted: u64,
    gold: u64,
}

/// Scores `pred` against `gold`. Both must hold the same sentences with the
/// same token counts, and both must be labeled.
pub fn evaluate(gold: &[LabeledSentence], pred: &[LabeledSentence], mode: EvalMode) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for (si, (g, p)) in gold.iter().zip(pred).enumerate() {
        let labels = |s: &LabeledSentence, which: &str| {
            s.labels
                .clone()
                .ok_or_else(|| Error::Invalid(format!("{which} sentence {si} is unlabeled")))
        };
        let gl = labels(g, "gold")?;
        let pl = labels(p, "predicted")?;
        if gl.len() != pl.len() {
            return Err(Error::Alignment(format!(
                "sentence {si}: {} gold labels but {} predicted",
                gl.len(),
                pl.len()
            )));
        }
        match mode {
            EvalMode::Token => {
                for (a, b) in gl.iter().zip(&pl) {
                    counts.entry(a.to_string()).or_default().gold += 1;
                    counts.entry(b.to_string()).or_default().predicted += 1;
                    if a == b {
                        counts.entry(a.to_string()).or_default().tp += 1;
                    }
                }
            }
            EvalMode::Entity => {
                let ge = extract_entities(&gl);
                let pe = extract_entities(&pl);
                for e in &ge {
                    counts.entry(e.ty.to_string()).or_default().gold += 1;
                }
                for e in &pe {
                    let c = counts.entry(e.ty.to_string()).or_default();
                    c.predicted += 1;
                    if ge.contains(e) {
                        c.tp += 1;
                    }
                }
            }
        }
    }
    Ok(report(mode, &counts))
}

fn report(mode: EvalMode, counts: &BTreeMap<String, Counts>) -> EvalReport {
    let per_class: BTreeMap<String, ClassMetrics> = counts
        .iter()
        .filter(|(_, c)| c.gold + c.predicted > 0)
        .map(|(k, c)| (k.clone(), ClassMetrics::from_counts(c.tp, c.predicted, c.gold)))
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|m| m.f1).sum::<f64>() / per_class.len() as f64
    };
    let (tp, predicted, gold) = counts
        .values()
        .fold((0, 0, 0), |(t, p, g), c| (t + c.tp, p + c.predicted, g + c.gold));
    let micro = ClassMetrics::from_counts(tp, predicted, gold);
    EvalReport {
        mode,
        per_class,
        macro_f1,
        micro_f1: micro.f1,
        micro_precision: micro.precision,
        micro_recall: micro.recall,
    }
}

impl EvalReport {
    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let width = self.per_class.keys().map(String::len).max().unwrap_or(5).max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>9} {:>9} {:>9}",
            "class", "precision", "recall", "f1", "support"
        );
        for (class, m) in &self.per_class {
            let _ = writeln!(
                out,
                "{class:<width$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$} {:>9} {:>9} {:>9.4}", "macro avg", "", "", self.macro_f1);
        let _ = writeln!(
            out,
            "{:<width$} {:>9.4} {:>9.4} {:>9.4}",
            "micro avg", self.micro_precision, self.micro_recall, self.micro_f1
        );
        out
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "mode={}\nmacro_f1={}\nmicro_f1={}\nmicro_precision={}\nmicro_recall={}\n",
            self.mode, self.macro_f1, self.micro_f1, self.micro_precision, self.micro_recall
        );
        for (class, m) in &self.per_class {
            let _ = writeln!(out, "{class}.precision={}", m.precision);
            let _ = writeln!(out, "{class}.recall={}", m.recall);
            let _ = writeln!(out, "{class}.f1={}", m.f1);
            let _ = writeln!(out, "{class}.support={}", m.support);
        }
        out
    }
}
