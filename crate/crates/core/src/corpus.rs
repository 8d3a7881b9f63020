//! Corpus ingestion, cleaning, class statistics and class weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::labels::{repair_bio, EntityType, Label};
use crate::text::is_punct;
use crate::{io, Error, Result};

/// One tokenized sentence, optionally with POS tags and gold labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Option<Vec<String>>,
    pub labels: Option<Vec<Label>>,
}

impl LabeledSentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, labels: Option<Vec<Label>>) -> Self {
        Self {
            id: id.into(),
            tokens,
            pos: None,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Invalid(format!("sentence {:?} has no tokens", self.id)));
        }
        if let Some(pos) = &self.pos {
            if pos.len() != self.tokens.len() {
                return Err(Error::Alignment(format!(
                    "sentence {:?}: {} POS tags for {} tokens",
                    self.id,
                    pos.len(),
                    self.tokens.len()
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.tokens.len() {
                return Err(Error::Alignment(format!(
                    "sentence {:?}: {} labels for {} tokens",
                    self.id,
                    labels.len(),
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }
}

/// On-disk corpus layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConllFormat {
    /// `token<TAB>label`, blank line between sentences.
    TwoCol,
    /// `# id <id>` comment, then `token pos _ label` rows. A `_` in the
    /// second column means no POS tag. A `#` line that reads as a full row
    /// with a valid label is a token, not a comment.
    MultiConer,
}

impl FromStr for ConllFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_col" | "two-col" | "conll" => Ok(ConllFormat::TwoCol),
            "multiconer" => Ok(ConllFormat::MultiConer),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn read_conll(path: &Path, format: ConllFormat) -> Result<Vec<LabeledSentence>> {
    parse_conll(io::open(path)?, format).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[derive(Default)]
struct Pending {
    id: Option<String>,
    tokens: Vec<String>,
    pos: Vec<Option<String>>,
    labels: Vec<Label>,
}

impl Pending {
    fn finish(&mut self, index: usize) -> Option<LabeledSentence> {
        let id = self.id.take();
        if self.tokens.is_empty() {
            return None;
        }
        let pos = std::mem::take(&mut self.pos);
        let pos = if pos.iter().all(Option::is_some) {
            Some(pos.into_iter().flatten().collect())
        } else {
            None
        };
        let mut labels = std::mem::take(&mut self.labels);
        let id = id.unwrap_or_else(|| index.to_string());
        let repaired = repair_bio(&mut labels);
        if repaired > 0 {
            log::warn!("sentence {id}: repaired {repaired} orphan I- labels");
        }
        Some(LabeledSentence {
            id,
            tokens: std::mem::take(&mut self.tokens),
            pos,
            labels: Some(labels),
        })
    }
}

/// Parses a corpus from any buffered reader. Sentences come back in input order.
pub fn parse_conll<R: BufRead>(reader: R, format: ConllFormat) -> Result<Vec<LabeledSentence>> {
    let mut sentences = Vec::new();
    let mut pending = Pending::default();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(s) = pending.finish(sentences.len()) {
                sentences.push(s);
            }
            continue;
        }
        match format {
            ConllFormat::TwoCol => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 2 {
                    return Err(Error::parse(
                        line_no,
                        format!("expected 2 tab-separated columns, found {}", cols.len()),
                    ));
                }
                push_row(&mut pending, line_no, cols[0], None, cols[1])?;
            }
            ConllFormat::MultiConer => {
                let cols: Vec<&str> = line.split_whitespace().collect();
                let is_row = cols.len() == 4 && cols[3].parse::<Label>().is_ok();
                if let Some(comment) = line.strip_prefix('#').filter(|_| !is_row) {
                    if !pending.tokens.is_empty() {
                        if let Some(s) = pending.finish(sentences.len()) {
                            sentences.push(s);
                        }
                    }
                    pending.id = Some(comment_id(comment));
                    continue;
                }
                if cols.len() != 4 {
                    return Err(Error::parse(
                        line_no,
                        format!("expected 4 columns, found {}", cols.len()),
                    ));
                }
                let pos = (cols[1] != "_").then_some(cols[1]);
                push_row(&mut pending, line_no, cols[0], pos, cols[3])?;
            }
        }
    }
    if let Some(s) = pending.finish(sentences.len()) {
        sentences.push(s);
    }
    Ok(sentences)
}

fn comment_id(comment: &str) -> String {
    let comment = comment.trim();
    let rest = comment.strip_prefix("id").map(str::trim_start).unwrap_or(comment);
    rest.split_whitespace().next().unwrap_or("").to_string()
}

fn push_row(
    pending: &mut Pending,
    line_no: usize,
    token: &str,
    pos: Option<&str>,
    label: &str,
) -> Result<()> {
    if token.is_empty() {
        return Err(Error::parse(line_no, "empty token"));
    }
    let label: Label = label.trim().parse().map_err(|e| match e {
        Error::UnknownLabel(l) => Error::UnknownLabel(format!("{l} (line {line_no})")),
        other => other,
    })?;
    pending.tokens.push(token.to_string());
    pending.pos.push(pos.map(str::to_string));
    pending.labels.push(label);
    Ok(())
}

pub fn write_conll<W: Write + ?Sized>(
    out: &mut W,
    sentences: &[LabeledSentence],
    format: ConllFormat,
) -> Result<()> {
    for (si, s) in sentences.iter().enumerate() {
        s.validate()?;
        let labels = s
            .labels
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("sentence {:?} has no labels to write", s.id)))?;
        if si > 0 {
            writeln!(out).map_err(io::write_err)?;
        }
        if format == ConllFormat::MultiConer {
            writeln!(out, "# id {}", s.id).map_err(io::write_err)?;
        }
        for (i, (token, label)) in s.tokens.iter().zip(labels).enumerate() {
            match format {
                ConllFormat::TwoCol => writeln!(out, "{token}\t{label}"),
                ConllFormat::MultiConer => {
                    let pos = s.pos.as_ref().map_or("_", |p| p[i].as_str());
                    writeln!(out, "{token} {pos} _ {label}")
                }
            }
            .map_err(io::write_err)?;
        }
    }
    Ok(())
}

pub fn write_conll_file(path: &Path, sentences: &[LabeledSentence], format: ConllFormat) -> Result<()> {
    io::write_atomic(path, |out| write_conll(out, sentences, format))
}

fn clean_token(token: &str) -> &str {
    // Tokens made only of punctuation stand on their own and are kept.
    if token.chars().all(is_punct) {
        return token;
    }
    token.trim_start_matches(is_punct)
}

/// Strips punctuation glued to the front of tokens. Tokens that are pure
/// punctuation, and trailing periods (abbreviations), are left alone.
pub fn clean_corpus(sentences: &[LabeledSentence]) -> Vec<LabeledSentence> {
    sentences
        .iter()
        .filter_map(|s| {
            let mut tokens = Vec::with_capacity(s.tokens.len());
            let mut pos = s.pos.as_ref().map(|_| Vec::with_capacity(s.tokens.len()));
            let mut labels = s.labels.as_ref().map(|_| Vec::with_capacity(s.tokens.len()));
            for (i, token) in s.tokens.iter().enumerate() {
                let cleaned = clean_token(token);
                if cleaned.is_empty() {
                    continue;
                }
                tokens.push(cleaned.to_string());
                if let (Some(out), Some(src)) = (pos.as_mut(), s.pos.as_ref()) {
                    out.push(src[i].clone());
                }
                if let (Some(out), Some(src)) = (labels.as_mut(), s.labels.as_ref()) {
                    out.push(src[i]);
                }
            }
            if tokens.is_empty() {
                return None;
            }
            if let Some(labels) = labels.as_mut() {
                repair_bio(labels);
            }
            Some(LabeledSentence {
                id: s.id.clone(),
                tokens,
                pos,
                labels,
            })
        })
        .collect()
}

/// Entity mention and per-label token counts for a labeled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub entity_counts: BTreeMap<EntityType, u64>,
    pub token_label_counts: BTreeMap<Label, u64>,
    pub total_tokens: u64,
    pub o_fraction: f64,
}

impl CorpusStats {
    pub fn total_mentions(&self) -> u64 {
        self.entity_counts.values().sum()
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total_tokens={}", self.total_tokens);
        let _ = writeln!(out, "total_mentions={}", self.total_mentions());
        let _ = writeln!(out, "o_fraction={}", self.o_fraction);
        for (t, c) in &self.entity_counts {
            let _ = writeln!(out, "entity.{t}={c}");
        }
        for (l, c) in &self.token_label_counts {
            let _ = writeln!(out, "label.{l}={c}");
        }
        out
    }

    /// `label<TAB>count` lines, the input format of the weights command.
    pub fn label_counts_tsv(&self) -> String {
        self.token_label_counts
            .iter()
            .map(|(l, c)| format!("{l}\t{c}\n"))
            .collect()
    }
}

pub fn corpus_stats(sentences: &[LabeledSentence]) -> Result<CorpusStats> {
    let mut entity_counts: BTreeMap<EntityType, u64> =
        EntityType::ALL.iter().map(|&t| (t, 0)).collect();
    let mut token_label_counts: BTreeMap<Label, u64> = (0..13)
        .filter_map(Label::from_index)
        .map(|l| (l, 0))
        .collect();
    let mut total_tokens = 0u64;
    for s in sentences {
        let labels = s
            .labels
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("sentence {:?} is unlabeled", s.id)))?;
        for &label in labels {
            *token_label_counts.entry(label).or_default() += 1;
            if let Label::B(t) = label {
                *entity_counts.entry(t).or_default() += 1;
            }
            total_tokens += 1;
        }
    }
    let o_fraction = if total_tokens == 0 {
        0.0
    } else {
        token_label_counts[&Label::O] as f64 / total_tokens as f64
    };
    Ok(CorpusStats {
        entity_counts,
        token_label_counts,
        total_tokens,
        o_fraction,
    })
}

/// Weight for one class, before and after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeight {
    pub raw: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights<K: Ord> {
    pub n: usize,
    pub total: u64,
    pub floor: f64,
    pub weights: BTreeMap<K, ClassWeight>,
}

impl<K: Ord + std::fmt::Display> ClassWeights<K> {
    pub fn to_key_values(&self) -> String {
        let mut out = format!("n={}\ntotal={}\nfloor={}\n", self.n, self.total, self.floor);
        for (k, w) in &self.weights {
            let _ = writeln!(out, "weight.{k}={}", w.weight);
            let _ = writeln!(out, "raw.{k}={}", w.raw);
        }
        out
    }
}

pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.01;

/// Loss weights `(1 - (n + 2) * count / total) * 10`, clamped below at `floor`,
/// with `n` taken as the number of classes in `counts`.
pub fn class_weights<K: Ord + Clone>(counts: &BTreeMap<K, u64>, floor: f64) -> Result<ClassWeights<K>> {
    class_weights_with_n(counts, counts.len(), floor)
}

/// As [`class_weights`] with an explicit class count `n`.
pub fn class_weights_with_n<K: Ord + Clone>(
    counts: &BTreeMap<K, u64>,
    n: usize,
    floor: f64,
) -> Result<ClassWeights<K>> {
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::Invalid(format!("weight floor must be a non-negative real, got {floor}")));
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::Invalid("class weights need a non-zero token total".into()));
    }
    let weights = counts
        .iter()
        .map(|(k, &count)| {
            let raw = (1.0 - (n as f64 + 2.0) * count as f64 / total as f64) * 10.0;
            (k.clone(), ClassWeight { raw, weight: raw.max(floor) })
        })
        .collect();
    Ok(ClassWeights { n, total, floor, weights })
}

/// Reads `label<TAB>count` lines; `#` starts a comment.
pub fn parse_counts(text: &str) -> Result<BTreeMap<String, u64>> {
    let mut counts = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(['\t', ' ', '=']).filter(|c| !c.is_empty());
        let (Some(label), Some(count), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(n + 1, "expected `label<TAB>count`"));
        };
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("bad count {count:?}")))?;
        if counts.insert(label.to_string(), count).is_some() {
            return Err(Error::parse(n + 1, format!("duplicate label {label:?}")));
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<Label> {
        names.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn reads_minimal_two_col() {
        let s = parse_conll("ঢাকা\tB-LOC\n\n".as_bytes(), ConllFormat::TwoCol).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens, ["ঢাকা"]);
        assert_eq!(s[0].labels.as_deref(), Some(&labels(&["B-LOC"])[..]));
    }

    #[test]
    fn reads_multiconer_rows() {
        let text = "# id 5f0c\tdomain=bn\nটোকেন _ _ O\nঢাকা _ _ B-LOC\n\n# id 77\nক NN _ B-PER\n";
        let s = parse_conll(text.as_bytes(), ConllFormat::MultiConer).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].id, "5f0c");
        assert_eq!(s[0].labels.as_deref(), Some(&labels(&["O", "B-LOC"])[..]));
        assert_eq!(s[0].pos, None);
        assert_eq!(s[1].id, "77");
        assert_eq!(s[1].pos.as_deref(), Some(&["NN".to_string()][..]));
    }

    #[test]
    fn two_col_rejects_wrong_column_count() {
        let err = parse_conll("x\tO\na b c\n".as_bytes(), ConllFormat::TwoCol).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_conll("x\tO\textra\n".as_bytes(), ConllFormat::TwoCol).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn unknown_label_is_label_error() {
        let err = parse_conll("x\tB-MISC\n".as_bytes(), ConllFormat::TwoCol).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }

    #[test]
    fn reader_repairs_orphan_inside() {
        let s = parse_conll("a\tO\nb\tI-PER\n".as_bytes(), ConllFormat::TwoCol).unwrap();
        assert_eq!(s[0].labels.as_deref(), Some(&labels(&["O", "B-PER"])[..]));
    }

    fn sentence(tokens: &[&str], labs: &[&str]) -> LabeledSentence {
        LabeledSentence::new(
            "s",
            tokens.iter().map(|t| t.to_string()).collect(),
            Some(labels(labs)),
        )
    }

    #[test]
    fn clean_strips_prefix_punctuation() {
        let cleaned = clean_corpus(&[sentence(&["«ঢাকা", ",", "ডি.", "\"(সে"], &["B-LOC", "O", "B-PER", "O"])]);
        assert_eq!(cleaned[0].tokens, ["ঢাকা", ",", "ডি.", "সে"]);
        assert_eq!(cleaned[0].labels, Some(labels(&["B-LOC", "O", "B-PER", "O"])));
    }

    #[test]
    fn clean_keeps_pure_punctuation_tokens() {
        let cleaned = clean_corpus(&[sentence(&["...", "।", "?!"], &["O", "O", "O"])]);
        assert_eq!(cleaned[0].tokens, ["...", "।", "?!"]);
    }

    #[test]
    fn stats_count_mentions_and_labels() {
        let stats = corpus_stats(&[sentence(&["a", "b", "c"], &["B-PER", "I-PER", "O"])]).unwrap();
        assert_eq!(stats.entity_counts[&EntityType::Per], 1);
        assert_eq!(stats.total_mentions(), 1);
        assert_eq!(stats.token_label_counts[&Label::B(EntityType::Per)], 1);
        assert_eq!(stats.token_label_counts[&Label::I(EntityType::Per)], 1);
        assert_eq!(stats.token_label_counts[&Label::O], 1);
        assert_eq!(stats.total_tokens, 3);
        assert_eq!(stats.token_label_counts.values().sum::<u64>(), stats.total_tokens);
    }

    #[test]
    fn stats_all_outside() {
        let stats = corpus_stats(&[sentence(&["a", "b", "c", "d"], &["O"; 4])]).unwrap();
        assert_eq!(stats.o_fraction, 1.0);
    }

    #[test]
    fn stats_reject_unlabeled() {
        let s = LabeledSentence::new("u", vec!["a".into()], None);
        assert!(matches!(corpus_stats(&[s]), Err(Error::Invalid(_))));
    }

    #[test]
    fn weight_examples() {
        let w = class_weights_with_n(&BTreeMap::from([("T", 0u64), ("rest", 5)]), 6, 0.01).unwrap();
        assert_eq!(w.weights["T"].raw, 10.0);
        assert_eq!(w.weights["T"].weight, 10.0);

        let w = class_weights_with_n(&BTreeMap::from([("T", 1u64), ("rest", 7)]), 6, 0.01).unwrap();
        assert_eq!(w.weights["T"].raw, 0.0);
        assert_eq!(w.weights["T"].weight, 0.01);

        let w = class_weights_with_n(&BTreeMap::from([("O", 835u64), ("rest", 165)]), 13, 0.01).unwrap();
        assert!((w.weights["O"].raw - -115.25).abs() < 1e-9);
        assert_eq!(w.weights["O"].weight, 0.01);
    }

    #[test]
    fn weights_need_tokens() {
        let empty: BTreeMap<&str, u64> = BTreeMap::from([("a", 0)]);
        assert!(class_weights(&empty, 0.01).is_err());
        assert!(class_weights(&BTreeMap::from([("a", 1u64)]), -1.0).is_err());
    }

    #[test]
    fn parses_count_table() {
        let counts = parse_counts("# header\nO\t835\nB-PER\t10\n").unwrap();
        assert_eq!(counts["O"], 835);
        assert_eq!(counts.len(), 2);
        assert!(parse_counts("O\tx\n").is_err());
        assert!(parse_counts("O\t1\nO\t2\n").is_err());
    }
}
