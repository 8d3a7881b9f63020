//! Sparse per-token feature extraction under the nine cumulative presets.
//!
//! | preset | adds                                         |
//! |--------|----------------------------------------------|
//! | A      | suffix, prefix, index, length, neighbors, BOS/EOS |
//! | B      | isDigit, isPunctuation, frequency            |
//! | C      | POS                                          |
//! | D      | gazetteer flags                              |
//! | E      | isBangla, isStopword (on top of D)           |
//! | F      | k-means IDs of the last encoder layer (on top of D) |
//! | G      | k-means IDs of the layer below it            |
//! | H      | predicted encoder tag (on top of F)          |
//! | I      | quantized raw embedding (on top of F)        |

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::corpus::LabeledSentence;
use crate::gazetteer::{GazetteerFeatures, GazetteerTrie, MatchMode};
use crate::labels::{EntityType, Label};
use crate::quantize::ClusterModel;
use crate::sidecar::{quantize_embedding, Sidecar, SidecarKind};
use crate::text::{is_digit, is_punct_token};
use crate::{io, Error, Result};

/// Feature families toggled by a [`Preset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Suffix,
    Prefix,
    Index,
    Length,
    Neighbors,
    BosEos,
    IsDigit,
    IsPunctuation,
    Frequency,
    Pos,
    Gazetteer,
    IsBangla,
    IsStopword,
    KMeans24,
    KMeans23,
    SoftmaxTag,
    RawEmbedding,
}

impl FeatureGroup {
    fn bit(self) -> u32 {
        1 << self as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::A,
        Preset::B,
        Preset::C,
        Preset::D,
        Preset::E,
        Preset::F,
        Preset::G,
        Preset::H,
        Preset::I,
    ];

    pub fn groups(self) -> &'static [FeatureGroup] {
        use FeatureGroup::*;
        const A: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos];
        const B: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency];
        const C: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos];
        const D: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer];
        const E: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer, IsBangla, IsStopword];
        const F: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer, KMeans24];
        const G: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer, KMeans24, KMeans23];
        const H: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer, KMeans24, SoftmaxTag];
        const I: &[FeatureGroup] = &[Suffix, Prefix, Index, Length, Neighbors, BosEos, IsDigit, IsPunctuation, Frequency, Pos, Gazetteer, KMeans24, RawEmbedding];
        match self {
            Preset::A => A,
            Preset::B => B,
            Preset::C => C,
            Preset::D => D,
            Preset::E => E,
            Preset::F => F,
            Preset::G => G,
            Preset::H => H,
            Preset::I => I,
        }
    }

    pub fn enables(self, group: FeatureGroup) -> bool {
        self.mask() & group.bit() != 0
    }

    fn mask(self) -> u32 {
        self.groups().iter().fold(0, |m, g| m | g.bit())
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}, expected one of A..I")))
    }
}

/// Sparse features of one token, sorted by name. Binary features carry 1.0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector(Vec<(String, f64)>);

impl FeatureVector {
    pub fn from_pairs(mut pairs: Vec<(String, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        FeatureVector(pairs)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Stopword membership.
#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| crate::text::nfc(l).into_owned())
                .collect(),
        )
    }

    /// Bundled Bangla list.
    pub fn bangla() -> &'static Stopwords {
        static LIST: OnceLock<Stopwords> = OnceLock::new();
        LIST.get_or_init(|| Stopwords::parse(include_str!("../resources/stopwords_bn.txt")))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(crate::text::nfc(word).as_ref())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Token counts over the corpus split being featurized.
#[derive(Debug, Clone, Default)]
pub struct FreqTable(HashMap<String, usize>);

impl FreqTable {
    pub fn from_sentences(sentences: &[LabeledSentence]) -> Self {
        let mut counts = HashMap::new();
        for token in sentences.iter().flat_map(|s| &s.tokens) {
            *counts.entry(token.clone()).or_insert(0) += 1;
        }
        FreqTable(counts)
    }

    pub fn count(&self, token: &str) -> usize {
        self.0.get(token).copied().unwrap_or(0)
    }

    /// Bin label: `1`, `2-5`, `6-20` or `>20`. Unseen tokens fall into `1`.
    pub fn bin(&self, token: &str) -> &'static str {
        match self.count(token) {
            0 | 1 => "1",
            2..=5 => "2-5",
            6..=20 => "6-20",
            _ => ">20",
        }
    }
}

/// True iff every scalar lies in U+0980..=U+09FF (decimal 2432..=2559) or is
/// an ASCII space. Vacuously true for the empty string.
pub fn is_bangla(token: &str) -> bool {
    token
        .chars()
        .all(|c| (2432..=2559).contains(&(c as u32)) || c == ' ')
}

fn first_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn last_chars(s: &str, n: usize) -> &str {
    let count = s.chars().count();
    if count <= n {
        return s;
    }
    let (i, _) = s.char_indices().nth(count - n).expect("index within bounds");
    &s[i..]
}

fn offset_name(base: &str, offset: isize) -> String {
    if offset == 0 {
        base.to_string()
    } else {
        format!("{base}[{offset:+}]")
    }
}

const WINDOW: isize = 2;

fn window(i: usize, len: usize) -> impl Iterator<Item = (isize, usize)> {
    (-WINDOW..=WINDOW).filter_map(move |o| {
        let j = i as isize + o;
        (0..len as isize).contains(&j).then_some((o, j as usize))
    })
}

/// Token-shape, context and lexicon features of `tokens[i]` for the groups
/// `preset` enables.
pub fn basic_features<S: AsRef<str>>(
    tokens: &[S],
    i: usize,
    freq: &FreqTable,
    stopwords: &Stopwords,
    preset: Preset,
) -> Vec<(String, f64)> {
    let word = tokens[i].as_ref();
    let on = |g| preset.enables(g);
    let mut out = Vec::new();
    let mut flag = |name: String| out.push((name, 1.0));

    if on(FeatureGroup::Neighbors) {
        for (o, j) in window(i, tokens.len()) {
            flag(format!("{}={}", offset_name("w", o), tokens[j].as_ref()));
        }
    }
    if on(FeatureGroup::Suffix) {
        flag(format!("suf3={}", last_chars(word, 3)));
    }
    if on(FeatureGroup::Prefix) {
        flag(format!("pre3={}", first_chars(word, 3)));
    }
    if on(FeatureGroup::Length) {
        flag(format!("len={}", word.chars().count()));
    }
    if on(FeatureGroup::Index) {
        flag(format!("idx={i}"));
    }
    if on(FeatureGroup::BosEos) {
        if i == 0 {
            flag("BOS".into());
        }
        if i + 1 == tokens.len() {
            flag("EOS".into());
        }
    }
    if on(FeatureGroup::IsDigit) && !word.is_empty() && word.chars().all(is_digit) {
        flag("is_digit".into());
    }
    if on(FeatureGroup::IsPunctuation) && is_punct_token(word) {
        flag("is_punct".into());
    }
    if on(FeatureGroup::Frequency) {
        flag(format!("freq={}", freq.bin(word)));
    }
    if on(FeatureGroup::IsBangla) && is_bangla(word) {
        flag("is_bangla".into());
    }
    if on(FeatureGroup::IsStopword) && stopwords.contains(word) {
        flag("is_stopword".into());
    }
    out
}

/// POS tag at `i` and its ±2 neighbours.
pub fn pos_features<S: AsRef<str>>(pos: &[S], i: usize) -> Vec<(String, f64)> {
    window(i, pos.len())
        .map(|(o, j)| (format!("{}={}", offset_name("pos", o), pos[j].as_ref()), 1.0))
        .collect()
}

/// Gazetteer flags of `i` and its ±2 neighbours, only those set.
pub fn gazetteer_window_features(flags: &[GazetteerFeatures], i: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (o, j) in window(i, flags.len()) {
        for t in flags[j].0.iter() {
            out.push((offset_name(GazetteerFeatures::flag_name(t), o), 1.0));
        }
    }
    out
}

/// Embeddings plus the cluster model trained on the same layer.
#[derive(Debug, Clone, Copy)]
pub struct ClusterSource<'a> {
    pub model: &'a ClusterModel,
    pub embeddings: &'a Sidecar,
}

/// External resources a preset may demand. Everything is borrowed read-only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Resources<'a> {
    pub gazetteer: Option<&'a GazetteerTrie>,
    pub match_mode: MatchMode,
    /// Falls back to the bundled Bangla list.
    pub stopwords: Option<&'a Stopwords>,
    pub kmeans24: Option<ClusterSource<'a>>,
    pub kmeans23: Option<ClusterSource<'a>>,
    pub predicted_tags: Option<&'a Sidecar>,
    pub raw_embeddings: Option<&'a Sidecar>,
}

/// Names the first resource `preset` needs that `resources` lacks.
pub fn missing_resource(preset: Preset, has: ResourcePresence) -> Option<&'static str> {
    missing_resources(preset, has).into_iter().next()
}

/// Every resource `preset` needs that `has` lacks, in a fixed order.
pub fn missing_resources(preset: Preset, has: ResourcePresence) -> Vec<&'static str> {
    let needs = |g| preset.enables(g);
    let checks = [
        (needs(FeatureGroup::Gazetteer) && !has.gazetteer, "gazetteer"),
        (needs(FeatureGroup::KMeans24) && !has.kmeans24_model, "kmeans"),
        (
            (needs(FeatureGroup::KMeans24) && !has.kmeans24_embeddings)
                || (needs(FeatureGroup::RawEmbedding) && !has.raw_embeddings),
            "sidecar",
        ),
        (needs(FeatureGroup::KMeans23) && !has.kmeans23_model, "kmeans23"),
        (needs(FeatureGroup::KMeans23) && !has.kmeans23_embeddings, "sidecar23"),
        (needs(FeatureGroup::SoftmaxTag) && !has.predicted_tags, "tags"),
    ];
    checks.into_iter().filter(|&(missing, _)| missing).map(|(_, name)| name).collect()
}

/// Which resources are on hand, for checks made before anything is loaded.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResourcePresence {
    pub gazetteer: bool,
    pub kmeans24_model: bool,
    pub kmeans24_embeddings: bool,
    pub kmeans23_model: bool,
    pub kmeans23_embeddings: bool,
    pub predicted_tags: bool,
    pub raw_embeddings: bool,
}

impl Resources<'_> {
    fn presence(&self) -> ResourcePresence {
        ResourcePresence {
            gazetteer: self.gazetteer.is_some(),
            kmeans24_model: self.kmeans24.is_some(),
            kmeans24_embeddings: self.kmeans24.is_some(),
            kmeans23_model: self.kmeans23.is_some(),
            kmeans23_embeddings: self.kmeans23.is_some(),
            predicted_tags: self.predicted_tags.is_some(),
            raw_embeddings: self.raw_embeddings.is_some(),
        }
    }

    /// Fails with a configuration error when `preset` needs something absent
    /// or a resource has the wrong shape.
    pub fn check(&self, preset: Preset) -> Result<()> {
        if let Some(missing) = missing_resource(preset, self.presence()) {
            return Err(Error::Config(format!("preset {preset} requires resource `{missing}`")));
        }
        for (slot, source) in [("kmeans", self.kmeans24), ("kmeans23", self.kmeans23)] {
            let Some(src) = source else { continue };
            if src.embeddings.kind() != SidecarKind::Embedding {
                return Err(Error::Config(format!("{slot}: sidecar holds tags, not embeddings")));
            }
            if src.embeddings.layer() != src.model.layer {
                return Err(Error::Config(format!(
                    "{slot}: cluster model is for layer {} but sidecar is layer {}",
                    src.model.layer,
                    src.embeddings.layer()
                )));
            }
            if src.embeddings.dim() != src.model.dim() {
                return Err(Error::Config(format!(
                    "{slot}: cluster model has dimension {} but sidecar has {}",
                    src.model.dim(),
                    src.embeddings.dim()
                )));
            }
        }
        if let Some(tags) = self.predicted_tags {
            if tags.kind() != SidecarKind::Tag {
                return Err(Error::Config("tags: sidecar holds embeddings, not tags".into()));
            }
        }
        if let Some(raw) = self.raw_embeddings {
            if raw.kind() != SidecarKind::Embedding {
                return Err(Error::Config("raw embedding sidecar holds tags".into()));
            }
        }
        Ok(())
    }
}

fn missing_key(what: &str, s: usize, t: usize) -> Error {
    Error::Alignment(format!("{what} sidecar has no record for sentence {s}, token {t}"))
}

fn sentence_features(
    sentence_index: usize,
    sentence: &LabeledSentence,
    preset: Preset,
    resources: &Resources<'_>,
    freq: &FreqTable,
) -> Result<Vec<FeatureVector>> {
    let tokens = &sentence.tokens;
    let stopwords = resources.stopwords.unwrap_or_else(|| Stopwords::bangla());
    let pos = if preset.enables(FeatureGroup::Pos) {
        let pos = sentence.pos.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "preset {preset} needs POS tags but sentence {:?} has none",
                sentence.id
            ))
        })?;
        if pos.len() != tokens.len() {
            return Err(Error::Alignment(format!("sentence {:?}: POS column length differs", sentence.id)));
        }
        Some(pos)
    } else {
        None
    };
    let gaz = match (preset.enables(FeatureGroup::Gazetteer), resources.gazetteer) {
        (true, Some(trie)) => Some(trie.sentence_flags(tokens, resources.match_mode)),
        _ => None,
    };

    let mut out = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        let mut feats = basic_features(tokens, i, freq, stopwords, preset);
        if let Some(pos) = pos {
            feats.extend(pos_features(pos, i));
        }
        if let Some(flags) = &gaz {
            feats.extend(gazetteer_window_features(flags, i));
        }
        for (group, name, source) in [
            (FeatureGroup::KMeans24, "km24", resources.kmeans24),
            (FeatureGroup::KMeans23, "km23", resources.kmeans23),
        ] {
            if !preset.enables(group) {
                continue;
            }
            let src = source.expect("checked by Resources::check");
            let v = src
                .embeddings
                .vector(sentence_index, i)
                .ok_or_else(|| missing_key(name, sentence_index, i))?;
            feats.push((format!("{name}={}", src.model.assign(v)?), 1.0));
        }
        if preset.enables(FeatureGroup::SoftmaxTag) {
            let tags = resources.predicted_tags.expect("checked by Resources::check");
            let tag = tags
                .tag(sentence_index, i)
                .ok_or_else(|| missing_key("tag", sentence_index, i))?;
            feats.push((format!("bert={tag}"), 1.0));
        }
        if preset.enables(FeatureGroup::RawEmbedding) {
            let raw = resources.raw_embeddings.expect("checked by Resources::check");
            let v = raw
                .vector(sentence_index, i)
                .ok_or_else(|| missing_key("embedding", sentence_index, i))?;
            for (j, q) in quantize_embedding(v)?.into_iter().enumerate() {
                feats.push((format!("e{j}"), q as f64));
            }
        }
        out.push(FeatureVector::from_pairs(feats));
    }
    Ok(out)
}

/// Features for every token of every sentence. Sidecar records are looked up
/// by the sentence's position in `sentences`. Token frequencies are counted
/// over `sentences` itself.
pub fn featurize(
    sentences: &[LabeledSentence],
    preset: Preset,
    resources: &Resources<'_>,
) -> Result<Vec<Vec<FeatureVector>>> {
    resources.check(preset)?;
    let freq = FreqTable::from_sentences(sentences);
    sentences
        .par_iter()
        .enumerate()
        .map(|(si, s)| sentence_features(si, s, preset, resources, &freq))
        .collect()
}

/// Tokens, optional gold labels and features of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedSentence {
    pub tokens: Vec<String>,
    pub labels: Option<Vec<Label>>,
    pub features: Vec<FeatureVector>,
}

/// A featurized corpus tagged with the preset that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedCorpus {
    pub preset: Preset,
    pub sentences: Vec<FeaturizedSentence>,
}

impl FeaturizedCorpus {
    pub fn build(sentences: &[LabeledSentence], preset: Preset, resources: &Resources<'_>) -> Result<Self> {
        let features = featurize(sentences, preset, resources)?;
        Ok(Self {
            preset,
            sentences: sentences
                .iter()
                .zip(features)
                .map(|(s, features)| FeaturizedSentence {
                    tokens: s.tokens.clone(),
                    labels: s.labels.clone(),
                    features,
                })
                .collect(),
        })
    }

    /// `# preset=X` header, then `token<TAB>label<TAB>name=value ...` per
    /// token with blank lines between sentences. Unlabeled tokens use `_`.
    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# preset={}", self.preset).map_err(io::write_err)?;
        for (si, s) in self.sentences.iter().enumerate() {
            if si > 0 {
                writeln!(out).map_err(io::write_err)?;
            }
            for (i, (token, feats)) in s.tokens.iter().zip(&s.features).enumerate() {
                let label = s.labels.as_ref().map_or("_".to_string(), |l| l[i].to_string());
                write!(out, "{}\t{label}\t", escape(token)).map_err(io::write_err)?;
                for (k, (name, value)) in feats.iter().enumerate() {
                    let sep = if k == 0 { "" } else { " " };
                    write!(out, "{sep}{}={value}", escape(name)).map_err(io::write_err)?;
                }
                writeln!(out).map_err(io::write_err)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, |out| self.write(out))
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty feature file".into()))?
            .map_err(|e| Error::io("<input>", e))?;
        let preset: Preset = header
            .strip_prefix("# preset=")
            .ok_or_else(|| Error::Format("feature file lacks `# preset=` header".into()))?
            .trim()
            .parse()?;
        let mut sentences = Vec::new();
        let mut current = FeaturizedSentence {
            tokens: Vec::new(),
            labels: Some(Vec::new()),
            features: Vec::new(),
        };
        let mut labeled = Vec::new();
        let flush = |cur: &mut FeaturizedSentence, labeled: &mut Vec<bool>, out: &mut Vec<FeaturizedSentence>| {
            if cur.tokens.is_empty() {
                return;
            }
            let mut s = std::mem::replace(
                cur,
                FeaturizedSentence {
                    tokens: Vec::new(),
                    labels: Some(Vec::new()),
                    features: Vec::new(),
                },
            );
            if labeled.iter().any(|l| !l) {
                s.labels = None;
            }
            labeled.clear();
            out.push(s);
        };
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line.map_err(|e| Error::io("<input>", e))?;
            if line.trim().is_empty() {
                flush(&mut current, &mut labeled, &mut sentences);
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(token), Some(label), feats) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::parse(line_no, "expected token<TAB>label<TAB>features"));
            };
            current.tokens.push(unescape(token));
            if label == "_" {
                labeled.push(false);
            } else {
                labeled.push(true);
                current.labels.as_mut().expect("reset per sentence").push(label.parse()?);
            }
            let mut pairs = Vec::new();
            for item in feats.unwrap_or("").split(' ').filter(|f| !f.is_empty()) {
                let (name, value) = item
                    .rsplit_once('=')
                    .ok_or_else(|| Error::parse(line_no, format!("feature {item:?} lacks a value")))?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad feature value in {item:?}")))?;
                pairs.push((unescape(name), value));
            }
            current.features.push(FeatureVector::from_pairs(pairs));
        }
        flush(&mut current, &mut labeled, &mut sentences);
        Ok(Self { preset, sentences })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(io::open(path)?)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    if !s.contains('%') {
        return s.to_string();
    }
    s.replace("%20", " ")
        .replace("%09", "\t")
        .replace("%0A", "\n")
        .replace("%25", "%")
}

/// The gazetteer flag names, in [`EntityType::ALL`] order.
pub fn gazetteer_flag_names() -> [&'static str; 6] {
    EntityType::ALL.map(GazetteerFeatures::flag_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::EntityType;

    fn sentence(tokens: &[&str]) -> LabeledSentence {
        LabeledSentence::new("t", tokens.iter().map(|s| s.to_string()).collect(), None)
    }

    #[test]
    fn preset_groups_nest() {
        use FeatureGroup::*;
        let subset = |a: Preset, b: Preset| a.groups().iter().all(|g| b.enables(*g));
        assert!(subset(Preset::A, Preset::B));
        assert!(subset(Preset::B, Preset::C));
        assert!(subset(Preset::C, Preset::D));
        assert!(subset(Preset::D, Preset::E));
        assert!(subset(Preset::D, Preset::F));
        assert!(subset(Preset::F, Preset::G));
        assert!(subset(Preset::F, Preset::H));
        assert!(subset(Preset::F, Preset::I));
        assert!(!Preset::F.enables(IsBangla) && !Preset::F.enables(IsStopword));
        assert!(!Preset::H.enables(KMeans23) && Preset::H.enables(SoftmaxTag));
        assert!(!Preset::I.enables(SoftmaxTag) && Preset::I.enables(RawEmbedding));
        assert_eq!("f".parse::<Preset>().unwrap(), Preset::F);
        assert!(matches!("J".parse::<Preset>(), Err(Error::Config(_))));
    }

    #[test]
    fn affixes_count_scalars() {
        // ঢাকায় = ঢ া ক া য ় (six scalars)
        let word = "ঢাকায়";
        let scalars: Vec<char> = word.chars().collect();
        let expect_suffix: String = scalars[scalars.len() - 3..].iter().collect();
        let expect_prefix: String = scalars[..3].iter().collect();
        let feats = FeatureVector::from_pairs(basic_features(
            &[word],
            0,
            &FreqTable::default(),
            Stopwords::bangla(),
            Preset::A,
        ));
        assert!(feats.contains(&format!("suf3={expect_suffix}")));
        assert!(feats.contains(&format!("pre3={expect_prefix}")));
        assert!(feats.contains(&format!("len={}", scalars.len())));
        assert!(feats.contains("BOS") && feats.contains("EOS"));
    }

    #[test]
    fn short_words_use_whole_word() {
        let feats = FeatureVector::from_pairs(basic_features(&["কা"], 0, &FreqTable::default(), Stopwords::bangla(), Preset::A));
        assert!(feats.contains("suf3=কা") && feats.contains("pre3=কা"));
    }

    #[test]
    fn bangla_digits_are_digits() {
        for d in '\u{09E6}'..='\u{09EF}' {
            assert!(is_digit(d));
        }
        let feats = FeatureVector::from_pairs(basic_features(&["২০২৩"], 0, &FreqTable::default(), Stopwords::bangla(), Preset::B));
        assert!(feats.contains("is_digit"));
        let feats = FeatureVector::from_pairs(basic_features(&["২০a"], 0, &FreqTable::default(), Stopwords::bangla(), Preset::B));
        assert!(!feats.contains("is_digit"));
    }

    #[test]
    fn bangla_range() {
        assert!("ঢাকা".chars().all(|c| (2432..=2559).contains(&(c as u32))));
        assert!(is_bangla("ঢাকা"));
        assert!(is_bangla("ঢাকা শহর"));
        assert!(!is_bangla("Dhaka"));
        assert!(is_bangla(""));
    }

    #[test]
    fn pos_window() {
        let feats = pos_features(&["NN", "VB"], 0);
        let names: Vec<&str> = feats.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["pos=NN", "pos[+1]=VB"]);
        let last = pos_features(&["NN", "VB"], 1);
        assert!(last.iter().all(|(n, _)| !n.starts_with("pos[+")));
    }

    #[test]
    fn preset_c_without_pos_is_config_error() {
        let err = featurize(&[sentence(&["a"])], Preset::C, &Resources::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn preset_a_has_no_resource_features() {
        let mut s = sentence(&["x", "y", "z"]);
        s.pos = Some(vec!["NN".into(); 3]);
        let feats = featurize(&[s], Preset::A, &Resources::default()).unwrap();
        for f in &feats[0] {
            for name in f.names() {
                assert!(!name.starts_with("pos") && !name.starts_with("is_") && !name.starts_with("km"), "{name}");
            }
        }
    }

    #[test]
    fn gazetteer_flags_reach_neighbours() {
        let mut trie = GazetteerTrie::new();
        trie.insert("ঢাকা", EntityType::Loc);
        let mut s = sentence(&["আমি", "ঢাকা", "যাই"]);
        s.pos = Some(vec!["PR".into(), "NNP".into(), "VB".into()]);
        let resources = Resources {
            gazetteer: Some(&trie),
            ..Default::default()
        };
        let feats = featurize(&[s], Preset::D, &resources).unwrap();
        assert!(feats[0][1].contains("is_loc"));
        assert!(feats[0][0].contains("is_loc[+1]"));
        assert!(feats[0][2].contains("is_loc[-1]"));
        assert!(!feats[0][0].contains("is_loc"));
    }

    #[test]
    fn missing_resources_are_config_errors() {
        let mut s = sentence(&["a"]);
        s.pos = Some(vec!["NN".into()]);
        for preset in [Preset::D, Preset::F, Preset::G, Preset::H, Preset::I] {
            let err = featurize(std::slice::from_ref(&s), preset, &Resources::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{preset}");
        }
    }

    #[test]
    fn raw_embedding_features_are_quantized() {
        let mut trie = GazetteerTrie::new();
        trie.insert("q", EntityType::Per);
        let mut emb = Sidecar::new_embeddings(24, 4);
        emb.push_vector(0, 0, &[0.456, 0.0, -0.005, 1.0]).unwrap();
        let model = ClusterModel::from_centroids(vec![vec![0.0; 4], vec![1.0; 4]], 24, 0).unwrap();
        let resources = Resources {
            gazetteer: Some(&trie),
            kmeans24: Some(ClusterSource {
                model: &model,
                embeddings: &emb,
            }),
            raw_embeddings: Some(&emb),
            ..Default::default()
        };
        let mut s = sentence(&["w"]);
        s.pos = Some(vec!["NN".into()]);
        let feats = featurize(&[s], Preset::I, &resources).unwrap();
        let f = &feats[0][0];
        assert_eq!(f.get("e0"), Some(46.0));
        assert_eq!(f.get("e1"), Some(0.0));
        assert_eq!(f.get("e2"), Some(-1.0));
        assert_eq!(f.get("e3"), Some(100.0));
        assert!(f.contains("km24=0"));
    }

    #[test]
    fn missing_sidecar_key_is_alignment_error() {
        let trie = GazetteerTrie::new();
        let emb = Sidecar::new_embeddings(24, 1);
        let model = ClusterModel::from_centroids(vec![vec![0.0]], 24, 0).unwrap();
        let resources = Resources {
            gazetteer: Some(&trie),
            kmeans24: Some(ClusterSource {
                model: &model,
                embeddings: &emb,
            }),
            ..Default::default()
        };
        let mut s = sentence(&["w"]);
        s.pos = Some(vec!["NN".into()]);
        let err = featurize(&[s], Preset::F, &resources).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)), "{err:?}");
    }

    #[test]
    fn layer_mismatch_is_rejected() {
        let trie = GazetteerTrie::new();
        let emb = Sidecar::new_embeddings(23, 1);
        let model = ClusterModel::from_centroids(vec![vec![0.0]], 24, 0).unwrap();
        let resources = Resources {
            gazetteer: Some(&trie),
            kmeans24: Some(ClusterSource {
                model: &model,
                embeddings: &emb,
            }),
            ..Default::default()
        };
        assert!(matches!(resources.check(Preset::F), Err(Error::Config(_))));
    }

    #[test]
    fn feature_file_round_trip() {
        let mut s = sentence(&["a b", "c%d"]);
        s.pos = Some(vec!["NN".into(), "VB".into()]);
        s.labels = Some(vec![Label::B(EntityType::Per), Label::O]);
        let corpus = FeaturizedCorpus::build(&[s.clone(), sentence(&["x"])], Preset::A, &Resources::default()).unwrap();
        let mut buf = Vec::new();
        corpus.write(&mut buf).unwrap();
        let back = FeaturizedCorpus::parse(&buf[..]).unwrap();
        assert_eq!(back, corpus);
    }
}
