//! Per-token artifacts produced outside the toolkit (encoder embeddings and
//! predicted tags), keyed by `(sentence, token)`.
//!
//! File layout, UTF-8 with LF line endings:
//!
//! ```text
//! #SIDECAR kind=emb layer=24 dim=4
//! 0 0 0.25 -0.5 1 0
//! 0 1 ...
//! ```
//!
//! Tag sidecars use `kind=tag` and carry a BIO label as the payload.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::labels::Label;
use crate::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidecarKind {
    Embedding,
    Tag,
}

impl fmt::Display for SidecarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SidecarKind::Embedding => "emb",
            SidecarKind::Tag => "tag",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sentence_index: usize,
    pub token_index: usize,
    pub layer: i64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictedTagRecord {
    pub sentence_index: usize,
    pub token_index: usize,
    pub tag: Label,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Vectors(Vec<f64>),
    Tags(Vec<Label>),
}

/// Records of one sidecar file, indexed for random access.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    layer: i64,
    dim: usize,
    keys: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    payload: Payload,
}

impl Sidecar {
    pub fn new_embeddings(layer: i64, dim: usize) -> Self {
        Self {
            layer,
            dim,
            keys: Vec::new(),
            index: HashMap::new(),
            payload: Payload::Vectors(Vec::new()),
        }
    }

    pub fn new_tags(layer: i64) -> Self {
        Self {
            layer,
            dim: 0,
            keys: Vec::new(),
            index: HashMap::new(),
            payload: Payload::Tags(Vec::new()),
        }
    }

    pub fn kind(&self) -> SidecarKind {
        match self.payload {
            Payload::Vectors(_) => SidecarKind::Embedding,
            Payload::Tags(_) => SidecarKind::Tag,
        }
    }

    pub fn layer(&self) -> i64 {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in insertion (file) order.
    pub fn keys(&self) -> &[(usize, usize)] {
        &self.keys
    }

    fn claim(&mut self, key: (usize, usize)) -> Result<()> {
        if self.index.contains_key(&key) {
            return Err(Error::Format(format!("duplicate sidecar key ({}, {})", key.0, key.1)));
        }
        self.index.insert(key, self.keys.len());
        self.keys.push(key);
        Ok(())
    }

    pub fn push_vector(&mut self, sentence: usize, token: usize, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Format(format!(
                "vector for ({sentence}, {token}) has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if !matches!(self.payload, Payload::Vectors(_)) {
            return Err(Error::Format("cannot add a vector to a tag sidecar".into()));
        }
        self.claim((sentence, token))?;
        if let Payload::Vectors(data) = &mut self.payload {
            data.extend_from_slice(vector);
        }
        Ok(())
    }

    pub fn push_tag(&mut self, sentence: usize, token: usize, tag: Label) -> Result<()> {
        if !matches!(self.payload, Payload::Tags(_)) {
            return Err(Error::Format("cannot add a tag to an embedding sidecar".into()));
        }
        self.claim((sentence, token))?;
        if let Payload::Tags(tags) = &mut self.payload {
            tags.push(tag);
        }
        Ok(())
    }

    /// Vector at `(sentence, token)`, or `None` when absent.
    pub fn vector(&self, sentence: usize, token: usize) -> Option<&[f64]> {
        let &i = self.index.get(&(sentence, token))?;
        match &self.payload {
            Payload::Vectors(data) => Some(&data[i * self.dim..(i + 1) * self.dim]),
            Payload::Tags(_) => None,
        }
    }

    pub fn tag(&self, sentence: usize, token: usize) -> Option<Label> {
        let &i = self.index.get(&(sentence, token))?;
        match &self.payload {
            Payload::Tags(tags) => Some(tags[i]),
            Payload::Vectors(_) => None,
        }
    }

    pub fn embedding_records(&self) -> Vec<EmbeddingRecord> {
        self.keys
            .iter()
            .filter_map(|&(s, t)| {
                Some(EmbeddingRecord {
                    sentence_index: s,
                    token_index: t,
                    layer: self.layer,
                    vector: self.vector(s, t)?.to_vec(),
                })
            })
            .collect()
    }

    pub fn tag_records(&self) -> Vec<PredictedTagRecord> {
        self.keys
            .iter()
            .filter_map(|&(s, t)| {
                Some(PredictedTagRecord {
                    sentence_index: s,
                    token_index: t,
                    tag: self.tag(s, t)?,
                })
            })
            .collect()
    }

    /// All vectors in file order, as one row per record.
    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        let data: &[f64] = match &self.payload {
            Payload::Vectors(d) => d,
            Payload::Tags(_) => &[],
        };
        data.chunks_exact(self.dim.max(1))
    }

    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "#SIDECAR kind={} layer={} dim={}", self.kind(), self.layer, self.dim)
            .map_err(io::write_err)?;
        for (i, &(s, t)) in self.keys.iter().enumerate() {
            write!(out, "{s} {t}").map_err(io::write_err)?;
            match &self.payload {
                Payload::Vectors(data) => {
                    for v in &data[i * self.dim..(i + 1) * self.dim] {
                        write!(out, " {v}").map_err(io::write_err)?;
                    }
                }
                Payload::Tags(tags) => write!(out, " {}", tags[i]).map_err(io::write_err)?,
            }
            writeln!(out).map_err(io::write_err)?;
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
            .ok_or_else(|| Error::Format("empty sidecar file".into()))?
            .map_err(|e| Error::io("<input>", e))?;
        let mut sidecar = parse_header(&header)?;
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line.map_err(|e| Error::io("<input>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let mut index = |what: &str| -> Result<usize> {
                let f = fields
                    .next()
                    .ok_or_else(|| Error::parse(line_no, format!("missing {what} index")))?;
                f.parse()
                    .map_err(|_| Error::parse(line_no, format!("bad {what} index {f:?}")))
            };
            let s = index("sentence")?;
            let t = index("token")?;
            let pushed = match sidecar.kind() {
                SidecarKind::Embedding => {
                    let vector = fields
                        .map(|f| {
                            f.parse::<f64>()
                                .map_err(|_| Error::parse(line_no, format!("bad component {f:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    sidecar.push_vector(s, t, &vector)
                }
                SidecarKind::Tag => {
                    let tag = fields
                        .next()
                        .ok_or_else(|| Error::parse(line_no, "missing tag"))?;
                    if fields.next().is_some() {
                        return Err(Error::parse(line_no, "extra fields after tag"));
                    }
                    sidecar.push_tag(s, t, tag.parse()?)
                }
            };
            pushed.map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("line {line_no}: {m}")),
                other => other,
            })?;
        }
        Ok(sidecar)
    }
}

fn parse_header(header: &str) -> Result<Sidecar> {
    let rest = header
        .strip_prefix("#SIDECAR")
        .ok_or_else(|| Error::Format("missing #SIDECAR header".into()))?;
    let (mut kind, mut layer, mut dim) = (None, None, None);
    for field in rest.split_ascii_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
        let bad = || Error::Format(format!("bad header value {field:?}"));
        match k {
            "kind" => kind = Some(v.to_string()),
            "layer" => layer = Some(v.parse::<i64>().map_err(|_| bad())?),
            "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(Error::Format(format!("unknown header field {k:?}"))),
        }
    }
    let missing = |f| Error::Format(format!("header lacks {f}"));
    let layer = layer.ok_or_else(|| missing("layer"))?;
    let dim = dim.ok_or_else(|| missing("dim"))?;
    match kind.as_deref() {
        Some("emb") if dim > 0 => Ok(Sidecar::new_embeddings(layer, dim)),
        Some("emb") => Err(Error::Format("embedding sidecar needs dim > 0".into())),
        Some("tag") => {
            let mut s = Sidecar::new_tags(layer);
            s.dim = dim;
            Ok(s)
        }
        Some(other) => Err(Error::Format(format!("unknown sidecar kind {other:?}"))),
        None => Err(missing("kind")),
    }
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    Sidecar::parse(io::open(path)?)
}

/// Reduction from subword pieces to one vector per word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolPolicy {
    #[default]
    FirstPiece,
    Mean,
}

impl FromStr for PoolPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_piece" | "first" => Ok(PoolPolicy::FirstPiece),
            "mean" => Ok(PoolPolicy::Mean),
            other => Err(Error::Config(format!("unknown pooling policy {other:?}"))),
        }
    }
}

/// Collapses subword vectors into word vectors. `pieces_per_word[i]` is the
/// number of consecutive subword vectors belonging to word `i`.
pub fn pool_subwords(
    pieces_per_word: &[usize],
    subword_vectors: &[Vec<f64>],
    policy: PoolPolicy,
) -> Result<Vec<Vec<f64>>> {
    let expected: usize = pieces_per_word.iter().sum();
    if expected != subword_vectors.len() {
        return Err(Error::Alignment(format!(
            "word boundaries cover {expected} pieces but {} vectors were given",
            subword_vectors.len()
        )));
    }
    if let Some(w) = pieces_per_word.iter().position(|&c| c == 0) {
        return Err(Error::Alignment(format!("word {w} has no subword pieces")));
    }
    let mut words = Vec::with_capacity(pieces_per_word.len());
    let mut start = 0;
    for &count in pieces_per_word {
        let group = &subword_vectors[start..start + count];
        start += count;
        let dim = group[0].len();
        if group.iter().any(|v| v.len() != dim) {
            return Err(Error::Alignment("subword vectors differ in dimension".into()));
        }
        words.push(match policy {
            PoolPolicy::FirstPiece => group[0].clone(),
            PoolPolicy::Mean => {
                let mut sum = vec![0.0; dim];
                for v in group {
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += x;
                    }
                }
                sum.iter().map(|s| s / count as f64).collect()
            }
        });
    }
    Ok(words)
}

/// Scales by 100 and rounds half away from zero.
pub fn quantize_embedding(vector: &[f64]) -> Result<Vec<i64>> {
    vector
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if !x.is_finite() {
                return Err(Error::Numeric(format!("component {j} is {x}")));
            }
            let scaled = (x * 100.0).round();
            if scaled.abs() > i64::MAX as f64 / 2.0 {
                return Err(Error::Numeric(format!("component {j} = {x} overflows")));
            }
            Ok(scaled as i64)
        })
        .collect()
}
