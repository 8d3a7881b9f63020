//! Linear-chain CRF: lattice algorithms, maximum-likelihood training with an
//! L2 penalty, and Viterbi decoding.

mod lattice;
pub mod optim;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::features::{FeatureVector, FeaturizedSentence, Preset};
use crate::labels::{Label, LabelScheme};
use crate::{io, Error, Result};

pub use lattice::{log_sum_exp, Lattice, Marginals};
pub use optim::{OptimConfig, Optimizer};

/// Score added to transitions that break BIO when masking is on.
pub const FORBIDDEN: f64 = -1e4;

/// Number of contiguous shards the batch gradient is split into. Fixed so
/// the floating-point summation order does not depend on the thread count.
const SHARDS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_nll: f64,
    pub preset: Option<Preset>,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            iterations: 0,
            final_nll: 0.0,
            preset: None,
            optimizer: Optimizer::Lbfgs,
            seed: 0,
        }
    }
}

/// A sentence's features mapped onto vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSentence {
    positions: Vec<Vec<(u32, f64)>>,
}

impl CompiledSentence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Weights of a trained (or zero-initialized) model.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    scheme: LabelScheme,
    names: Vec<String>,
    vocab: HashMap<String, u32>,
    /// `emission[feature * L + label]`
    emission: Vec<f64>,
    /// `transition[prev * L + next]`
    transition: Vec<f64>,
    pub l2: f64,
    pub constrain_bio: bool,
    pub meta: TrainingMeta,
}

impl CrfModel {
    /// All-zero model over the given feature names (sorted and deduplicated).
    pub fn zeros<I, S>(feature_names: I, l2: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = feature_names
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let scheme = LabelScheme::multiconer();
        let l = scheme.len();
        let vocab = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Self {
            emission: vec![0.0; names.len() * l],
            transition: vec![0.0; l * l],
            scheme,
            names,
            vocab,
            l2,
            constrain_bio: false,
            meta: TrainingMeta::default(),
        }
    }

    pub fn labels(&self) -> &[Label] {
        self.scheme.labels()
    }

    pub fn n_labels(&self) -> usize {
        self.scheme.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.vocab.get(name).map(|&i| i as usize)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    /// Total number of weights: emissions then transitions.
    pub fn n_weights(&self) -> usize {
        self.emission.len() + self.transition.len()
    }

    /// Flat weight vector, emissions first.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.emission.clone();
        w.extend_from_slice(&self.transition);
        w
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_weights() {
            return Err(Error::Invalid(format!(
                "expected {} weights, got {}",
                self.n_weights(),
                weights.len()
            )));
        }
        let (e, t) = weights.split_at(self.emission.len());
        self.emission.copy_from_slice(e);
        self.transition.copy_from_slice(t);
        Ok(())
    }

    pub fn emission_weight(&self, feature: usize, label: usize) -> f64 {
        self.emission[feature * self.n_labels() + label]
    }

    pub fn transition_weight(&self, prev: usize, next: usize) -> f64 {
        self.transition[prev * self.n_labels() + next]
    }

    pub fn set_transition_weight(&mut self, prev: usize, next: usize, w: f64) {
        let l = self.n_labels();
        self.transition[prev * l + next] = w;
    }

    /// Maps feature names to indices; unknown features are dropped.
    pub fn compile(&self, features: &[FeatureVector]) -> CompiledSentence {
        CompiledSentence {
            positions: features
                .iter()
                .map(|fv| {
                    fv.iter()
                        .filter_map(|(name, v)| self.vocab.get(name).map(|&i| (i, v)))
                        .collect()
                })
                .collect(),
        }
    }

    fn mask(&self) -> Option<Vec<f64>> {
        self.constrain_bio.then(|| bio_mask(self.labels()))
    }

    pub fn lattice(&self, sentence: &CompiledSentence) -> Lattice {
        build_lattice(sentence, &self.emission, &self.transition, self.n_labels(), self.mask().as_deref())
    }

    /// Best label sequence and its score. Empty input decodes to nothing.
    pub fn viterbi(&self, features: &[FeatureVector]) -> (Vec<Label>, f64) {
        let lattice = self.lattice(&self.compile(features));
        let (path, score) = lattice.viterbi();
        let labels = path.into_iter().map(|y| self.labels()[y]).collect();
        (labels, score)
    }

    pub fn decode(&self, features: &[FeatureVector]) -> Vec<Label> {
        self.viterbi(features).0
    }
}

/// `FORBIDDEN` on every transition into `I-x` from anything but `B-x`/`I-x`.
pub fn bio_mask(labels: &[Label]) -> Vec<f64> {
    let l = labels.len();
    let mut mask = vec![0.0; l * l];
    for (p, prev) in labels.iter().enumerate() {
        for (n, next) in labels.iter().enumerate() {
            if !next.may_follow(Some(*prev)) {
                mask[p * l + n] = FORBIDDEN;
            }
        }
    }
    mask
}

fn build_lattice(
    sentence: &CompiledSentence,
    emission: &[f64],
    transition: &[f64],
    l: usize,
    mask: Option<&[f64]>,
) -> Lattice {
    let mut scores = vec![0.0; sentence.len() * l];
    for (t, feats) in sentence.positions.iter().enumerate() {
        let row = &mut scores[t * l..(t + 1) * l];
        for &(f, v) in feats {
            let w = &emission[f as usize * l..(f as usize + 1) * l];
            for (s, wi) in row.iter_mut().zip(w) {
                *s += v * wi;
            }
        }
    }
    let mut trans = transition.to_vec();
    if let Some(mask) = mask {
        for (t, m) in trans.iter_mut().zip(mask) {
            *t += m;
        }
    }
    Lattice::new(sentence.len(), l, scores, trans).expect("consistent lattice shape")
}

/// Penalized negative log-likelihood of a fixed batch, as a function of the
/// flat weight vector.
pub struct Objective {
    sentences: Vec<(CompiledSentence, Vec<usize>)>,
    n_features: usize,
    n_labels: usize,
    l2: f64,
    mask: Option<Vec<f64>>,
}

impl Objective {
    pub fn new(model: &CrfModel, batch: &[FeaturizedSentence]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty training batch".into()));
        }
        let sentences = batch
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let labels = s
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::Invalid(format!("training sentence {i} has no labels")))?;
                if labels.len() != s.features.len() {
                    return Err(Error::Alignment(format!("training sentence {i}: label/feature count differs")));
                }
                Ok((model.compile(&s.features), labels.iter().map(|l| l.index()).collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sentences,
            n_features: model.n_features(),
            n_labels: model.n_labels(),
            l2: model.l2,
            mask: model.mask(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n_features * self.n_labels + self.n_labels * self.n_labels
    }

    /// `(nll, gradient)` at `weights`.
    pub fn evaluate(&self, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        if weights.len() != self.dim() {
            return Err(Error::Invalid(format!("expected {} weights, got {}", self.dim(), weights.len())));
        }
        let shard_len = self.sentences.len().div_ceil(SHARDS);
        let parts: Vec<(f64, Vec<f64>)> = self
            .sentences
            .par_chunks(shard_len)
            .map(|shard| {
                let mut grad = vec![0.0; weights.len()];
                let mut nll = 0.0;
                for (sentence, gold) in shard {
                    nll += self.accumulate(weights, sentence, gold, &mut grad);
                }
                (nll, grad)
            })
            .collect();
        let mut nll = 0.0;
        let mut grad = vec![0.0; weights.len()];
        for (n, g) in parts {
            nll += n;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let mut sq = 0.0;
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += self.l2 * w;
            sq += w * w;
        }
        nll += 0.5 * self.l2 * sq;
        Ok((nll, grad))
    }

    fn accumulate(&self, weights: &[f64], sentence: &CompiledSentence, gold: &[usize], grad: &mut [f64]) -> f64 {
        let l = self.n_labels;
        let (emission, transition) = weights.split_at(self.n_features * l);
        let lattice = build_lattice(sentence, emission, transition, l, self.mask.as_deref());
        let marg = lattice.marginals();
        let gold_score = lattice.score(gold).expect("gold labels validated");
        let (g_emit, g_trans) = grad.split_at_mut(self.n_features * l);
        for (t, feats) in sentence.positions.iter().enumerate() {
            for &(f, v) in feats {
                let row = &mut g_emit[f as usize * l..(f as usize + 1) * l];
                for (y, g) in row.iter_mut().enumerate() {
                    *g += v * marg.node(t, y);
                }
                row[gold[t]] -= v;
            }
        }
        for t in 0..sentence.len().saturating_sub(1) {
            for (k, g) in g_trans.iter_mut().enumerate() {
                *g += marg.edge[t * l * l + k];
            }
            g_trans[gold[t] * l + gold[t + 1]] -= 1.0;
        }
        marg.log_partition - gold_score
    }
}

/// NLL and gradient of `model` on `batch` at the model's current weights.
pub fn nll_and_gradient(model: &CrfModel, batch: &[FeaturizedSentence]) -> Result<(f64, Vec<f64>)> {
    Objective::new(model, batch)?.evaluate(&model.weights())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub l2: f64,
    /// Recorded with the model. Both optimizers are full-batch and start from
    /// zero weights, so the result does not depend on it.
    pub seed: u64,
    pub constrain_bio: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            l2: 0.1,
            seed: 0,
            constrain_bio: false,
        }
    }
}

/// Fits a model to labeled, featurized sentences. The vocabulary is every
/// feature name seen in `corpus`.
pub fn train(corpus: &[FeaturizedSentence], preset: Option<Preset>, config: &TrainConfig) -> Result<CrfModel> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot train on an empty corpus".into()));
    }
    if !(config.l2.is_finite() && config.l2 >= 0.0) {
        return Err(Error::Config(format!("l2 must be non-negative, got {}", config.l2)));
    }
    let names: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|s| s.features.iter())
        .flat_map(|fv| fv.names())
        .collect();
    let mut model = CrfModel::zeros(names, config.l2);
    model.constrain_bio = config.constrain_bio;
    let objective = Objective::new(&model, corpus)?;
    let result = optim::minimize(|w| objective.evaluate(w), model.weights(), &config.optim)?;
    if result.x.iter().any(|w| !w.is_finite()) {
        return Err(Error::Training("non-finite weights after optimization".into()));
    }
    model.set_weights(&result.x)?;
    model.meta = TrainingMeta {
        iterations: result.iterations,
        final_nll: result.value,
        preset,
        optimizer: config.optim.optimizer,
        seed: config.seed,
    };
    log::info!(
        "trained {} features x {} labels in {} iterations, nll {}",
        model.n_features(),
        model.n_labels(),
        result.iterations,
        result.value
    );
    Ok(model)
}

const MODEL_HEADER: &str = "#CRF version=1";

impl CrfModel {
    /// Text format: header lines, the transition matrix, then one line per
    /// feature with its per-label weights. Weights use shortest round-trip
    /// notation, so save/load is exact.
    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        let w = |out: &mut W, s: String| writeln!(out, "{s}").map_err(io::write_err);
        w(out, MODEL_HEADER.to_string())?;
        w(out, format!("preset={}", self.meta.preset.map_or("-".to_string(), |p| p.to_string())))?;
        w(out, format!("optimizer={}", self.meta.optimizer))?;
        w(out, format!("l2={:e}", self.l2))?;
        w(out, format!("seed={}", self.meta.seed))?;
        w(out, format!("iterations={}", self.meta.iterations))?;
        w(out, format!("final_nll={:e}", self.meta.final_nll))?;
        w(out, format!("constrain_bio={}", u8::from(self.constrain_bio)))?;
        let labels: Vec<String> = self.labels().iter().map(Label::to_string).collect();
        w(out, format!("labels={}", labels.join(" ")))?;
        w(out, "transitions".to_string())?;
        for row in self.transition.chunks_exact(self.n_labels()) {
            w(out, join_floats(row))?;
        }
        w(out, format!("features={}", self.names.len()))?;
        for (name, row) in self.names.iter().zip(self.emission.chunks_exact(self.n_labels())) {
            w(out, format!("{}\t{}", escape_name(name), join_floats(row)))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, |out| self.write(out))
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(n, l)| {
            l.map(|l| (n + 1, l)).map_err(|e| Error::io("<input>", e))
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines
                .next()
                .unwrap_or_else(|| Err(Error::Format(format!("model file truncated before {what}"))))
        };
        let (_, header) = next("header")?;
        if header.trim() != MODEL_HEADER {
            return Err(Error::Format(format!("unsupported model header {header:?}")));
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (n, line) = next(key)?;
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::parse(n, format!("expected `{key}=`")))?;
            Ok((n, value.to_string()))
        };
        let num = |(n, v): (usize, String)| -> Result<f64> {
            v.parse().map_err(|_| Error::parse(n, format!("bad number {v:?}")))
        };
        let int = |(n, v): (usize, String)| -> Result<u64> {
            v.parse().map_err(|_| Error::parse(n, format!("bad integer {v:?}")))
        };
        let (_, preset) = field("preset")?;
        let preset = if preset == "-" { None } else { Some(preset.parse()?) };
        let (_, optimizer) = field("optimizer")?;
        let optimizer: Optimizer = optimizer.parse()?;
        let l2 = num(field("l2")?)?;
        let seed = int(field("seed")?)?;
        let iterations = int(field("iterations")?)? as usize;
        let final_nll = num(field("final_nll")?)?;
        let constrain_bio = int(field("constrain_bio")?)? != 0;
        let (n, labels) = field("labels")?;
        let labels: Vec<Label> = labels.split(' ').map(str::parse).collect::<Result<_>>()?;
        let scheme = LabelScheme::multiconer();
        if labels != scheme.labels() {
            return Err(Error::parse(n, "label list does not match the BIO scheme"));
        }
        let l = labels.len();
        drop(field);
        let (n, marker) = next("transitions")?;
        if marker != "transitions" {
            return Err(Error::parse(n, "expected `transitions`"));
        }
        let mut transition = Vec::with_capacity(l * l);
        for _ in 0..l {
            let (n, row) = next("transition rows")?;
            transition.extend(parse_row(n, &row, l)?);
        }
        let (n, count) = next("feature count")?;
        let count: usize = count
            .strip_prefix("features=")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(n, "expected `features=<count>`"))?;
        let mut names = Vec::with_capacity(count);
        let mut emission = Vec::with_capacity(count * l);
        for _ in 0..count {
            let (n, line) = next("feature rows")?;
            let (name, row) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(n, "expected `name<TAB>weights`"))?;
            let name = unescape_name(name);
            if names.last().is_some_and(|prev: &String| prev >= &name) {
                return Err(Error::parse(n, "feature names out of order"));
            }
            names.push(name);
            emission.extend(parse_row(n, row, l)?);
        }
        if let Some(extra) = lines.next() {
            let (n, _) = extra?;
            return Err(Error::parse(n, "unexpected data after features"));
        }
        let vocab = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Ok(Self {
            scheme,
            names,
            vocab,
            emission,
            transition,
            l2,
            constrain_bio,
            meta: TrainingMeta {
                iterations,
                final_nll,
                preset,
                optimizer,
                seed,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(io::open(path)?)
    }
}

fn join_floats(row: &[f64]) -> String {
    row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: usize, row: &str, expected: usize) -> Result<Vec<f64>> {
    let values = row
        .split(' ')
        .map(|v| {
            let x: f64 = v.parse().map_err(|_| Error::parse(line, format!("bad weight {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::parse(line, "non-finite weight"));
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::parse(line, format!("expected {expected} weights, found {}", values.len())));
    }
    Ok(values)
}

fn escape_name(s: &str) -> String {
    s.replace('%', "%25").replace('\t', "%09").replace('\n', "%0A")
}

fn unescape_name(s: &str) -> String {
    if !s.contains('%') {
        return s.to_string();
    }
    s.replace("%09", "\t").replace("%0A", "\n").replace("%25", "%")
}
