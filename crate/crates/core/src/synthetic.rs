//! Seeded generator for a small Bangla-script NER corpus with a matching
//! gazetteer.
//!
//! Entity names are random syllable strings, so nothing about their spelling
//! reveals the type. Each mention may be preceded by a cue word that usually,
//! but not always, names the right type. A share of the gazetteer is held
//! out of training and only shows up in test sentences; on those mentions
//! the word-identity features learn nothing and the gazetteer flags carry
//! the signal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_conll_file, ConllFormat, LabeledSentence};
use crate::gazetteer::GazetteerTrie;
use crate::labels::{EntityType, Label, LabelScheme};
use crate::sidecar::Sidecar;
use crate::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub sentences: usize,
    pub phrases: usize,
    /// Share of gazetteer phrases never seen in training.
    pub held_out: f64,
    /// Share of sentences placed in the test split.
    pub test_fraction: f64,
    /// Chance a test mention uses a held-out phrase.
    pub test_unseen_rate: f64,
    /// Chance a mention gets a cue word in front of it.
    pub cue_rate: f64,
    /// Chance a cue word matches the mention's type.
    pub cue_reliability: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            sentences: 2000,
            phrases: 500,
            held_out: 0.2,
            test_fraction: 0.2,
            test_unseen_rate: 0.5,
            cue_rate: 0.6,
            cue_reliability: 0.6,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub tokens: Vec<String>,
    pub ty: EntityType,
}

impl Phrase {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub phrases: Vec<Phrase>,
    /// Indices into `phrases` kept out of training.
    pub held_out: BTreeSet<usize>,
    /// Gazetteer lists per type. A few phrases are listed under two types.
    pub gazetteer: BTreeMap<EntityType, Vec<String>>,
}

const CONSONANTS: &[char] = &[
    'ক', 'খ', 'গ', 'ঘ', 'চ', 'ছ', 'জ', 'ঝ', 'ট', 'ড', 'ত', 'থ', 'দ', 'ধ', 'ন', 'প', 'ফ', 'ব', 'ভ', 'ম', 'য', 'র', 'ল',
    'শ', 'স', 'হ',
];
const VOWEL_SIGNS: &[Option<char>] = &[
    None,
    Some('া'),
    Some('ি'),
    Some('ী'),
    Some('ু'),
    Some('ে'),
    Some('ো'),
];

const CUES: [(EntityType, &[&str]); 6] = [
    (EntityType::Per, &["জনাব", "শ্রী", "অভিনেতা"]),
    (EntityType::Loc, &["শহরে", "জেলার", "নদীর"]),
    (EntityType::Grp, &["দলের", "সংগঠনের", "ব্যান্ড"]),
    (EntityType::Corp, &["কোম্পানি", "প্রতিষ্ঠান", "ব্যাংক"]),
    (EntityType::Cw, &["চলচ্চিত্র", "উপন্যাস", "গান"]),
    (EntityType::Prod, &["মডেলের", "ব্র্যান্ডের", "যন্ত্র"]),
];

const CONTEXT_POS: &[&str] = &["NN", "VM", "JJ", "PSP", "CC", "RB", "PRP", "QC"];

fn syllable_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).expect("non-empty"));
        if let Some(v) = VOWEL_SIGNS.choose(rng).expect("non-empty") {
            w.push(*v);
        }
    }
    w
}

fn fresh_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, syllables: std::ops::RangeInclusive<usize>) -> String {
    loop {
        let n = rng.gen_range(syllables.clone());
        let w = syllable_word(rng, n);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

struct Vocabulary {
    context: Vec<(String, &'static str)>,
    /// Out-of-gazetteer capitalized-looking words with no entity label.
    noise: Vec<(String, &'static str)>,
}

fn cue_words(ty: EntityType) -> &'static [&'static str] {
    CUES[ty.index()].1
}

/// Generates the corpus. Same config, same output.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    if config.phrases < EntityType::ALL.len() {
        return Err(Error::Config(format!(
            "need at least {} phrases, got {}",
            EntityType::ALL.len(),
            config.phrases
        )));
    }
    for (name, v) in [
        ("held_out", config.held_out),
        ("test_fraction", config.test_fraction),
        ("test_unseen_rate", config.test_unseen_rate),
        ("cue_rate", config.cue_rate),
        ("cue_reliability", config.cue_reliability),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut used: HashSet<String> = CUES.iter().flat_map(|(_, w)| w.iter().map(|s| s.to_string())).collect();

    let vocab = Vocabulary {
        context: (0..120)
            .map(|_| {
                let w = fresh_word(&mut rng, &mut used, 1..=3);
                (w, *CONTEXT_POS.choose(&mut rng).expect("non-empty"))
            })
            .collect(),
        noise: (0..150)
            .map(|_| {
                let w = fresh_word(&mut rng, &mut used, 2..=4);
                (w, if rng.gen_bool(0.4) { "NNP" } else { "NN" })
            })
            .collect(),
    };

    let phrases: Vec<Phrase> = (0..config.phrases)
        .map(|i| {
            let len = match rng.gen_range(0..10) {
                0..=5 => 1,
                6..=8 => 2,
                _ => 3,
            };
            Phrase {
                tokens: (0..len).map(|_| fresh_word(&mut rng, &mut used, 2..=4)).collect(),
                ty: EntityType::ALL[i % EntityType::ALL.len()],
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..phrases.len()).collect();
    order.shuffle(&mut rng);
    let n_held = ((phrases.len() as f64) * config.held_out).round() as usize;
    let held_out: BTreeSet<usize> = order[..n_held].iter().copied().collect();
    let seen: Vec<usize> = order[n_held..].to_vec();
    let unseen: Vec<usize> = order[..n_held].to_vec();
    if seen.is_empty() {
        return Err(Error::Config("every phrase is held out; nothing left for training".into()));
    }

    let mut gazetteer: BTreeMap<EntityType, Vec<String>> = EntityType::ALL.iter().map(|&t| (t, Vec::new())).collect();
    for p in &phrases {
        gazetteer.get_mut(&p.ty).expect("all types present").push(p.text());
        if rng.gen_bool(0.04) {
            let other = EntityType::ALL[(p.ty.index() + rng.gen_range(1..6)) % 6];
            gazetteer.get_mut(&other).expect("all types present").push(p.text());
        }
    }

    let n_test = ((config.sentences as f64) * config.test_fraction).round() as usize;
    let n_train = config.sentences - n_test;
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for s in 0..config.sentences {
        let is_test = s >= n_train;
        let pick = |rng: &mut ChaCha8Rng| -> usize {
            if is_test && !unseen.is_empty() && rng.gen_bool(config.test_unseen_rate) {
                *unseen.choose(rng).expect("non-empty")
            } else {
                *seen.choose(rng).expect("non-empty")
            }
        };
        let sentence = sentence(&mut rng, config, &vocab, &phrases, pick, format!("syn-{s:05}"));
        if is_test {
            test.push(sentence);
        } else {
            train.push(sentence);
        }
    }

    Ok(SyntheticData {
        train,
        test,
        phrases,
        held_out,
        gazetteer,
    })
}

fn sentence(
    rng: &mut ChaCha8Rng,
    config: &SyntheticConfig,
    vocab: &Vocabulary,
    phrases: &[Phrase],
    mut pick: impl FnMut(&mut ChaCha8Rng) -> usize,
    id: String,
) -> LabeledSentence {
    let mut tokens = Vec::new();
    let mut pos = Vec::new();
    let mut labels = Vec::new();
    let mut push = |t: &str, p: &str, l: Label| {
        tokens.push(t.to_string());
        pos.push(p.to_string());
        labels.push(l);
    };

    let mentions = rng.gen_range(1..=3);
    for _ in 0..mentions {
        for _ in 0..rng.gen_range(1..=3) {
            if rng.gen_bool(0.15) {
                let (w, p) = vocab.noise.choose(rng).expect("non-empty");
                push(w, p, Label::O);
            } else {
                let (w, p) = vocab.context.choose(rng).expect("non-empty");
                push(w, p, Label::O);
            }
        }
        let phrase = &phrases[pick(rng)];
        if rng.gen_bool(config.cue_rate) {
            let cue_type = if rng.gen_bool(config.cue_reliability) {
                phrase.ty
            } else {
                EntityType::ALL[(phrase.ty.index() + rng.gen_range(1..6)) % 6]
            };
            push(cue_words(cue_type).choose(rng).expect("non-empty"), "NN", Label::O);
        }
        for (k, t) in phrase.tokens.iter().enumerate() {
            let label = if k == 0 { Label::B(phrase.ty) } else { Label::I(phrase.ty) };
            push(t, if rng.gen_bool(0.85) { "NNP" } else { "NN" }, label);
        }
    }
    for _ in 0..rng.gen_range(1..=3) {
        let (w, p) = vocab.context.choose(rng).expect("non-empty");
        push(w, p, Label::O);
    }
    push("।", "SYM", Label::O);

    let mut s = LabeledSentence::new(id, tokens, Some(labels));
    s.pos = Some(pos);
    s
}

impl SyntheticData {
    pub fn trie(&self) -> GazetteerTrie {
        let mut trie = GazetteerTrie::new();
        for (&ty, list) in &self.gazetteer {
            for phrase in list {
                trie.insert_raw(phrase, ty);
            }
        }
        trie
    }

    /// Writes `train.conll`, `test.conll` (MultiCoNER layout with POS) and
    /// one `gazetteer/<TYPE>.txt` list per type into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let gaz_dir = dir.join("gazetteer");
        std::fs::create_dir_all(&gaz_dir).map_err(|e| Error::io(&gaz_dir, e))?;
        write_conll_file(&dir.join("train.conll"), &self.train, ConllFormat::MultiConer)?;
        write_conll_file(&dir.join("test.conll"), &self.test, ConllFormat::MultiConer)?;
        for (ty, list) in &self.gazetteer {
            io::write_atomic(&gaz_dir.join(format!("{ty}.txt")), |out| {
                for phrase in list {
                    writeln!(out, "{phrase}").map_err(io::write_err)?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }
}

/// Stand-in encoder output. Every label owns a random direction fixed by
/// `space_seed` and a token's vector is its gold label's direction plus
/// uniform noise in `[-noise, noise]` drawn from `noise_seed`. Splits that
/// share `space_seed` live in the same space.
pub fn embedding_sidecar(
    sentences: &[LabeledSentence],
    layer: i64,
    dim: usize,
    noise: f64,
    space_seed: u64,
    noise_seed: u64,
) -> Result<Sidecar> {
    let mut space = ChaCha8Rng::seed_from_u64(space_seed);
    let centers: Vec<Vec<f64>> = (0..LabelScheme::multiconer().len())
        .map(|_| (0..dim).map(|_| space.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut sidecar = Sidecar::new_embeddings(layer, dim);
    let mut v = vec![0.0; dim];
    for (si, s) in sentences.iter().enumerate() {
        for ti in 0..s.len() {
            let label = s.labels.as_ref().map_or(Label::O, |l| l[ti]);
            for (x, c) in v.iter_mut().zip(&centers[label.index()]) {
                *x = c + rng.gen_range(-noise..=noise);
            }
            sidecar.push_vector(si, ti, &v)?;
        }
    }
    Ok(sidecar)
}

/// Stand-in tagger output: the gold label with probability `accuracy`,
/// otherwise a uniformly drawn wrong one.
pub fn tag_sidecar(sentences: &[LabeledSentence], layer: i64, accuracy: f64, seed: u64) -> Result<Sidecar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = LabelScheme::multiconer().labels().to_vec();
    let mut sidecar = Sidecar::new_tags(layer);
    for (si, s) in sentences.iter().enumerate() {
        for ti in 0..s.len() {
            let gold = s.labels.as_ref().map_or(Label::O, |l| l[ti]);
            let tag = if rng.gen_bool(accuracy) {
                gold
            } else {
                let wrong: Vec<Label> = labels.iter().copied().filter(|&l| l != gold).collect();
                *wrong.choose(&mut rng).expect("more than one label")
            };
            sidecar.push_tag(si, ti, tag)?;
        }
    }
    Ok(sidecar)
}

impl SyntheticData {
    /// Writes `<split>.emb24.sc`, `<split>.emb23.sc` and `<split>.tags.sc`
    /// for both splits.
    pub fn write_sidecars(&self, dir: &Path, dim: usize, seed: u64) -> Result<()> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let (space24, space23): (u64, u64) = (seeds.gen(), seeds.gen());
        for (split, sentences) in [("train", &self.train), ("test", &self.test)] {
            embedding_sidecar(sentences, 24, dim, 0.6, space24, seeds.gen())?
                .save(&dir.join(format!("{split}.emb24.sc")))?;
            embedding_sidecar(sentences, 23, dim, 0.8, space23, seeds.gen())?
                .save(&dir.join(format!("{split}.emb23.sc")))?;
            tag_sidecar(sentences, 24, 0.8, seeds.gen())?.save(&dir.join(format!("{split}.tags.sc")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            sentences: 100,
            phrases: 60,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.gazetteer, b.gazetteer);
    }

    #[test]
    fn held_out_phrases_stay_out_of_training() {
        let data = generate(&small()).unwrap();
        assert_eq!(data.train.len(), 80);
        assert_eq!(data.test.len(), 20);
        assert_eq!(data.held_out.len(), 12);
        let held: HashSet<&str> = data
            .held_out
            .iter()
            .flat_map(|&i| data.phrases[i].tokens.iter().map(String::as_str))
            .collect();
        for s in &data.train {
            assert!(s.tokens.iter().all(|t| !held.contains(t.as_str())));
        }
    }

    #[test]
    fn sentences_are_valid_bio() {
        let data = generate(&small()).unwrap();
        for s in data.train.iter().chain(&data.test) {
            s.validate().unwrap();
            let labels = s.labels.as_ref().unwrap();
            let mut repaired = labels.clone();
            assert_eq!(crate::labels::repair_bio(&mut repaired), 0);
        }
    }

    #[test]
    fn sidecars_cover_every_token() {
        let data = generate(&small()).unwrap();
        let emb = embedding_sidecar(&data.test, 24, 4, 0.5, 1, 2).unwrap();
        let tags = tag_sidecar(&data.test, 24, 1.0, 1).unwrap();
        for (si, s) in data.test.iter().enumerate() {
            for ti in 0..s.len() {
                assert_eq!(emb.vector(si, ti).unwrap().len(), 4);
                assert_eq!(tags.tag(si, ti), Some(s.labels.as_ref().unwrap()[ti]));
            }
        }
    }

    #[test]
    fn every_phrase_is_in_the_trie() {
        let data = generate(&small()).unwrap();
        let trie = data.trie();
        for p in &data.phrases {
            assert!(trie.lookup(&p.text()).contains(p.ty));
        }
    }
}
