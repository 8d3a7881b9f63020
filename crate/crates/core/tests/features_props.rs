use std::collections::BTreeSet;

use proptest::prelude::*;

use gazcrf::corpus::LabeledSentence;
use gazcrf::features::{featurize, gazetteer_flag_names, ClusterSource, FeaturizedCorpus, Preset, Resources};
use gazcrf::gazetteer::{GazetteerTrie, MatchMode};
use gazcrf::quantize::{kmeans_fit, ClusterModel, KMeansConfig};
use gazcrf::sidecar::Sidecar;
use gazcrf::synthetic::{embedding_sidecar, generate, tag_sidecar, SyntheticConfig};
use gazcrf::EntityType;

struct Fixture {
    sentences: Vec<LabeledSentence>,
    trie: GazetteerTrie,
    emb24: Sidecar,
    emb23: Sidecar,
    tags: Sidecar,
    km24: ClusterModel,
    km23: ClusterModel,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let data = generate(&SyntheticConfig {
            sentences: 40,
            phrases: 30,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let sentences = data.train.clone();
        let emb24 = embedding_sidecar(&sentences, 24, 4, 0.3, seed, seed + 1).unwrap();
        let emb23 = embedding_sidecar(&sentences, 23, 4, 0.3, seed + 2, seed + 3).unwrap();
        let tags = tag_sidecar(&sentences, -1, 0.8, seed).unwrap();
        let fit = |sc: &Sidecar, layer| {
            let vs: Vec<Vec<f64>> = sc.vectors().map(<[f64]>::to_vec).collect();
            kmeans_fit(&vs, &KMeansConfig { layer, ..KMeansConfig::new(5, seed) }).unwrap().model
        };
        Self {
            km24: fit(&emb24, 24),
            km23: fit(&emb23, 23),
            trie: data.trie(),
            sentences,
            emb24,
            emb23,
            tags,
        }
    }

    fn resources(&self) -> Resources<'_> {
        Resources {
            gazetteer: Some(&self.trie),
            match_mode: MatchMode::PerToken,
            stopwords: None,
            kmeans24: Some(ClusterSource { model: &self.km24, embeddings: &self.emb24 }),
            kmeans23: Some(ClusterSource { model: &self.km23, embeddings: &self.emb23 }),
            predicted_tags: Some(&self.tags),
            raw_embeddings: Some(&self.emb24),
        }
    }
}

#[test]
fn larger_presets_emit_supersets() {
    let fx = Fixture::new(5);
    let res = fx.resources();
    let feats: Vec<_> = Preset::ALL.iter().map(|&p| featurize(&fx.sentences, p, &res).unwrap()).collect();
    let mut pairs = 0;
    for (i, &p) in Preset::ALL.iter().enumerate() {
        for (j, &q) in Preset::ALL.iter().enumerate() {
            if i == j || !p.groups().iter().all(|&g| q.enables(g)) {
                continue;
            }
            pairs += 1;
            for (sp, sq) in feats[i].iter().zip(&feats[j]) {
                for (fp, fq) in sp.iter().zip(sq) {
                    let small: BTreeSet<&str> = fp.names().collect();
                    let big: BTreeSet<&str> = fq.names().collect();
                    assert!(small.is_subset(&big), "preset {p} not contained in {q}");
                }
            }
        }
    }
    assert!(pairs > 0);
}

#[test]
fn featurize_is_deterministic() {
    let fx = Fixture::new(9);
    let res = fx.resources();
    for p in Preset::ALL {
        assert_eq!(featurize(&fx.sentences, p, &res).unwrap(), featurize(&fx.sentences, p, &res).unwrap());
    }
}

#[test]
fn feature_file_round_trip() {
    let fx = Fixture::new(11);
    let res = fx.resources();
    for p in Preset::ALL {
        let corpus = FeaturizedCorpus::build(&fx.sentences, p, &res).unwrap();
        let mut buf = Vec::new();
        corpus.write(&mut buf).unwrap();
        assert_eq!(FeaturizedCorpus::parse(buf.as_slice()).unwrap(), corpus);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gazetteer_flags_follow_neighbors(seed in 0u64..1000) {
        let fx = Fixture::new(seed);
        let res = fx.resources();
        let feats = featurize(&fx.sentences, Preset::D, &res).unwrap();
        let names = gazetteer_flag_names();
        for (s, fs) in fx.sentences.iter().zip(&feats) {
            let flags = fx.trie.sentence_flags(&s.tokens, MatchMode::PerToken);
            for (i, fv) in fs.iter().enumerate() {
                for o in -2isize..=2 {
                    let j = i as isize + o;
                    for (k, ty) in EntityType::ALL.iter().enumerate() {
                        let name = if o == 0 { names[k].to_string() } else { format!("{}[{o:+}]", names[k]) };
                        let expect = (0..s.len() as isize).contains(&j) && flags[j as usize].0.contains(*ty);
                        prop_assert_eq!(fv.contains(&name), expect, "{} at {}", name, i);
                    }
                }
            }
        }
    }
}
