use std::collections::HashMap;

use proptest::prelude::*;

use gazcrf::gazetteer::{GazetteerFeatures, GazetteerTrie, MatchMode, TagSet};
use gazcrf::EntityType;

const WORDS: &[&str] = &["ঢাকা", "নদী", "রহিম", "ব্যাংক", "গান", "x", "yz"];

fn entity_type() -> impl Strategy<Value = EntityType> {
    (0..6usize).prop_map(|i| EntityType::ALL[i])
}

fn phrase() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(WORDS), 1..=3)
}

fn gazetteer() -> impl Strategy<Value = Vec<(Vec<&'static str>, EntityType)>> {
    prop::collection::vec((phrase(), entity_type()), 0..20)
}

fn build(entries: &[(Vec<&str>, EntityType)]) -> (GazetteerTrie, HashMap<String, TagSet>) {
    let mut trie = GazetteerTrie::new();
    let mut oracle: HashMap<String, TagSet> = HashMap::new();
    for (words, ty) in entries {
        let text = words.join(" ");
        trie.insert(&text, *ty);
        oracle.entry(text).or_default().insert(*ty);
    }
    (trie, oracle)
}

/// Greedy left-to-right selection over every matching span, found by brute
/// force with the hash-map oracle.
fn span_oracle(tokens: &[&str], oracle: &HashMap<String, TagSet>, max_span: usize) -> Vec<TagSet> {
    let mut flags = vec![TagSet::default(); tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let best = (1..=max_span.min(tokens.len() - i))
            .filter_map(|len| oracle.get(&tokens[i..i + len].join(" ")).map(|t| (len, *t)))
            .last();
        match best {
            Some((len, tags)) => {
                flags[i..i + len].iter_mut().for_each(|f| *f = tags);
                i += len;
            }
            None => i += 1,
        }
    }
    flags
}

proptest! {
    #[test]
    fn lookup_matches_oracle(entries in gazetteer(), probes in prop::collection::vec(phrase(), 1..30)) {
        let (trie, oracle) = build(&entries);
        for p in entries.iter().map(|(w, _)| w).chain(&probes) {
            let text = p.join(" ");
            let (tags, steps) = trie.lookup_counted(&text);
            prop_assert_eq!(tags, oracle.get(&text).copied().unwrap_or_default());
            prop_assert!(steps <= text.chars().count() + 1);
        }
        prop_assert_eq!(trie.entries().len(), oracle.len());
    }

    #[test]
    fn per_token_flags_are_lookups(entries in gazetteer(), tokens in prop::collection::vec(prop::sample::select(WORDS), 0..10)) {
        let (trie, _) = build(&entries);
        let flags = trie.sentence_flags(&tokens, MatchMode::PerToken);
        let expected: Vec<GazetteerFeatures> = tokens.iter().map(|t| GazetteerFeatures(trie.lookup(t))).collect();
        prop_assert_eq!(flags, expected);
    }

    #[test]
    fn longest_span_matches_brute_force(
        entries in gazetteer(),
        tokens in prop::collection::vec(prop::sample::select(WORDS), 0..=8),
        max_span in 1usize..=5,
    ) {
        let (trie, oracle) = build(&entries);
        let got: Vec<TagSet> = trie
            .sentence_flags(&tokens, MatchMode::LongestSpan { max_span })
            .into_iter()
            .map(|f| f.0)
            .collect();
        prop_assert_eq!(got, span_oracle(&tokens, &oracle, max_span));
    }

    #[test]
    fn binary_round_trip(entries in gazetteer()) {
        let (trie, _) = build(&entries);
        let bytes = trie.to_bytes();
        let back = GazetteerTrie::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.entries(), trie.entries());
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}
