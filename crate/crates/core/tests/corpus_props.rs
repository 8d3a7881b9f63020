use std::collections::BTreeMap;

use proptest::prelude::*;

use gazcrf::corpus::{
    class_weights_with_n, clean_corpus, corpus_stats, parse_conll, write_conll, ConllFormat, LabeledSentence,
};
use gazcrf::labels::repair_bio;
use gazcrf::{Label, LabelScheme};

fn label() -> impl Strategy<Value = Label> {
    (0..LabelScheme::multiconer().len()).prop_map(|i| Label::from_index(i).unwrap())
}

fn token() -> impl Strategy<Value = String> {
    "[কখগাি.,!#a-z0-9]{1,6}"
}

fn sentence() -> impl Strategy<Value = LabeledSentence> {
    (1..10usize)
        .prop_flat_map(|n| {
            (
                "[a-z0-9-]{1,8}",
                prop::collection::vec(token(), n),
                prop::collection::vec(label(), n),
                prop::option::of(prop::collection::vec("[A-Z]{2,3}", n)),
            )
        })
        .prop_map(|(id, tokens, mut labels, pos)| {
            repair_bio(&mut labels);
            LabeledSentence {
                id,
                tokens,
                pos,
                labels: Some(labels),
            }
        })
}

fn round_trip(sentences: &[LabeledSentence], format: ConllFormat) -> Vec<LabeledSentence> {
    let mut buf = Vec::new();
    write_conll(&mut buf, sentences, format).unwrap();
    parse_conll(buf.as_slice(), format).unwrap()
}

proptest! {
    #[test]
    fn multiconer_round_trip(sentences in prop::collection::vec(sentence(), 1..8)) {
        let back = round_trip(&sentences, ConllFormat::MultiConer);
        prop_assert_eq!(&back, &sentences);
        prop_assert_eq!(round_trip(&back, ConllFormat::MultiConer), back);
    }

    #[test]
    fn two_col_round_trip(sentences in prop::collection::vec(sentence(), 1..8)) {
        let expected: Vec<LabeledSentence> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledSentence { id: i.to_string(), pos: None, ..s.clone() })
            .collect();
        prop_assert_eq!(round_trip(&sentences, ConllFormat::TwoCol), expected);
    }

    #[test]
    fn clean_is_idempotent(sentences in prop::collection::vec(sentence(), 1..8)) {
        let once = clean_corpus(&sentences);
        prop_assert_eq!(clean_corpus(&once), once);
    }

    #[test]
    fn mentions_equal_b_tokens(sentences in prop::collection::vec(sentence(), 1..8)) {
        let stats = corpus_stats(&sentences).unwrap();
        let b_tokens = sentences
            .iter()
            .flat_map(|s| s.labels.as_ref().unwrap())
            .filter(|l| matches!(l, Label::B(_)))
            .count() as u64;
        prop_assert_eq!(stats.total_mentions(), b_tokens);
        let tokens: usize = sentences.iter().map(LabeledSentence::len).sum();
        prop_assert_eq!(stats.total_tokens, tokens as u64);
    }

    #[test]
    fn raw_weight_non_increasing_in_count(
        counts in prop::collection::vec(0u64..10_000, 2..13),
        n in 1usize..14,
    ) {
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0);
        let map: BTreeMap<usize, u64> = counts.iter().copied().enumerate().collect();
        let w = class_weights_with_n(&map, n, 0.01).unwrap();
        let mut by_count: Vec<(u64, f64)> = map.iter().map(|(k, &c)| (c, w.weights[k].raw)).collect();
        by_count.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in by_count.windows(2) {
            prop_assert!(pair[1].1 <= pair[0].1);
        }
        for (k, &c) in &map {
            if c == 0 {
                prop_assert_eq!(w.weights[k].raw, 10.0);
            }
        }
    }
}
