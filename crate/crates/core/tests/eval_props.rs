use proptest::prelude::*;

use gazcrf::corpus::LabeledSentence;
use gazcrf::eval::{evaluate, EvalMode};
use gazcrf::labels::repair_bio;
use gazcrf::Label;

fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec((0usize..13).prop_map(|i| Label::from_index(i).unwrap()), n).prop_map(|mut l| {
        repair_bio(&mut l);
        l
    })
}

fn pair() -> impl Strategy<Value = Vec<(Vec<Label>, Vec<Label>)>> {
    prop::collection::vec((1usize..10).prop_flat_map(|n| (labels(n), labels(n))), 1..8)
}

fn corpus(rows: &[Vec<Label>]) -> Vec<LabeledSentence> {
    rows.iter()
        .enumerate()
        .map(|(i, l)| LabeledSentence {
            id: i.to_string(),
            tokens: vec!["w".to_string(); l.len()],
            pos: None,
            labels: Some(l.clone()),
        })
        .collect()
}

fn split(rows: &[(Vec<Label>, Vec<Label>)]) -> (Vec<LabeledSentence>, Vec<LabeledSentence>) {
    let gold: Vec<_> = rows.iter().map(|r| r.0.clone()).collect();
    let pred: Vec<_> = rows.iter().map(|r| r.1.clone()).collect();
    (corpus(&gold), corpus(&pred))
}

proptest! {
    #[test]
    fn self_score_is_perfect(rows in pair()) {
        let (gold, _) = split(&rows);
        for mode in [EvalMode::Token, EvalMode::Entity] {
            let r = evaluate(&gold, &gold, mode).unwrap();
            for m in r.per_class.values() {
                prop_assert_eq!(m.f1, 1.0);
            }
            if !r.per_class.is_empty() {
                prop_assert_eq!(r.macro_f1, 1.0);
                prop_assert_eq!(r.micro_f1, 1.0);
            }
        }
    }

    #[test]
    fn sentence_order_does_not_matter(rows in pair()) {
        let (gold, pred) = split(&rows);
        let mut rev = rows.clone();
        rev.reverse();
        let (gold_r, pred_r) = split(&rev);
        for mode in [EvalMode::Token, EvalMode::Entity] {
            let a = evaluate(&gold, &pred, mode).unwrap();
            let b = evaluate(&gold_r, &pred_r, mode).unwrap();
            prop_assert_eq!(a.per_class, b.per_class);
            prop_assert_eq!(a.macro_f1, b.macro_f1);
        }
    }

    #[test]
    fn token_micro_f1_is_accuracy(rows in pair()) {
        let (gold, pred) = split(&rows);
        let r = evaluate(&gold, &pred, EvalMode::Token).unwrap();
        let (hit, total) = rows.iter().flat_map(|(g, p)| g.iter().zip(p)).fold((0, 0), |(h, t), (g, p)| {
            (h + usize::from(g == p), t + 1)
        });
        prop_assert!((r.micro_f1 - hit as f64 / total as f64).abs() < 1e-12);
    }

    #[test]
    fn scores_are_probabilities(rows in pair()) {
        let (gold, pred) = split(&rows);
        let r = evaluate(&gold, &pred, EvalMode::Entity).unwrap();
        for m in r.per_class.values() {
            prop_assert!((0.0..=1.0).contains(&m.precision));
            prop_assert!((0.0..=1.0).contains(&m.recall));
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
        prop_assert!((0.0..=1.0).contains(&r.macro_f1));
    }
}
