//! Randomized property tests for the pure kernels.

use proptest::prelude::*;

use gascom::embed::{mean_pool, tokenize, ToyProvider};
use gascom::graph::{parse_discussions, Discussion, Label, NodeId, PostNode};
use gascom::metrics::{compute_metrics, Prediction};
use gascom::tensor::Matrix;
use gascom::walks::normalize_scores;

fn finite_score() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0f64..1.0,       // cosine range
        -1e6f64..1e6,       // wild but finite
        Just(0.0),
        Just(-0.5),
    ]
}

proptest! {
    #[test]
    fn normalize_scores_is_a_distribution(raw in prop::collection::vec(finite_score(), 1..12)) {
        let p = normalize_scores(&raw);
        prop_assert_eq!(p.len(), raw.len());
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for &x in &p {
            prop_assert!(x > 0.0 && x <= 1.0);
        }
    }

    #[test]
    fn normalize_scores_preserves_order_of_positive_scores(
        raw in prop::collection::vec(0.01f64..10.0, 2..8)
    ) {
        let p = normalize_scores(&raw);
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                if raw[i] > raw[j] {
                    prop_assert!(p[i] > p[j]);
                }
            }
        }
    }

    #[test]
    fn mean_pool_is_row_permutation_invariant(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..6),
        seed in 0u64..1000
    ) {
        let m = Matrix::from_rows(&rows);
        let a = mean_pool(&m);
        let mut shuffled = rows.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = mean_pool(&Matrix::from_rows(&shuffled));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tokenize_respects_t_max_and_is_deterministic(
        text in "[a-z ,.!]{0,60}",
        t_max in 1usize..16
    ) {
        let a = tokenize(&text, t_max);
        let b = tokenize(&text, t_max);
        prop_assert_eq!(&a.tokens, &b.tokens);
        prop_assert!(a.len() <= t_max);
        // truncation is a prefix of the untruncated stream
        let full = tokenize(&text, 1 << 20);
        prop_assert_eq!(&a.tokens[..], &full.tokens[..a.len().min(full.len())]);
    }

    #[test]
    fn toy_vectors_are_stable_and_bounded(seed in 0u64..500, token in 0u32..70000, d in 1usize..32) {
        let p = ToyProvider::new(seed, d);
        let a = p.base_vector(token);
        let b = p.base_vector(token);
        prop_assert_eq!(&a, &b);
        let bound = (3.0 / d as f64).sqrt();
        for &x in &a {
            prop_assert!(x.abs() <= bound);
        }
    }

    #[test]
    fn discussion_json_round_trip(n in 1usize..7, seed in 0u64..500) {
        // random parent pointers to earlier nodes always form a tree
        let mut s = seed;
        let mut nodes = Vec::new();
        for i in 0..n {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let parent = if i == 0 { None } else { Some(format!("p{}", (s >> 33) as usize % i)) };
            nodes.push(PostNode {
                id: NodeId::new(format!("p{i}")),
                parent: parent.map(NodeId::new),
                text: format!("post number {i}"),
                label: if i % 2 == 0 { Some(Label::Pos) } else { None },
            });
        }
        let d = Discussion::new("rt".into(), nodes).unwrap();
        let line = d.to_json_line();
        let parsed = parse_discussions(line.as_bytes()).unwrap();
        prop_assert_eq!(parsed.len(), 1);
        prop_assert_eq!(parsed[0].to_json_line(), line);
    }

    #[test]
    fn metrics_permutation_invariant(
        bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..20),
        rotate in 0usize..20
    ) {
        // distinct scores that travel with their example: with exact score
        // ties, PR-AUC ranking falls back to stable input order and is
        // legitimately order-sensitive
        let n = bits.len() as f64;
        let preds: Vec<Prediction> = bits
            .iter()
            .enumerate()
            .map(|(i, &(p, a))| Prediction {
                predicted: if p { Label::Pos } else { Label::Neg },
                actual: if a { Label::Pos } else { Label::Neg },
                pos_prob: (i as f64 + if p { 0.7 } else { 0.3 }) / (n + 1.0),
            })
            .collect();
        let mut rotated = preds.clone();
        rotated.rotate_left(rotate % preds.len().max(1));
        let a = compute_metrics(&preds);
        let b = compute_metrics(&rotated);
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.pr_auc - b.pr_auc).abs() < 1e-12);
    }
}
