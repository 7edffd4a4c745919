use proptest::prelude::*;

use clir::corpus::BilingualDictionary;
use clir::embeddings::EmbeddingTable;
use clir::projection::{extract_pairs, objective, project, ProjectionMatrix};

fn table(words: &[String], dim: usize) -> EmbeddingTable {
    EmbeddingTable::from_rows(dim, words.iter().map(|w| (w.clone(), vec![1.0; dim]))).unwrap()
}

proptest! {
    #[test]
    fn extraction_matches_triple_loop(
        src_mask in proptest::collection::vec(any::<bool>(), 50),
        tgt_mask in proptest::collection::vec(any::<bool>(), 50),
        entries in proptest::collection::vec((0usize..60, proptest::collection::vec(0usize..60, 1..5)), 1..40),
    ) {
        let src_words: Vec<String> = (0..50).filter(|&i| src_mask[i]).map(|i| format!("s{i}")).collect();
        let tgt_words: Vec<String> = (0..50).filter(|&i| tgt_mask[i]).map(|i| format!("t{i}")).collect();
        prop_assume!(!src_words.is_empty() && !tgt_words.is_empty());
        let mut dict = BilingualDictionary::new();
        for (s, cands) in &entries {
            dict.add(format!("s{s}"), cands.iter().map(|c| format!("t{c}")));
        }
        let src = table(&src_words, 2);
        let tgt = table(&tgt_words, 2);

        let mut expected = Vec::new();
        let mut sorted_src = src_words.clone();
        sorted_src.sort();
        for s in &sorted_src {
            for (d, cands) in dict.iter() {
                if d != s {
                    continue;
                }
                for c in cands {
                    if tgt_words.contains(c) {
                        expected.push((s.clone(), c.clone()));
                    }
                }
            }
        }
        match extract_pairs(&src, &tgt, &dict) {
            Ok(set) => prop_assert_eq!(set.pairs, expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }
}

#[test]
fn doubling_targets_quadruples_objective_at_zero() {
    let src = EmbeddingTable::from_rows(2, [("a", vec![1.0, -2.0]), ("b", vec![0.5, 3.0])]).unwrap();
    let tgt = EmbeddingTable::from_rows(2, [("x", vec![2.0, 1.0]), ("y", vec![-1.0, 4.0])]).unwrap();
    let tgt2 = EmbeddingTable::from_rows(2, [("x", vec![4.0, 2.0]), ("y", vec![-2.0, 8.0])]).unwrap();
    let mut dict = BilingualDictionary::new();
    dict.add("a", ["x"]);
    dict.add("b", ["y", "x"]);
    let pairs = extract_pairs(&src, &tgt, &dict).unwrap();
    let w = ProjectionMatrix::zeros(2);
    let f = objective(&w, &pairs, &src, &tgt).unwrap();
    let f2 = objective(&w, &pairs, &src, &tgt2).unwrap();
    assert!((f2 - 4.0 * f).abs() < 1e-12);
}

#[test]
fn scaled_identity_scales_vectors() {
    let mut w = ProjectionMatrix::identity(3);
    assert_eq!(project(&w, &[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    w = ProjectionMatrix::from_rows(3, vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
    assert_eq!(project(&w, &[1.0, -2.0, 0.5]).unwrap(), vec![2.0, -4.0, 1.0]);
    assert!(project(&w, &[1.0]).is_err());
}
