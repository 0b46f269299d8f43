mod common;

use irtree_fuzzy::tree::{reconstruct, validate_tree, TreeError, TreeLabels};
use irtree_fuzzy::{builtin_tree, expand, BuiltinTree, Ratings, TreeSpec};
use proptest::prelude::*;
use rand::RngExt;

use common::{brute_force_probabilities, random_tree, rng};

fn codes(tree: &TreeSpec) -> Vec<Vec<Option<i64>>> {
    tree.map().iter().map(|r| r.iter().map(|e| e.map(i64::from)).collect()).collect()
}

#[test]
fn builtins_are_valid_with_expected_maps() {
    for kind in [BuiltinTree::Linear3, BuiltinTree::Nested5, BuiltinTree::SixSchema1, BuiltinTree::SixSchema2] {
        validate_tree(&builtin_tree(kind)).unwrap();
    }
    let lin = builtin_tree(BuiltinTree::Linear3);
    assert_eq!(codes(&lin), vec![vec![Some(0), None], vec![Some(1), Some(0)], vec![Some(1), Some(1)]]);
    assert_eq!(lin.labels().category_base, 0);

    let nested = builtin_tree(BuiltinTree::Nested5);
    let want: Vec<Vec<Option<i64>>> = vec![
        vec![Some(1), Some(0), Some(0), None],
        vec![Some(1), Some(0), Some(1), None],
        vec![Some(0), None, None, None],
        vec![Some(1), Some(1), None, Some(0)],
        vec![Some(1), Some(1), None, Some(1)],
    ];
    assert_eq!(codes(&nested), want);
    assert_eq!((nested.n_categories(), nested.n_nodes()), (5, 4));
    for kind in [BuiltinTree::SixSchema1, BuiltinTree::SixSchema2] {
        let t = builtin_tree(kind);
        assert_eq!((t.n_categories(), t.n_nodes()), (6, 5));
    }
}

#[test]
fn structural_errors() {
    let dup = TreeSpec::new(vec![vec![Some(true), None], vec![Some(true), None]]);
    assert!(matches!(dup, Err(TreeError::DuplicatePath { first: 1, second: 2 })));
    let empty = TreeSpec::new(vec![vec![None, None], vec![Some(true), None], vec![Some(false), None]]);
    assert!(matches!(empty, Err(TreeError::EmptyRow { category: 1 })));
    let bad = TreeSpec::from_codes(&[vec![Some(0), None], vec![Some(1), Some(2)]], TreeLabels::default());
    assert!(matches!(bad, Err(TreeError::BadEntry { .. })));
    // a prefix of another path is compatible with it, so the category is ambiguous
    let prefix = TreeSpec::new(vec![vec![Some(true), None], vec![Some(true), Some(false)], vec![Some(false), None]]);
    assert!(matches!(prefix, Err(TreeError::DuplicatePath { .. })));
    let incomplete = TreeSpec::new(vec![vec![Some(false), None], vec![Some(true), Some(false)]]);
    assert!(matches!(incomplete, Err(TreeError::IncompleteTree { .. })));
}

#[test]
fn linear3_probabilities_at_zero() {
    let t = builtin_tree(BuiltinTree::Linear3);
    assert_eq!(t.category_probabilities(&[0.0, 0.0], &[0.0, 0.0]), vec![0.5, 0.25, 0.25]);
    let p = t.category_probabilities(&[40.0, 0.0], &[0.0, 0.0]);
    assert!(p[0] < 1e-17);
}

#[test]
fn single_cell_expansions() {
    let t = builtin_tree(BuiltinTree::Linear3);
    let e = expand(&Ratings::from_rows(&[vec![2]]), &t).unwrap();
    let got: Vec<_> = e.rows.iter().map(|r| (r.person, r.item, r.node, r.z)).collect();
    assert_eq!(got, vec![(0, 0, 0, true), (0, 0, 1, true)]);
    let e = expand(&Ratings::from_rows(&[vec![0]]), &t).unwrap();
    let got: Vec<_> = e.rows.iter().map(|r| (r.node, r.z)).collect();
    assert_eq!(got, vec![(0, false)]);
    assert!(matches!(
        expand(&Ratings::from_rows(&[vec![3]]), &t),
        Err(TreeError::OutOfRangeCategory { value: 3, lo: 0, hi: 2, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn probabilities_match_enumeration(seed in any::<u64>(), m in 2usize..9) {
        let mut r = rng(seed);
        let tree = random_tree(&mut r, m);
        let eta: Vec<f64> = (0..tree.n_nodes()).map(|_| r.random_range(-4.0..4.0)).collect();
        let alpha: Vec<f64> = (0..tree.n_nodes()).map(|_| r.random_range(-4.0..4.0)).collect();
        let p = tree.category_probabilities(&eta, &alpha);
        let logits: Vec<f64> = eta.iter().zip(&alpha).map(|(a, b)| a + b).collect();
        let oracle = brute_force_probabilities(&tree, &logits);
        for (a, b) in p.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expansion_round_trips(seed in any::<u64>(), m in 2usize..7, persons in 1usize..12, items in 1usize..6) {
        let mut r = rng(seed);
        let tree = random_tree(&mut r, m);
        let values: Vec<Option<i64>> = (0..persons * items)
            .map(|_| (r.random::<f64>() > 0.2).then(|| r.random_range(1..=m as i64)))
            .collect();
        let ratings = Ratings::new(
            (0..persons).map(|i| format!("p{i}")).collect(),
            (0..items).map(|j| format!("i{j}")).collect(),
            values.clone(),
        );
        let e = expand(&ratings, &tree).unwrap();
        let expected_rows: usize = values
            .iter()
            .flatten()
            .map(|&y| tree.map()[(y - 1) as usize].iter().filter(|x| x.is_some()).count())
            .sum();
        prop_assert_eq!(e.rows.len(), expected_rows);
        let back = reconstruct(&e, &tree);
        let flat: Vec<Option<i64>> = back.into_iter().flatten().collect();
        prop_assert_eq!(flat, values);
    }

    #[test]
    fn json_round_trips(seed in any::<u64>(), m in 2usize..8) {
        let tree = random_tree(&mut rng(seed), m);
        prop_assert_eq!(TreeSpec::from_json(&tree.to_json()).unwrap(), tree);
    }
}
