use std::collections::BTreeSet;

use proptest::prelude::*;

use gwforest::explore::Stop;
use gwforest::lawspec::parse_law;
use gwforest::leafed::{
    exploration_processes, explore_prefix, sample_leafed_forest, LeafedChild, LeafedForest,
    LeafedLaw,
};
use gwforest::multitype::{sample_multitype_with, MultitypeLaw, SampleOptions, TypeCode};
use gwforest::reduction::{reduce, verify_prop1};
use gwforest::rng;
use gwforest::tree::{lukasiewicz_of, weighted_heights, NodeId, PlanarForest};

/// Builds a depth-first parent array: `picks[i] == 0` starts a new tree,
/// otherwise node `i` hangs below some member of the current ancestor line.
fn parents_from_picks(picks: &[u8]) -> Vec<Option<usize>> {
    let mut parents = Vec::with_capacity(picks.len());
    let mut line: Vec<usize> = Vec::new();
    for (i, &p) in picks.iter().enumerate() {
        if i == 0 || p == 0 {
            parents.push(None);
            line.clear();
        } else {
            let keep = (p as usize - 1) % line.len() + 1;
            line.truncate(keep);
            parents.push(Some(*line.last().unwrap()));
        }
        line.push(i);
    }
    parents
}

fn forest_strategy() -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(0u8..12, 1..200).prop_map(|p| parents_from_picks(&p))
}

fn child_strategy() -> impl Strategy<Value = LeafedChild> {
    (0u8..2, prop::sample::select(vec![0.5, 1.0, 2.0, 3.0]))
        .prop_map(|(b, l)| LeafedChild::new(b, l))
}

/// Enumerated leafed laws with at most three children per outcome.
fn leafed_law_strategy() -> impl Strategy<Value = LeafedLaw> {
    prop::collection::vec(
        (1u32..10, prop::collection::vec(child_strategy(), 0..4)),
        1..4,
    )
    .prop_map(|outcomes| {
        let total: u32 = outcomes.iter().map(|(w, _)| w).sum();
        let outcomes = outcomes
            .into_iter()
            .map(|(w, c)| (w as f64 / total as f64, c))
            .collect();
        LeafedLaw::enumerated(outcomes).unwrap()
    })
}

/// Rules on types 0..4, every type with a rule; the root type is 0.
fn multitype_strategy() -> impl Strategy<Value = MultitypeLaw> {
    let outcome = (1u32..10, prop::collection::vec(0u64..4, 0..4));
    prop::collection::vec(prop::collection::vec(outcome, 1..4), 4).prop_map(|rules| {
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(x, outs)| {
                let total: u32 = outs.iter().map(|(w, _)| w).sum();
                let outs = outs
                    .into_iter()
                    .map(|(w, c)| (w as f64 / total as f64, c))
                    .collect();
                (x as TypeCode, outs)
            })
            .collect();
        MultitypeLaw::rules(rules).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dfs_parents_roundtrip(parents in forest_strategy()) {
        let f = PlanarForest::from_dfs_parents(&parents).unwrap();
        prop_assert_eq!(f.len(), parents.len());
        for (i, p) in parents.iter().enumerate() {
            prop_assert_eq!(f.node_at(i), NodeId(i));
            prop_assert_eq!(f.parent(NodeId(i)).map(|u| u.0), *p);
            let g = p.map_or(0, |p| f.generation(NodeId(p)) + 1);
            prop_assert_eq!(f.generation(NodeId(i)), g);
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        prop_assert_eq!(f.num_trees(), roots);
        let gamma = f.gamma();
        prop_assert!(gamma.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert_eq!(*gamma.last().unwrap(), roots);
        let h = weighted_heights(&f, None).unwrap();
        prop_assert!(h.iter().zip(f.generations()).all(|(&h, g)| h == g as f64));
    }

    #[test]
    fn lukasiewicz_encodes_forest(parents in forest_strategy()) {
        let f = PlanarForest::from_dfs_parents(&parents).unwrap();
        let s = lukasiewicz_of(&f);
        let s = s.steps();
        prop_assert_eq!(s.len(), f.len() + 1);
        prop_assert_eq!(s[0], 0);
        prop_assert_eq!(*s.last().unwrap(), -(f.num_trees() as i64));
        for k in 0..f.len() {
            prop_assert!(s[k + 1] - s[k] >= -1);
            // a new tree starts exactly where S reaches a new minimum
            let fresh = s[..k].iter().all(|&v| v > s[k]) || k == 0;
            prop_assert_eq!(fresh, parents[k].is_none());
        }
    }

    #[test]
    fn running_minima_are_ancestors(parents in forest_strategy(), pick in any::<prop::sample::Index>()) {
        let f = PlanarForest::from_dfs_parents(&parents).unwrap();
        let n = pick.index(f.len());
        let ranks: BTreeSet<usize> = lukasiewicz_of(&f).running_minimum_ranks(n).into_iter().collect();
        let mut expected: BTreeSet<usize> = f.ancestry(NodeId(n)).into_iter().map(|u| f.rank(u)).collect();
        expected.insert(n);
        prop_assert_eq!(ranks, expected);
    }

    #[test]
    fn leafed_exploration_identities(law in leafed_law_strategy(), seed in any::<u64>()) {
        let mut rng = rng::stream(seed, rng::tag::FOREST, 0);
        let f = explore_prefix(&law, 300, &mut rng).unwrap();
        let t = exploration_processes(&f);
        let n = f.len();
        prop_assert_eq!(t.h_ell.len(), n);
        prop_assert_eq!(t.psi.len(), f.bits.iter().filter(|&&b| b == 1).count());
        for i in 0..n {
            let u = f.forest.node_at(i);
            let k = t.phi[i];
            prop_assert!(k <= i);
            prop_assert!(t.psi[k] <= i);
            prop_assert_eq!(t.psi[k] == i, f.bits[u.0] == 1);
            let gap = t.h_ell[i] - t.h_ell[t.psi[k]];
            let expected = if f.bits[u.0] == 0 { f.lengths[u.0] } else { 0.0 };
            prop_assert!((gap - expected).abs() < 1e-12);
            if f.bits[u.0] == 0 {
                prop_assert_eq!(f.forest.num_children(u), 0);
            }
        }
        for (k, &r) in t.psi.iter().enumerate() {
            prop_assert_eq!(t.phi[r], k);
            let one_depth = f.forest.ancestry(f.forest.node_at(r)).len() - 1;
            prop_assert_eq!(t.h_one[k], one_depth);
        }
        prop_assert!(t.psi.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(t.lukasiewicz.len(), t.psi.len() + 1);
    }

    #[test]
    fn reduction_preserves_heights(law in multitype_strategy(), seed in any::<u64>()) {
        let mut rng = rng::stream(seed, rng::tag::FOREST, 0);
        let tree = sample_multitype_with(&law, 0, Stop::Prefix(250), &mut rng, SampleOptions::default()).unwrap();
        let check = verify_prop1(&tree).unwrap();
        prop_assert!(check.holds, "first mismatch at {:?}", check.first_mismatch);
        let reduced = reduce(&tree).unwrap();
        let ones = reduced.leafed.bits.iter().filter(|&&b| b == 1).count();
        let x0s = tree.types.iter().filter(|&&t| t == 0).count();
        prop_assert_eq!(ones, x0s);
        prop_assert_eq!(reduced.leafed.forest.num_trees(), tree.forest.num_trees());
        for (v, &u) in tree.forest.dfs().iter().enumerate() {
            prop_assert_eq!(reduced.leafed.bits[v] == 1, tree.types[u.0] == 0);
        }
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(law in leafed_law_strategy(), seed in any::<u64>()) {
        let mut a = rng::stream(seed, rng::tag::FOREST, 3);
        let mut b = rng::stream(seed, rng::tag::FOREST, 3);
        let fa = explore_prefix(&law, 200, &mut a).unwrap();
        let fb = explore_prefix(&law, 200, &mut b).unwrap();
        prop_assert_eq!(fa.forest.records(), fb.forest.records());
        prop_assert_eq!(fa.bits, fb.bits);
        prop_assert_eq!(fa.lengths, fb.lengths);
    }

    #[test]
    fn leafed_json_matches_constructor(law_children in prop::collection::vec(child_strategy(), 0..4)) {
        let children: Vec<String> = law_children.iter().map(|c| format!("[{}, {:?}]", c.bit, c.length)).collect();
        let json = format!(
            r#"{{"kind": "leafed", "offspring": [{{"p": 0.25, "children": [{}]}}, {{"p": 0.75, "children": []}}]}}"#,
            children.join(", ")
        );
        let parsed = parse_law(&json).unwrap().leafed().unwrap();
        let built = LeafedLaw::enumerated(vec![(0.25, law_children), (0.75, vec![])]).unwrap();
        let mut ra = rng::stream(7, rng::tag::FOREST, 0);
        let mut rb = rng::stream(7, rng::tag::FOREST, 0);
        let fa = explore_prefix(&parsed, 100, &mut ra).unwrap();
        let fb = explore_prefix(&built, 100, &mut rb).unwrap();
        prop_assert_eq!(fa.bits, fb.bits);
        prop_assert_eq!(fa.lengths, fb.lengths);
    }
}

#[test]
fn sterile_law_gives_isolated_roots() {
    let law = LeafedLaw::deterministic(vec![]).unwrap();
    let f = sample_leafed_forest(&law, 5, 1).unwrap();
    assert_eq!(f.forest.num_trees(), 5);
    assert!(f.heights().iter().all(|&h| h == 0.0));
}

#[test]
fn one_type0_child_gives_cherries() {
    let law = LeafedLaw::deterministic(vec![LeafedChild::new(0, 2.0)]).unwrap();
    let f = sample_leafed_forest(&law, 4, 1).unwrap();
    assert_eq!(f.heights(), vec![0.0, 2.0, 0.0, 2.0]);
}

#[test]
fn type0_phi_points_to_parent() {
    let forest = PlanarForest::from_dfs_parents(&[None, Some(0), Some(0)]).unwrap();
    let f = LeafedForest::new(forest, vec![1, 1, 0], vec![0.0, 1.0, 3.0]).unwrap();
    let t = exploration_processes(&f);
    assert_eq!(t.h_ell, vec![0.0, 1.0, 3.0]);
    assert_eq!(t.h_one, vec![0, 1]);
    assert_eq!(t.phi, vec![0, 1, 0]);
    assert_eq!(t.psi, vec![0, 1]);
}
