mod common;

use std::collections::BTreeSet;

use common::rng;
use demud::eval::{choose_t, discovery_curve, nauc, random_baseline, DiscoveryCurve, LabelMap};
use demud::selectors::random_rank;
use demud::{Error, FeatureKind, FeatureMatrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// All orderings of `items`.
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn oracle_curve(labels: &[&str]) -> Vec<usize> {
    (1..=labels.len())
        .map(|i| labels[..i].iter().collect::<BTreeSet<_>>().len())
        .collect()
}

fn two_by_two() -> (LabelMap, [&'static str; 4]) {
    let classes = ["A", "A", "B", "B"];
    let labels = LabelMap::from_pairs((0..4).map(|i| (format!("i{i}"), classes[i]))).unwrap();
    (labels, classes)
}

#[test]
fn two_by_two_baseline_matches_enumeration() {
    let (labels, classes) = two_by_two();
    // every ordering of the four items is equally likely
    let perms = permutations(&[0, 1, 2, 3]);
    let exact: f64 = perms
        .iter()
        .map(|p| {
            let seq: Vec<&str> = p.iter().map(|&i| classes[i]).collect();
            let area: usize = oracle_curve(&seq).iter().sum();
            // perfect area for c = 2, t = 4 is 1 + 2 + 2 + 2
            area as f64 / 7.0 * 100.0
        })
        .sum::<f64>()
        / perms.len() as f64;
    assert!((exact - 4000.0 / 42.0).abs() < 1e-12);

    let stats = random_baseline(&labels, 4, 1000, 17).unwrap();
    assert!((stats.mean - exact).abs() <= 1.5, "{stats:?}");
    assert_eq!(stats, random_baseline(&labels, 4, 1000, 17).unwrap());

    let covers: Vec<usize> = perms
        .iter()
        .map(|p| {
            let seq: Vec<&str> = p.iter().map(|&i| classes[i]).collect();
            oracle_curve(&seq).iter().position(|&c| c == 2).unwrap() + 1
        })
        .collect();
    let expected_cover = covers.iter().sum::<usize>() as f64 / covers.len() as f64;
    assert!((expected_cover - 7.0 / 3.0).abs() < 1e-12);
    assert_eq!(choose_t(&labels, 300, 1000, 17), expected_cover.ceil() as usize);
}

#[test]
fn hand_curve() {
    let c = DiscoveryCurve {
        counts: vec![1, 1, 2, 3, 3],
        classes: 3,
    };
    assert!((nauc(&c) - 1000.0 / 12.0).abs() <= 1e-9);
}

#[test]
fn baseline_mean_settles_with_more_trials() {
    let classes = ["a", "a", "a", "a", "a", "a", "b", "b", "b", "c", "c", "d"];
    let labels = LabelMap::from_pairs(classes.iter().enumerate().map(|(i, c)| (i.to_string(), *c))).unwrap();
    let small = random_baseline(&labels, 8, 1000, 3).unwrap();
    let large = random_baseline(&labels, 8, 2000, 3).unwrap();
    let stderr = small.std / (1000f64).sqrt();
    assert!((small.mean - large.mean).abs() < 3.0 * stderr, "{small:?} {large:?}");
    assert!(small.std > 0.0);
}

#[test]
fn random_ranking_curve_matches_recount() {
    // heavily imbalanced classes, as in a rover image archive
    let sizes = [("ground", 120), ("sky", 40), ("wheel", 15), ("drill", 6), ("cal", 2), ("meteor", 1)];
    let mut pairs = Vec::new();
    for (label, count) in sizes {
        for _ in 0..count {
            pairs.push((format!("img{:03}", pairs.len()), label));
        }
    }
    pairs.shuffle(&mut rng(4));
    let labels = LabelMap::from_pairs(pairs.clone()).unwrap();
    let rows: Vec<Vec<f64>> = (0..pairs.len()).map(|i| vec![i as f64]).collect();
    let ids: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
    let x = FeatureMatrix::new(ids, rows.concat(), 1, FeatureKind::Generic).unwrap();
    for seed in 0..5 {
        let ranking = random_rank(&x, seed, x.n_items()).unwrap();
        let curve = discovery_curve(&ranking, &labels, 100).unwrap();
        let seq: Vec<&str> = ranking.records[..100].iter().map(|r| labels.get(&r.item_id).unwrap()).collect();
        assert_eq!(curve.counts, oracle_curve(&seq));
        assert_eq!(curve.classes, 6);
    }
}

#[test]
fn curve_errors() {
    let (labels, _) = two_by_two();
    let x = FeatureMatrix::new(
        vec!["i0".into(), "stranger".into()],
        vec![0.0, 1.0],
        1,
        FeatureKind::Generic,
    )
    .unwrap();
    let ranking = random_rank(&x, 0, 2).unwrap();
    assert!(matches!(discovery_curve(&ranking, &labels, 3), Err(Error::InvalidArgument(_))));
    assert!(matches!(discovery_curve(&ranking, &labels, 0), Err(Error::InvalidArgument(_))));
    match discovery_curve(&ranking, &labels, 2) {
        Err(Error::MissingLabel(id)) => assert_eq!(id, "stranger"),
        other => panic!("{other:?}"),
    }
}

/// A valid discovery curve of length `t` over `c` classes.
fn curve_strategy() -> impl Strategy<Value = (Vec<usize>, usize)> {
    (1usize..8, 1usize..30).prop_flat_map(|(c, t)| {
        (proptest::collection::vec(any::<bool>(), t), Just(c)).prop_map(move |(steps, c)| {
            let mut counts = Vec::with_capacity(t);
            let mut k = 0;
            for (i, up) in steps.into_iter().enumerate() {
                if k == 0 || (up && k < c && k < i + 1) {
                    k += 1;
                }
                counts.push(k);
            }
            (counts, c)
        })
    })
}

proptest! {
    #[test]
    fn nauc_is_bounded_and_monotone((counts, c) in curve_strategy(), bumps in proptest::collection::vec(any::<bool>(), 30)) {
        let t = counts.len();
        let base = nauc(&DiscoveryCurve { counts: counts.clone(), classes: c });
        prop_assert!(base > 0.0 && base <= 100.0 + 1e-12);

        let perfect: Vec<usize> = (1..=t).map(|i| i.min(c)).collect();
        let is_perfect = counts == perfect;
        prop_assert_eq!(base == 100.0, is_perfect);

        // raise the curve pointwise while keeping it valid
        let mut higher = counts.clone();
        for i in 0..t {
            if bumps[i] && higher[i] < perfect[i] {
                for j in i..t {
                    higher[j] = (higher[j] + 1).min(perfect[j]);
                }
            }
        }
        let raised = nauc(&DiscoveryCurve { counts: higher, classes: c });
        prop_assert!(raised >= base);
    }
}
