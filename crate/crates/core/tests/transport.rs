//! Exact transport distances against exhaustive search and metric axioms.

use plantmf::metrics::{m_z, min_cost_assignment, w1_matching, w1_sorted_1d, w2_positions, ZAtom, ZMetricWeights};
use plantmf::PlantTraits;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_atom(rng: &mut ChaCha8Rng) -> ZAtom {
    ZAtom::new(
        rng.random_range(0.05..1.0),
        PlantTraits::new(
            [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
            rng.random_range(0.5..1.0),
            rng.random_range(0.0..2.0),
        ),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(a: &[ZAtom], b: &[ZAtom], w: &ZMetricWeights) -> f64 {
    permutations(a.len())
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| m_z(&a[i], &b[j], w)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / a.len() as f64
}

#[test]
fn permutation_counts() {
    assert_eq!(permutations(3).len(), 6);
    assert_eq!(permutations(6).len(), 720);
}

#[test]
fn matching_equals_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let w = ZMetricWeights::new(0.05, 1.0, 0.5).unwrap();
    for case in 0..200 {
        let n = 1 + case % 6;
        let a: Vec<ZAtom> = (0..n).map(|_| random_atom(&mut rng)).collect();
        let b: Vec<ZAtom> = (0..n).map(|_| random_atom(&mut rng)).collect();
        let exact = w1_matching(&a, &b, &w).unwrap();
        let brute = brute_force(&a, &b, &w);
        assert!((exact - brute).abs() < 1e-12, "case {case} (n={n}): {exact} vs {brute}");
    }
}

#[test]
fn sorted_example_confirmed_by_exhaustion() {
    let vals = |v: &[f64]| -> Vec<ZAtom> { v.iter().map(|&s| ZAtom::new(s, PlantTraits::new([0.0, 0.0], 0.7, 1.0))).collect() };
    let w = ZMetricWeights::new(1.0, 1.0, 1.0).unwrap();
    let brute = brute_force(&vals(&[1.0, 2.0, 3.0]), &vals(&[1.0, 2.0, 4.0]), &w);
    assert!((brute - 1.0 / 3.0).abs() < 1e-15);
    assert!((w1_sorted_1d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - brute).abs() < 1e-15);
}

#[test]
fn assignment_handles_ties_and_large_instances() {
    let n = 60;
    let cost = vec![1.0; n * n];
    let assign = min_cost_assignment(&cost, n).unwrap();
    let mut seen = assign.clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..n).collect::<Vec<_>>());
}

#[test]
fn w2_of_translated_cloud_is_translation_length() {
    let a = [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
    let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + 0.3, p[1] - 0.4]).collect();
    assert!((w2_positions(&a, &b, 10).unwrap() - 0.5).abs() < 1e-14);
}

fn atom_strategy() -> impl Strategy<Value = ZAtom> {
    (0.05f64..1.0, -3.0f64..3.0, -3.0f64..3.0, 0.5f64..1.0, 0.0f64..2.0)
        .prop_map(|(s, x, y, big_s, g)| ZAtom::new(s, PlantTraits::new([x, y], big_s, g)))
}

proptest! {
    #[test]
    fn metric_axioms(a in atom_strategy(), b in atom_strategy(), c in atom_strategy()) {
        let w = ZMetricWeights::new(0.05, 1.0, 0.5).unwrap();
        prop_assert_eq!(m_z(&a, &b, &w), m_z(&b, &a, &w));
        prop_assert_eq!(m_z(&a, &a, &w), 0.0);
        prop_assert!(m_z(&a, &c, &w) <= m_z(&a, &b, &w) + m_z(&b, &c, &w) + 1e-12);
    }

    #[test]
    fn matching_between_coordinate_bounds(
        a in proptest::collection::vec(atom_strategy(), 1..12),
        seed in 0u64..1000,
    ) {
        let w = ZMetricWeights::new(0.05, 1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<ZAtom> = (0..a.len()).map(|_| random_atom(&mut rng)).collect();
        let d = w1_matching(&a, &b, &w).unwrap();
        let identity: f64 = a.iter().zip(&b).map(|(x, y)| m_z(x, y, &w)).sum::<f64>() / a.len() as f64;
        prop_assert!(d <= identity + 1e-12);
        let n = a.len() as f64;
        let mean = |v: &[ZAtom], f: fn(&ZAtom) -> f64| v.iter().map(f).sum::<f64>() / n;
        let lower = (mean(&a, |z| z.size) - mean(&b, |z| z.size)).abs() / w.s_m
            + (mean(&a, |z| z.traits.asymptotic_size) - mean(&b, |z| z.traits.asymptotic_size)).abs() / w.s_m
            + w.tau_r * (mean(&a, |z| z.traits.growth_rate) - mean(&b, |z| z.traits.growth_rate)).abs();
        prop_assert!(d >= lower - 1e-12, "{} < {}", d, lower);
    }
}
