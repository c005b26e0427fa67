//! Independent checks of the spectral code: a brute-force elementary-cycle
//! oracle in exact rational arithmetic, a second solver (Karp) against the
//! policy iteration, algebraic laws, and a hand-expanded matrix product.
//!
//! Random weights are dyadic rationals so that every intermediate f64 value
//! in the library is exact and comparisons against the oracle are sharp.

use metroflux::{
    generalized_eigenpair, karp_cycle_mean, max_cycle_mean, EigenOutcome, EventGraph,
    MaxPlusError, Mp, PolyMatrix,
};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random event graph with dyadic rational weights (returned alongside).
fn random_graph(rng: &mut ChaCha8Rng) -> (EventGraph, Vec<Ratio<i64>>) {
    let n = rng.gen_range(1..=8);
    let mut g = EventGraph::new(n);
    let mut rw = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.gen_bool(0.28) {
                let den = [1i64, 2, 4][rng.gen_range(0..3)];
                let num = rng.gen_range(-50..=200);
                let w = Ratio::new(num, den);
                let dur = rng.gen_range(0..=3);
                g.add(i, j, w.to_f64().unwrap(), dur);
                rw.push(w);
            }
        }
    }
    (g, rw)
}

fn zero_subgraph_has_cycle(g: &EventGraph) -> bool {
    // DFS with colors over zero-duration arcs only.
    let mut color = vec![0u8; g.n];
    fn dfs(v: usize, g: &EventGraph, color: &mut [u8]) -> bool {
        color[v] = 1;
        for a in &g.arcs {
            if a.dur == 0 && a.from == v {
                match color[a.to] {
                    1 => return true,
                    0 => {
                        if dfs(a.to, g, color) {
                            return true;
                        }
                    }
                    _ => {}
                }
            }
        }
        color[v] = 2;
        false
    }
    for v in 0..g.n {
        if color[v] == 0 && dfs(v, g, &mut color) {
            return true;
        }
    }
    false
}

/// Exact maximum cycle mean by enumerating every elementary cycle.
/// Assumes the zero-duration subgraph is acyclic, so every elementary cycle
/// has positive total duration.
fn oracle_max_mean(g: &EventGraph, rw: &[Ratio<i64>]) -> Option<Ratio<i64>> {
    let mut best: Option<Ratio<i64>> = None;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for (ai, a) in g.arcs.iter().enumerate() {
        out[a.from].push(ai);
    }
    // Cycles are rooted at their minimal node to enumerate each once.
    fn dfs(
        v: usize,
        root: usize,
        g: &EventGraph,
        out: &[Vec<usize>],
        rw: &[Ratio<i64>],
        on_path: &mut Vec<bool>,
        path: &mut Vec<usize>,
        best: &mut Option<Ratio<i64>>,
    ) {
        for &ai in &out[v] {
            let t = g.arcs[ai].to;
            if t == root {
                let wsum: Ratio<i64> = path.iter().map(|&a| rw[a]).sum::<Ratio<i64>>() + rw[ai];
                let dsum: i64 = path.iter().map(|&a| g.arcs[a].dur).sum::<i64>() + g.arcs[ai].dur;
                assert!(dsum > 0, "elementary cycle with zero duration");
                let mean = wsum / Ratio::from_integer(dsum);
                if best.map_or(true, |b| mean > b) {
                    *best = Some(mean);
                }
            } else if t > root && !on_path[t] {
                on_path[t] = true;
                path.push(ai);
                dfs(t, root, g, out, rw, on_path, path, best);
                path.pop();
                on_path[t] = false;
            }
        }
    }
    for root in 0..g.n {
        let mut on_path = vec![false; g.n];
        on_path[root] = true;
        let mut path = Vec::new();
        dfs(root, root, g, &out, rw, &mut on_path, &mut path, &mut best);
    }
    best
}

#[test]
fn cycle_mean_matches_rational_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut checked = 0;
    while checked < 250 {
        let (g, rw) = random_graph(&mut rng);
        if zero_subgraph_has_cycle(&g) {
            assert!(
                matches!(max_cycle_mean(&g), Err(MaxPlusError::ZeroDurationCycle(_))),
                "implicit system must be rejected"
            );
            continue;
        }
        let oracle = oracle_max_mean(&g, &rw);
        match (max_cycle_mean(&g), oracle) {
            (Err(MaxPlusError::NoCycle), None) => {}
            (Ok(cm), Some(exact)) => {
                // Witness promoted to rationals must hit the exact optimum.
                let wsum: Ratio<i64> = cm.cycle.iter().map(|&a| rw[a]).sum();
                let dsum: i64 = cm.cycle.iter().map(|&a| g.arcs[a].dur).sum();
                let witness_mean = wsum / Ratio::from_integer(dsum);
                assert_eq!(witness_mean, exact, "witness cycle is not optimal");
                assert!((cm.mu - exact.to_f64().unwrap()).abs() < 1e-9);
                // Witness must be elementary: no node repeats.
                let mut nodes: Vec<usize> = cm.cycle.iter().map(|&a| g.arcs[a].from).collect();
                nodes.sort_unstable();
                nodes.dedup();
                assert_eq!(nodes.len(), cm.cycle.len(), "witness is not elementary");
                checked += 1;
            }
            (lib, oracle) => panic!("solver and oracle disagree: {lib:?} vs {oracle:?}"),
        }
    }
}

#[test]
fn howard_and_karp_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut checked = 0;
    while checked < 250 {
        let (g, _) = random_graph(&mut rng);
        if zero_subgraph_has_cycle(&g) {
            continue;
        }
        match (max_cycle_mean(&g), karp_cycle_mean(&g)) {
            (Err(MaxPlusError::NoCycle), Err(MaxPlusError::NoCycle)) => {}
            (Ok(cm), Ok(k)) => {
                assert!(
                    (cm.mu - k).abs() <= 1e-9,
                    "policy iteration {} vs Karp {}",
                    cm.mu,
                    k
                );
                checked += 1;
            }
            (a, b) => panic!("solvers disagree on feasibility: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn eigenvalue_equals_cycle_mean_on_strongly_connected_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut checked = 0;
    while checked < 60 {
        let n = rng.gen_range(2..=6);
        let mut pm = PolyMatrix::new(n);
        // A ring with positive durations guarantees strong connectivity and
        // a cycle with positive duration; extra chords are sprinkled on top.
        for j in 0..n {
            let i = (j + 1) % n;
            pm.set(i, j, rng.gen_range(1..=3), rng.gen_range(0..=100) as f64 / 2.0);
        }
        for _ in 0..rng.gen_range(0..=4) {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            pm.set(i, j, rng.gen_range(1..=3), rng.gen_range(0..=100) as f64 / 2.0);
        }
        let g = EventGraph::from_poly(&pm);
        let cm = max_cycle_mean(&g).unwrap();
        match generalized_eigenpair(&pm).unwrap() {
            EigenOutcome::Irreducible { mu, v } => {
                assert!((mu - cm.mu).abs() < 1e-9);
                // Residual of the eigen-equation in the evaluated matrix.
                let ev = pm.eval(mu);
                let x: Vec<Mp> = v.iter().map(|&t| Mp::Fin(t)).collect();
                let y = ev.otimes_vec(&x);
                for (a, b) in x.iter().zip(y.iter()) {
                    assert!((a.finite().unwrap() - b.finite().unwrap()).abs() < 1e-9);
                }
                checked += 1;
            }
            other => panic!("ring graph must be irreducible, got {other:?}"),
        }
    }
}

#[test]
fn product_of_known_matrices_expands_by_hand() {
    // A = | g 3        g^2 1 |      B = | 2        eps   |
    //     | 0          eps   |          | g 4      g^3 5 |
    //
    // (A ⊗ B)_00 = (g 3)(2) ⊕ (g^2 1)(g 4)   = g 5  ⊕ g^3 5
    // (A ⊗ B)_01 = (g^2 1)(g^3 5)            = g^5 6
    // (A ⊗ B)_10 = (0)(2)                    = 2
    // (A ⊗ B)_11 = eps
    let mut a = PolyMatrix::new(2);
    a.set(0, 0, 1, 3.0);
    a.set(0, 1, 2, 1.0);
    a.set(1, 0, 0, 0.0);
    let mut b = PolyMatrix::new(2);
    b.set(0, 0, 0, 2.0);
    b.set(1, 0, 1, 4.0);
    b.set(1, 1, 3, 5.0);
    let p = a.otimes(&b).unwrap();

    let c00 = p.coeffs(0, 0).unwrap();
    assert_eq!(c00.len(), 2);
    assert_eq!(c00[&1], 5.0);
    assert_eq!(c00[&3], 5.0);
    let c01 = p.coeffs(0, 1).unwrap();
    assert_eq!(c01.len(), 1);
    assert_eq!(c01[&5], 6.0);
    let c10 = p.coeffs(1, 0).unwrap();
    assert_eq!(c10.len(), 1);
    assert_eq!(c10[&0], 2.0);
    assert!(p.coeffs(1, 1).is_none());
}

fn mp_int() -> impl Strategy<Value = Mp> {
    prop_oneof![
        1 => Just(Mp::Eps),
        6 => (-1000i32..1000).prop_map(|v| Mp::Fin(v as f64)),
    ]
}

proptest! {
    // Integer-valued scalars keep f64 max/+ exact, so the laws hold sharply.
    #[test]
    fn oplus_is_commutative_associative_idempotent(a in mp_int(), b in mp_int(), c in mp_int()) {
        prop_assert_eq!(a.oplus(b), b.oplus(a));
        prop_assert_eq!(a.oplus(b).oplus(c), a.oplus(b.oplus(c)));
        prop_assert_eq!(a.oplus(a), a);
        prop_assert_eq!(a.oplus(Mp::Eps), a);
    }

    #[test]
    fn otimes_laws_and_distributivity(a in mp_int(), b in mp_int(), c in mp_int()) {
        prop_assert_eq!(a.otimes(b), b.otimes(a));
        prop_assert_eq!(a.otimes(b).otimes(c), a.otimes(b.otimes(c)));
        prop_assert_eq!(a.otimes(Mp::ONE), a);
        prop_assert_eq!(a.otimes(Mp::Eps), Mp::Eps);
        prop_assert_eq!(a.otimes(b.oplus(c)), a.otimes(b).oplus(a.otimes(c)));
    }

    #[test]
    fn matrix_product_is_associative(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=3);
        let mut mats = Vec::new();
        for _ in 0..3 {
            let mut m = PolyMatrix::new(dim);
            for i in 0..dim {
                for j in 0..dim {
                    if rng.gen_bool(0.6) {
                        m.set(i, j, rng.gen_range(0..=2), rng.gen_range(-20..=20) as f64);
                    }
                }
            }
            mats.push(m);
        }
        let left = mats[0].otimes(&mats[1]).unwrap().otimes(&mats[2]).unwrap();
        let right = mats[0].otimes(&mats[1].otimes(&mats[2]).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }
}
