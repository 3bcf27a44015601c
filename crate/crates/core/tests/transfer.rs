use conemarket::samples::{
    exchangeable_model, interior_endowment, random_model, rng, shuffled_leaves, solvency_cone, TreeShape,
};
use conemarket::transfer::{permute_strategy, sibling_swap, Labels, LAW_TOL, TRANSFER_TOL};
use conemarket::{
    derandomize, expected_utility, laws_equal, permute_atoms, randomize, rebuild, solve_bellman, transfer_strategy,
    verify_invariance, Error, Law, Model, SolverOptions, Strategy, UtilitySpec, Verdict,
};
use proptest::prelude::*;

fn shape(steps: usize) -> TreeShape {
    TreeShape {
        steps,
        branching: 2,
        volatility: 0.3,
    }
}

/// The multiset of `(Y, S, B)` leaf paths with probabilities.
fn joint_law(model: &Model, strategy: &Strategy) -> Vec<(Vec<u64>, f64)> {
    let tree = model.tree();
    let mut out: Vec<(Vec<u64>, f64)> = model
        .leaf_probabilities()
        .into_iter()
        .map(|(leaf, p)| {
            let key = tree
                .ancestry(leaf)
                .iter()
                .flat_map(|&i| {
                    model
                        .driving(i)
                        .iter()
                        .chain(model.prices(i))
                        .chain(strategy.increment(i))
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>()
                })
                .collect();
            (key, p)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn same_joint_law(a: &[(Vec<u64>, f64)], b: &[(Vec<u64>, f64)]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.0 == q.0 && (p.1 - q.1).abs() <= LAW_TOL)
}

fn pair(seed: u64, rebuild_pair: bool) -> (Model, Model) {
    let mut r = rng(seed);
    let cone = solvency_cone(&mut r, 2, 0.5);
    let m = exchangeable_model(&mut r, &cone, &shape(2));
    let other = if rebuild_pair {
        rebuild(&m, Some(&shuffled_leaves(&mut r, &m))).unwrap()
    } else {
        let roots = m.tree().children(m.tree().roots()[0]);
        permute_atoms(&m, &sibling_swap(&m, roots[0], roots[1]).unwrap()).unwrap()
    };
    (m, other)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn transfer_preserves_the_joint_law(seed in any::<u64>(), rebuild_pair in any::<bool>()) {
        let (a, b) = pair(seed, rebuild_pair);
        prop_assert!(laws_equal(&a, &b));
        let x = interior_endowment(&mut rng(seed), a.cone());
        let u = UtilitySpec::LogLiquidation;
        let res = solve_bellman(&a, &x, &u, &SolverOptions::default()).unwrap();
        let t = transfer_strategy(&a, &res.strategy, &b, &x).unwrap();
        prop_assert!(t.certificate.passed && t.admissible && t.k_decreasing);
        prop_assert!(same_joint_law(&joint_law(&a, &res.strategy), &joint_law(&b, &t.strategy)));
        prop_assert!((expected_utility(&b, &x, &t.strategy, &u).unwrap() - res.value).abs() <= TRANSFER_TOL);
        let back = transfer_strategy(&b, &t.strategy, &a, &x).unwrap();
        prop_assert_eq!(back.strategy, res.strategy);
    }

    #[test]
    fn invariance_under_relabelling(seed in any::<u64>(), rebuild_pair in any::<bool>()) {
        let (a, b) = pair(seed, rebuild_pair);
        let x = interior_endowment(&mut rng(seed), a.cone());
        for (u, tol) in [(UtilitySpec::linear(vec![1.0, 1.0]), 1e-6), (UtilitySpec::LogLiquidation, 1e-3)] {
            let rep = verify_invariance(&a, &b, &x, &u, tol, &SolverOptions::default()).unwrap();
            prop_assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep);
        }
    }

    #[test]
    fn derandomization_identity(seed in any::<u64>(), m in 2usize..=3) {
        let mut r = rng(seed);
        let cone = solvency_cone(&mut r, 2, 0.5);
        let base = random_model(&mut r, &cone, &shape(1));
        let x = interior_endowment(&mut r, &cone);
        let rm = randomize(&base, m).unwrap();
        prop_assert!(laws_equal(&base, &rm.model));
        prop_assert!(Law::of(&base, Labels::Market).matches(&Law::of(&rm.model, Labels::Market), LAW_TOL));
        let u = UtilitySpec::LogLiquidation;
        let res = solve_bellman(&rm.model, &x, &u, &SolverOptions::default()).unwrap();
        let d = derandomize(&rm, &x, &res.strategy, &u).unwrap();
        prop_assert!(d.identity_error <= 1e-12);
        prop_assert!(d.best >= d.average - 1e-12 * d.average.abs().max(1.0));
        prop_assert!(d.slices_admissible.iter().all(|&ok| ok));
    }
}

#[test]
fn permuted_strategy_matches_transfer() {
    let (a, _) = pair(11, false);
    let roots = a.tree().children(a.tree().roots()[0]).to_vec();
    let perm = sibling_swap(&a, roots[0], roots[1]).unwrap();
    let b = permute_atoms(&a, &perm).unwrap();
    let x = interior_endowment(&mut rng(1), a.cone());
    let res = solve_bellman(&a, &x, &UtilitySpec::LogLiquidation, &SolverOptions::default()).unwrap();
    let t = transfer_strategy(&a, &res.strategy, &b, &x).unwrap();
    assert_eq!(t.strategy, permute_strategy(&a, &res.strategy, &perm).unwrap());
}

#[test]
fn perturbed_probabilities_are_a_law_mismatch() {
    let (a, _) = pair(3, true);
    let mut probs: Vec<_> = a.tree().nodes().iter().map(|n| n.prob).collect();
    let leaf = a.tree().leaves()[0];
    let sib = a.tree().children(a.tree().node(leaf).parent.unwrap()).to_vec();
    probs[sib[0]] += 0.01;
    probs[sib[1]] -= 0.01;
    let nodes = (0..a.tree().len())
        .map(|i| conemarket::NodeSpec {
            id: a.tree().node(i).id.clone(),
            parent: a.tree().node(i).parent.map(|p| a.tree().node(p).id.clone()),
            prob: probs[i],
            y: a.driving(i).to_vec(),
            s: a.prices(i).to_vec(),
        })
        .collect();
    let b = Model::new(a.cone().clone(), nodes, 0).unwrap();
    let x = [1.0, 0.0];
    let err = transfer_strategy(&a, &Strategy::zero(&a), &b, &x).unwrap_err();
    assert!(matches!(err, Error::LawMismatch(_)));
    let rep = verify_invariance(
        &a,
        &b,
        &x,
        &UtilitySpec::LogLiquidation,
        1e-3,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.verdict, Verdict::NotClaimed);
}
