use conemarket::samples::{interior_endowment, random_model, rng, solvency_cone, two_asset_cone, TreeShape};
use conemarket::{
    brute_force_bellman, expected_utility, is_admissible, solve_bellman, Model, SolveStatus, SolverOptions, Strategy,
    UtilitySpec,
};
use proptest::prelude::*;

fn small_model(seed: u64, branching: usize) -> Model {
    let mut r = rng(seed);
    let cone = solvency_cone(&mut r, 2, 0.5);
    let shape = TreeShape {
        steps: 2,
        branching,
        volatility: 0.3,
    };
    random_model(&mut r, &cone, &shape)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_dominates_oracle_and_no_trade(seed in any::<u64>(), branching in 2usize..=3) {
        let m = small_model(seed, branching);
        let x = interior_endowment(&mut rng(seed ^ 1), m.cone());
        for u in [UtilitySpec::linear(vec![1.0, 1.0]), UtilitySpec::LogLiquidation] {
            let res = solve_bellman(&m, &x, &u, &SolverOptions::default()).unwrap();
            prop_assert_eq!(res.status, SolveStatus::Optimal);
            prop_assert!(is_admissible(&m, &x, &res.strategy).unwrap().admissible);
            prop_assert_eq!(expected_utility(&m, &x, &res.strategy, &u).unwrap(), res.value);
            let zero = expected_utility(&m, &x, &Strategy::zero(&m), &u).unwrap();
            prop_assert!(res.value >= zero - 1e-12);
            prop_assert!(res.upper_bound >= res.value - 1e-12);
            let oracle = brute_force_bellman(&m, &x, &u, 0.05).unwrap();
            prop_assert!(res.value >= oracle - 1e-9, "{} < {oracle}", res.value);
        }
    }

    #[test]
    fn value_is_concave_and_monotone_in_the_endowment(seed in any::<u64>(), t in 0.0f64..1.0) {
        let m = small_model(seed, 2);
        let u = UtilitySpec::LogLiquidation;
        let opts = SolverOptions::default();
        let a = interior_endowment(&mut rng(seed ^ 2), m.cone());
        let b = interior_endowment(&mut rng(seed ^ 3), m.cone());
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| t * p + (1.0 - t) * q).collect();
        let va = solve_bellman(&m, &a, &u, &opts).unwrap();
        let vb = solve_bellman(&m, &b, &u, &opts).unwrap();
        let vm = solve_bellman(&m, &mid, &u, &opts).unwrap();
        prop_assert!(vm.upper_bound >= t * va.value + (1.0 - t) * vb.value - 1e-9);
        let richer: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        let vr = solve_bellman(&m, &richer, &u, &opts).unwrap();
        prop_assert!(vr.upper_bound >= va.value - 1e-9);
    }
}

#[test]
fn one_step_golden_value() {
    let cone = two_asset_cone(1.25);
    let m = Model::new(
        cone,
        ["root", "up", "down"]
            .iter()
            .zip([(None, 1.0, 1.0), (Some("root"), 0.5, 1.5), (Some("root"), 0.5, 0.75)])
            .map(|(id, (parent, prob, s2))| conemarket::NodeSpec {
                id: (*id).into(),
                parent: parent.map(Into::into),
                prob,
                y: vec![s2],
                s: vec![1.0, s2],
            })
            .collect(),
        0,
    )
    .unwrap();
    let res = solve_bellman(
        &m,
        &[1.0, 0.0],
        &UtilitySpec::linear(vec![1.0, 1.0]),
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(res.value, 1.0);
    assert!(res.gap < 1e-9);
}
