//! Fixtures shared by the benchmarks.

use conemarket::samples::{interior_endowment, random_model, rng, solvency_cone, TreeShape};
use conemarket::Model;

/// A two-asset solvency-cone model with `steps` periods and `branching`
/// children per node, plus an interior endowment.
pub fn tree_instance(seed: u64, steps: usize, branching: usize) -> (Model, Vec<f64>) {
    let mut r = rng(seed);
    let cone = solvency_cone(&mut r, 2, 0.5);
    let shape = TreeShape {
        steps,
        branching,
        volatility: 0.3,
    };
    let model = random_model(&mut r, &cone, &shape);
    let x = interior_endowment(&mut r, &cone);
    (model, x)
}
