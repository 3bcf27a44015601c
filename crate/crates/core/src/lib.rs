pub mod bellman;
pub mod brute;
pub mod cone;
pub mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod paths;
pub mod prediction;
pub mod samples;
pub mod transfer;
pub mod utility;
pub mod vector;

pub use bellman::{expected_utility, solve_bellman, BellmanResult, SolveStatus, SolverOptions};
pub use brute::{brute_force_bellman, brute_force_with_budget, BruteForceResult};
pub use cone::{make_cone, Cone, DualBasis, Membership};
pub use error::{Error, Result};
pub use model::{
    filtration_atoms, is_admissible, validate_model, wealth, AtomMode, Model, NodeSpec, ScenarioTree, Strategy,
    ValidationReport, WealthProcess,
};
pub use paths::{decompose, is_k_decreasing, total_variation, Decomposition, GridPath};
pub use prediction::{dirac_check, prediction_process, DiracCertificate, PathTarget, PredictionProcess};
pub use transfer::{
    derandomize, has_independent_increments, laws_equal, market_law, permute_atoms, randomize, rebuild,
    transfer_slices, transfer_strategy, verify_invariance, InvarianceReport, Law, RandomizedModel, Transfer, Verdict,
};
pub use utility::{evaluate_utility, UtilitySpec};
