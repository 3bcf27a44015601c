//! The Bellman function `u(x) = sup E U(V_T)` over admissible strategies.
//!
//! Trades are parametrized by nonnegative generator weights per node,
//! `dB(node) = -sum_g lambda_g(node) g`, which makes K-decreasing a sign
//! constraint. Wealth is linear in the weights, so admissibility becomes a set
//! of linear rows. Linear utilities give a single LP whose dual supplies the
//! upper bound. Liquidation utilities `phi(l(V_T))` are handled by an outer
//! approximation of `phi` with tangent cuts (Kelley's cutting-plane method):
//! every LP optimum is an upper bound and the strategy it proposes, evaluated
//! exactly, is a lower bound.

use crate::cone::Cone;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, LpSession, Relation};
use crate::model::{is_admissible, wealth, Model, Strategy};
use crate::utility::{evaluate_unchecked, UtilitySpec};
use crate::vector::{all_finite, dot, norm1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::MaxIter => "max_iter",
            Self::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop when `upper - lower <= gap_tol * (1 + |lower|)`.
    pub gap_tol: f64,
    /// Cap on cutting-plane rounds.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanResult {
    /// Exact expected utility of `strategy`.
    pub value: f64,
    pub strategy: Strategy,
    pub status: SolveStatus,
    /// `upper_bound - value`, or infinite when no bound is available.
    pub gap: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// `E U(V_T)` for a given strategy (no admissibility check beyond `U = -inf`
/// off `K` at the leaves).
pub fn expected_utility(model: &Model, x: &[f64], strategy: &Strategy, utility: &UtilitySpec) -> Result<f64> {
    utility.validate(model.cone())?;
    let w = wealth(model, x, strategy)?;
    let mut total = 0.0;
    for (leaf, p) in model.leaf_probabilities() {
        let u = evaluate_unchecked(utility, model.cone(), &w.numeraire[leaf])?;
        if u == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += p * u;
    }
    Ok(total)
}

pub fn solve_bellman(model: &Model, x: &[f64], utility: &UtilitySpec, opts: &SolverOptions) -> Result<BellmanResult> {
    model.ensure_valid()?;
    utility.validate(model.cone())?;
    let d = model.asset_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("initial endowment".into()));
    }
    if opts.gap_tol.is_nan() || opts.gap_tol <= 0.0 || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("gap_tol and max_iter must be positive".into()));
    }
    let mut warnings = Vec::new();
    if !model.cone().contains(x)? {
        return Ok(BellmanResult {
            value: f64::NEG_INFINITY,
            strategy: Strategy::zero(model),
            status: SolveStatus::Infeasible,
            gap: f64::INFINITY,
            upper_bound: f64::NEG_INFINITY,
            iterations: 0,
            warnings: vec!["x is not in K: no admissible strategy exists".into()],
        });
    }
    if on_boundary(model.cone(), x) {
        warnings.push("x lies on the boundary of K".into());
    }
    let mut result = match utility {
        UtilitySpec::Linear { weights } => solve_linear(model, x, utility, weights)?,
        _ => solve_liquidation(model, x, utility, opts)?,
    };
    if result.status != SolveStatus::Infeasible {
        let report = is_admissible(model, x, &result.strategy)?;
        if !report.admissible {
            warnings.push(format!(
                "reported strategy fails the admissibility check at {} node(s)",
                report.violations.len()
            ));
        }
    }
    warnings.append(&mut result.warnings);
    result.warnings = warnings;
    Ok(result)
}

fn on_boundary(cone: &Cone, x: &[f64]) -> bool {
    let scale = norm1(x);
    match cone.halfspaces() {
        Some(hs) => hs.iter().any(|n| dot(n, x) <= cone.tol() * scale),
        None => scale == 0.0,
    }
}

/// An affine expression `constant + sum coef * var`.
#[derive(Debug, Clone, Default)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

/// The LP skeleton shared by all utilities: generator weights per node and
/// admissibility rows.
struct Skeleton {
    lp: LinearProgram,
    lambda: Vec<Vec<usize>>,
    /// Numeraire wealth per node, one affine expression per asset.
    wealth: Vec<Vec<Affine>>,
}

impl Skeleton {
    fn build(model: &Model, x: &[f64]) -> Self {
        let tree = model.tree();
        let gens = model.cone().generators();
        let d = model.asset_dim();
        let mut lp = LinearProgram::maximize();
        let lambda: Vec<Vec<usize>> = (0..tree.len())
            .map(|_| gens.iter().map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect())
            .collect();
        // physical wealth V^_j = x_j - sum_{m <= node} sum_g lambda_g(m) g_j / S_j(m)
        let mut physical: Vec<Vec<Affine>> = vec![Vec::new(); tree.len()];
        let mut numeraire: Vec<Vec<Affine>> = vec![Vec::new(); tree.len()];
        for &i in tree.topological_order() {
            let s = model.prices(i);
            let base: Vec<Affine> = match tree.node(i).parent {
                Some(p) => physical[p].clone(),
                None => x
                    .iter()
                    .map(|&c| Affine {
                        constant: c,
                        terms: Vec::new(),
                    })
                    .collect(),
            };
            let vh: Vec<Affine> = base
                .into_iter()
                .enumerate()
                .map(|(j, mut a)| {
                    for (g, &var) in gens.iter().zip(&lambda[i]) {
                        if g[j] != 0.0 {
                            a.terms.push((var, -g[j] / s[j]));
                        }
                    }
                    a
                })
                .collect();
            numeraire[i] = (0..d)
                .map(|j| Affine {
                    constant: s[j] * vh[j].constant,
                    terms: vh[j].terms.iter().map(|&(v, c)| (v, c * s[j])).collect(),
                })
                .collect();
            physical[i] = vh;
        }
        let mut sk = Self {
            lp,
            lambda,
            wealth: numeraire,
        };
        for i in 0..tree.len() {
            let v = sk.wealth[i].clone();
            sk.add_membership(model.cone(), &v, None);
        }
        sk
    }

    /// Rows for `v - t e^1 in K` (`t` omitted when `None`).
    fn add_membership(&mut self, cone: &Cone, v: &[Affine], t: Option<usize>) {
        match cone.halfspaces() {
            Some(hs) => {
                for n in hs {
                    let mut terms = Vec::new();
                    let mut constant = 0.0;
                    for (nj, a) in n.iter().zip(v) {
                        if *nj == 0.0 {
                            continue;
                        }
                        constant += nj * a.constant;
                        terms.extend(a.terms.iter().map(|&(var, c)| (var, nj * c)));
                    }
                    if let Some(t) = t {
                        terms.push((t, -n[0]));
                    }
                    self.lp.add_row(terms, Relation::Ge, -constant);
                }
            }
            None => {
                // v - t e^1 = sum mu_g g with mu >= 0
                let mus: Vec<usize> = cone
                    .generators()
                    .iter()
                    .map(|_| self.lp.add_var(0.0, 0.0, f64::INFINITY))
                    .collect();
                for (j, a) in v.iter().enumerate() {
                    let mut terms = a.terms.clone();
                    for (g, &mu) in cone.generators().iter().zip(&mus) {
                        terms.push((mu, -g[j]));
                    }
                    if let (Some(t), 0) = (t, j) {
                        terms.push((t, -1.0));
                    }
                    self.lp.add_row(terms, Relation::Eq, -a.constant);
                }
            }
        }
    }

    fn strategy(&self, model: &Model, values: &[f64]) -> Strategy {
        let gens = model.cone().generators();
        let d = model.asset_dim();
        let increments = self
            .lambda
            .iter()
            .map(|vars| {
                let mut inc = vec![0.0; d];
                for (g, &var) in gens.iter().zip(vars) {
                    let l = values[var].max(0.0);
                    for j in 0..d {
                        inc[j] -= l * g[j];
                    }
                }
                inc
            })
            .collect();
        Strategy::new(increments)
    }
}

fn solve_linear(model: &Model, x: &[f64], utility: &UtilitySpec, w: &[f64]) -> Result<BellmanResult> {
    let mut sk = Skeleton::build(model, x);
    // objective sum_leaf P(leaf) w . V(leaf); the constant part is added back
    let mut constant = 0.0;
    let mut objective = vec![0.0; sk.lp.num_vars()];
    for (leaf, p) in model.leaf_probabilities() {
        for (wj, a) in w.iter().zip(&sk.wealth[leaf]) {
            constant += p * wj * a.constant;
            for &(var, c) in &a.terms {
                objective[var] += p * wj * c;
            }
        }
    }
    for (var, c) in objective.into_iter().enumerate() {
        sk.lp.set_objective(var, c);
    }
    let solution = match sk.lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(infeasible(model)),
        Err(e) => return Err(e.into()),
    };
    let strategy = sk.strategy(model, &solution.values);
    let value = expected_utility(model, x, &strategy, utility)?;
    let mut warnings = Vec::new();
    let upper_bound = match sk.lp.dual().solve() {
        Ok(dual) => constant + dual.objective,
        Err(e) => {
            warnings.push(format!("dual bound unavailable: {e}"));
            f64::INFINITY
        }
    };
    Ok(BellmanResult {
        value,
        strategy,
        status: SolveStatus::Optimal,
        gap: upper_bound - value,
        upper_bound,
        iterations: 1,
        warnings,
    })
}

fn infeasible(model: &Model) -> BellmanResult {
    BellmanResult {
        value: f64::NEG_INFINITY,
        strategy: Strategy::zero(model),
        status: SolveStatus::Infeasible,
        gap: f64::INFINITY,
        upper_bound: f64::NEG_INFINITY,
        iterations: 0,
        warnings: Vec::new(),
    }
}

/// Cut points below this fraction of the reference scale are not added.
const MIN_CUT_FRACTION: f64 = 1e-12;
const SEED_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

fn solve_liquidation(model: &Model, x: &[f64], utility: &UtilitySpec, opts: &SolverOptions) -> Result<BellmanResult> {
    let cone = model.cone();
    let leaves = model.leaf_probabilities();
    let mut sk = Skeleton::build(model, x);
    let t_vars: Vec<usize> = leaves.iter().map(|_| sk.lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    for (&(leaf, _), &t) in leaves.iter().zip(&t_vars) {
        let v = sk.wealth[leaf].clone();
        sk.add_membership(cone, &v, Some(t));
    }

    // largest uniform liquidation level; log utility is -inf everywhere if it is 0
    let mut phase1 = sk.lp.clone();
    let level = phase1.add_var(1.0, 0.0, f64::INFINITY);
    for &t in &t_vars {
        phase1.add_row([(t, 1.0), (level, -1.0)], Relation::Ge, 0.0);
    }
    let phase1 = match phase1.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(infeasible(model)),
        Err(e) => return Err(e.into()),
    };
    let reference = phase1.values[level];
    if matches!(utility, UtilitySpec::LogLiquidation) && reference <= 0.0 {
        let strategy = sk.strategy(model, &phase1.values);
        return Ok(BellmanResult {
            value: f64::NEG_INFINITY,
            strategy,
            status: SolveStatus::Optimal,
            gap: 0.0,
            upper_bound: f64::NEG_INFINITY,
            iterations: 0,
            warnings: vec!["every admissible strategy has zero liquidation value on some leaf".into()],
        });
    }
    let scale = if reference > 0.0 { reference } else { norm1(x).max(1.0) };

    let s_vars: Vec<usize> = leaves
        .iter()
        .map(|&(_, p)| sk.lp.add_var(p, f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let mut smallest_cut = vec![f64::INFINITY; leaves.len()];
    for ((&t, &s), smallest) in t_vars.iter().zip(&s_vars).zip(&mut smallest_cut) {
        for f in SEED_FACTORS {
            let c = f * scale;
            let (terms, rhs) = tangent_row(utility, t, s, c);
            sk.lp.add_row(terms, Relation::Le, rhs);
            *smallest = smallest.min(c);
        }
    }
    let mut session: LpSession = sk.lp.session()?;
    let mut best: Option<(f64, Strategy)> = None;
    let mut upper = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let values = session.values();
        upper = upper.min(session.objective());
        let strategy = sk.strategy(model, &values);
        let lower = expected_utility(model, x, &strategy, utility)?;
        if best.as_ref().is_none_or(|(b, _)| lower > *b) {
            best = Some((lower, strategy));
        }
        let best_value = best.as_ref().map(|(b, _)| *b).unwrap();
        if best_value.is_finite() && upper - best_value <= opts.gap_tol * (1.0 + best_value.abs()) {
            status = SolveStatus::Optimal;
            break;
        }
        let mut cuts = Vec::new();
        for (k, (&t, &s)) in t_vars.iter().zip(&s_vars).enumerate() {
            let tv = values[t];
            let sv = values[s];
            if tv <= smallest_cut[k] * 1e-3 {
                let c = smallest_cut[k] / 4.0;
                if c > MIN_CUT_FRACTION * scale {
                    smallest_cut[k] = c;
                    cuts.push(tangent_row(utility, t, s, c));
                }
            } else if sv - utility.profile(tv) > 0.25 * opts.gap_tol * (1.0 + sv.abs()) {
                smallest_cut[k] = smallest_cut[k].min(tv);
                cuts.push(tangent_row(utility, t, s, tv));
            }
        }
        if cuts.is_empty() {
            // the model is exact at the LP optimum up to tolerance
            status = if best_value.is_finite() {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            };
            break;
        }
        for (terms, rhs) in cuts {
            session = session.add_row(terms, Relation::Le, rhs)?;
        }
    }
    let (value, strategy) = best.expect("at least one round");
    Ok(BellmanResult {
        value,
        strategy,
        status,
        gap: (upper - value).max(0.0),
        upper_bound: upper,
        iterations,
        warnings: Vec::new(),
    })
}

/// `s <= phi(c) + phi'(c) (t - c)` as `s - phi'(c) t <= phi(c) - phi'(c) c`.
fn tangent_row(utility: &UtilitySpec, t: usize, s: usize, c: f64) -> (Vec<(usize, f64)>, f64) {
    let slope = utility.profile_slope(c);
    (vec![(s, 1.0), (t, -slope)], utility.profile(c) - slope * c)
}
