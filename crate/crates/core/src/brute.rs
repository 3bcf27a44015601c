//! Exhaustive grid search for the Bellman value on small trees.
//!
//! Each node's trade is drawn from a grid of generator multiples and the
//! children choose independently given the resulting position, so the search
//! is a depth-first maximization over the tree. Two reductions keep it
//! tractable, both exact for K-monotone utilities:
//!
//! - trades at the terminal time only subtract an element of `K` and never
//!   raise utility, so leaves do not trade;
//! - for `d = 2` with `R^2_+` in `K`, every trade in `-K` is a multiple of one
//!   extreme ray plus a disposal, so single-ray trades suffice;
//! - at the last trading time the objective is concave along each ray, so the
//!   scan along a ray stops once the objective strictly decreases.
//!
//! Besides grid points `k * h`, each ray contributes its breakpoint: the
//! largest multiple keeping the node and all its children solvent.

use crate::cone::Cone;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::utility::{evaluate_unchecked, UtilitySpec};
use crate::vector::{add, dot, hadamard, scale};

pub const MAX_STEPS: usize = 3;
pub const MAX_LEAVES: usize = 27;
pub const DEFAULT_BUDGET: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub value: f64,
    /// Number of wealth positions evaluated.
    pub evaluations: u64,
}

pub fn brute_force_bellman(model: &Model, x: &[f64], utility: &UtilitySpec, grid_step: f64) -> Result<f64> {
    Ok(brute_force_with_budget(model, x, utility, grid_step, DEFAULT_BUDGET)?.value)
}

pub fn brute_force_with_budget(
    model: &Model,
    x: &[f64],
    utility: &UtilitySpec,
    grid_step: f64,
    budget: u64,
) -> Result<BruteForceResult> {
    search(model, x, utility, grid_step, budget, true)
}

fn search(
    model: &Model,
    x: &[f64],
    utility: &UtilitySpec,
    grid_step: f64,
    budget: u64,
    reduce: bool,
) -> Result<BruteForceResult> {
    model.ensure_valid()?;
    utility.validate(model.cone())?;
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    if x.len() != model.asset_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.asset_dim(),
            got: x.len(),
        });
    }
    if model.horizon() > MAX_STEPS || model.tree().leaves().len() > MAX_LEAVES {
        return Err(Error::InstanceTooLarge(format!(
            "{} steps and {} leaves (limits {MAX_STEPS} and {MAX_LEAVES})",
            model.horizon(),
            model.tree().leaves().len()
        )));
    }
    let cone = model.cone();
    let hs = match cone.halfspaces() {
        Some(hs) => hs.to_vec(),
        None => return Err(Error::UnsupportedDimension(cone.dim())),
    };
    let single_ray = reduce && cone.dim() == 2 && cone.contains_orthant()?;
    let directions: Vec<Vec<f64>> = if single_ray {
        cone.extreme_rays()?
            .into_iter()
            .filter(|r| r.iter().any(|&c| c < 0.0))
            .collect()
    } else {
        cone.generators().to_vec()
    };
    let mut search = Search {
        model,
        cone,
        utility,
        hs,
        directions,
        single_ray,
        step: grid_step,
        evaluations: 0,
        budget,
    };
    let mut value = 0.0;
    for &root in model.tree().roots() {
        let v = search.node_value(root, x)?;
        if v == f64::NEG_INFINITY {
            value = f64::NEG_INFINITY;
            break;
        }
        value += model.tree().node(root).prob * v;
    }
    Ok(BruteForceResult {
        value,
        evaluations: search.evaluations,
    })
}

struct Search<'a> {
    model: &'a Model,
    cone: &'a Cone,
    utility: &'a UtilitySpec,
    hs: Vec<Vec<f64>>,
    directions: Vec<Vec<f64>>,
    single_ray: bool,
    step: f64,
    evaluations: u64,
    budget: u64,
}

impl Search<'_> {
    /// Best value at `node` entering with physical position `prev`.
    fn node_value(&mut self, node: usize, prev: &[f64]) -> Result<f64> {
        let tree = self.model.tree();
        let s = self.model.prices(node);
        let children = tree.children(node);
        self.tick()?;
        if children.is_empty() {
            return evaluate_unchecked(self.utility, self.cone, &hadamard(s, prev));
        }
        if children.iter().all(|&c| tree.children(c).is_empty()) {
            return self.last_trade_value(node, prev);
        }
        let mut best = f64::NEG_INFINITY;
        for trade in self.candidates(node, prev)? {
            let next: Vec<f64> = prev.iter().zip(&trade).zip(s).map(|((p, t), sj)| p + t / sj).collect();
            if !self.cone.contains(&hadamard(s, &next))? {
                continue;
            }
            let mut total = 0.0;
            for &c in children {
                let v = self.node_value(c, &next)?;
                if v == f64::NEG_INFINITY {
                    total = f64::NEG_INFINITY;
                    break;
                }
                total += tree.node(c).prob * v;
            }
            best = best.max(total);
        }
        Ok(best)
    }

    /// `node_value` for a node whose children are all leaves. The objective is
    /// concave along each ray, so in single-ray mode a scan stops at the first
    /// strict decrease.
    fn last_trade_value(&mut self, node: usize, prev: &[f64]) -> Result<f64> {
        let d = prev.len();
        let mut scratch = (vec![0.0; d], vec![0.0; d]);
        if !self.single_ray {
            let mut best = f64::NEG_INFINITY;
            for trade in self.candidates(node, prev)? {
                if let Some(v) = self.trade_value(node, prev, &trade, &mut scratch)? {
                    best = best.max(v);
                }
            }
            return Ok(best);
        }
        let zero = vec![0.0; d];
        let mut best = self
            .trade_value(node, prev, &zero, &mut scratch)?
            .unwrap_or(f64::NEG_INFINITY);
        let mut trade = zero;
        for g in self.directions.clone() {
            let c_max = self.breakpoint(&self.constraint_pairs(node, prev, &g));
            let mut last = best;
            for c in self.grid(c_max).into_iter().skip(1) {
                for (t, gj) in trade.iter_mut().zip(&g) {
                    *t = -c * gj;
                }
                let v = self
                    .trade_value(node, prev, &trade, &mut scratch)?
                    .unwrap_or(f64::NEG_INFINITY);
                if last > f64::NEG_INFINITY && v < last {
                    break;
                }
                best = best.max(v);
                last = v;
            }
        }
        Ok(best)
    }

    /// Expected leaf utility after `trade` at `node`, `None` if the node is
    /// left insolvent.
    fn trade_value(
        &mut self,
        node: usize,
        prev: &[f64],
        trade: &[f64],
        (next, held): &mut (Vec<f64>, Vec<f64>),
    ) -> Result<Option<f64>> {
        let tree = self.model.tree();
        let s = self.model.prices(node);
        for j in 0..prev.len() {
            next[j] = prev[j] + trade[j] / s[j];
            held[j] = s[j] * next[j];
        }
        if !self.cone.contains(held)? {
            return Ok(None);
        }
        let mut total = 0.0;
        for &c in tree.children(node) {
            self.tick()?;
            for (h, (sc, n)) in held.iter_mut().zip(self.model.prices(c).iter().zip(next.iter())) {
                *h = sc * n;
            }
            let v = evaluate_unchecked(self.utility, self.cone, held)?;
            if v == f64::NEG_INFINITY {
                return Ok(Some(f64::NEG_INFINITY));
            }
            total += tree.node(c).prob * v;
        }
        Ok(Some(total))
    }

    fn tick(&mut self) -> Result<()> {
        self.evaluations += 1;
        if self.evaluations > self.budget {
            return Err(Error::InstanceTooLarge(format!(
                "evaluation budget {} exhausted",
                self.budget
            )));
        }
        Ok(())
    }

    /// Largest `c >= 0` keeping `a - c b` in `K` for every `(a, b)` pair.
    fn breakpoint(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let mut c_max = f64::INFINITY;
        for (a, b) in pairs {
            for n in &self.hs {
                let nb = dot(n, b);
                if nb > 0.0 {
                    c_max = c_max.min(dot(n, a) / nb);
                }
            }
        }
        c_max.max(0.0)
    }

    /// `(a, b)` pairs describing the node and its children after a trade `-c g`.
    fn constraint_pairs(&self, node: usize, prev: &[f64], g: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let s = self.model.prices(node);
        let per_unit: Vec<f64> = g.iter().zip(s).map(|(gj, sj)| gj / sj).collect();
        std::iter::once(node)
            .chain(self.model.tree().children(node).iter().copied())
            .map(|m| {
                let sm = self.model.prices(m);
                (hadamard(sm, prev), hadamard(sm, &per_unit))
            })
            .collect()
    }

    fn grid(&self, c_max: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        if !c_max.is_finite() {
            return out;
        }
        let mut k = 1u64;
        loop {
            let c = k as f64 * self.step;
            if c > c_max {
                break;
            }
            out.push(c);
            k += 1;
        }
        if c_max > *out.last().unwrap() {
            out.push(c_max);
        }
        out
    }

    fn candidates(&self, node: usize, prev: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = prev.len();
        let limits: Vec<f64> = self
            .directions
            .iter()
            .map(|g| self.breakpoint(&self.constraint_pairs(node, prev, g)))
            .collect();
        if self.single_ray {
            let mut out = vec![vec![0.0; d]];
            for (g, &c_max) in self.directions.iter().zip(&limits) {
                out.extend(self.grid(c_max).into_iter().skip(1).map(|c| scale(g, -c)));
            }
            return Ok(out);
        }
        let remaining = self.budget.saturating_sub(self.evaluations);
        let mut out = vec![vec![0.0; d]];
        for (g, &c_max) in self.directions.iter().zip(&limits) {
            let cs = self.grid(c_max);
            if (out.len() * cs.len()) as u64 > remaining {
                return Err(Error::InstanceTooLarge(format!(
                    "product grid exceeds the remaining evaluation budget {remaining}"
                )));
            }
            let mut next = Vec::with_capacity(out.len() * cs.len());
            for base in &out {
                for &c in &cs {
                    next.push(add(base, &scale(g, -c)));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{expected_utility, solve_bellman, SolverOptions};
    use crate::cone::DEFAULT_TOL;
    use crate::model::{NodeSpec, Strategy};

    fn solvency_125() -> Cone {
        Cone::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.25, -1.0], vec![-1.0, 1.25]],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    fn one_step(cone: Cone) -> Model {
        let node = |id: &str, parent: Option<&str>, prob: f64, s2: f64| NodeSpec {
            id: id.into(),
            parent: parent.map(Into::into),
            prob,
            y: vec![s2],
            s: vec![1.0, s2],
        };
        Model::new(
            cone,
            vec![
                node("root", None, 1.0, 1.0),
                node("up", Some("root"), 0.5, 1.5),
                node("down", Some("root"), 0.5, 0.75),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn linear_example() {
        let m = one_step(solvency_125());
        let u = UtilitySpec::linear(vec![1.0, 1.0]);
        let v = brute_force_bellman(&m, &[1.0, 0.0], &u, 0.01).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominates_no_trade_and_refines_monotonically() {
        let m = one_step(solvency_125());
        let x = [0.4, 0.7];
        for u in [UtilitySpec::LogLiquidation, UtilitySpec::linear(vec![1.0, 1.2])] {
            let zero = expected_utility(&m, &x, &Strategy::zero(&m), &u).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for h in [0.1, 0.05, 0.01] {
                let v = brute_force_bellman(&m, &x, &u, h).unwrap();
                assert!(v >= zero - 1e-12);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
            let solved = solve_bellman(&m, &x, &u, &SolverOptions::default()).unwrap();
            assert!(solved.value >= prev - 1e-9, "{} vs {prev}", solved.value);
            assert!(solved.value - prev < 5e-3);
        }
    }

    #[test]
    fn product_grid_matches_single_ray() {
        let m = one_step(solvency_125());
        let u = UtilitySpec::LogLiquidation;
        let x = [0.5, 0.5];
        let reduced = brute_force_bellman(&m, &x, &u, 0.05).unwrap();
        let full = search(&m, &x, &u, 0.05, DEFAULT_BUDGET, false).unwrap().value;
        let solved = solve_bellman(&m, &x, &u, &SolverOptions::default()).unwrap().value;
        assert!(full <= solved + 1e-9 && reduced <= solved + 1e-9);
        assert!(solved - full < 1e-2 && solved - reduced < 1e-2);
    }

    #[test]
    fn too_large() {
        let m = one_step(solvency_125());
        let u = UtilitySpec::LogLiquidation;
        assert!(matches!(
            search(&m, &[1.0, 0.0], &u, 1e-4, 1000, false),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(brute_force_bellman(&m, &[1.0, 0.0], &u, 0.0).is_err());
    }
}
