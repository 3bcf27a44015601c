//! Thin dense-input wrapper over `microlp`.
//!
//! Every LP in the crate (membership, Farkas certificates, dual interior
//! points, Bellman problems and their duals) goes through this module so the
//! backing solver can be swapped without touching callers.

use std::collections::BTreeMap;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("solver failure: {0}")]
    Internal(String),
}

impl From<microlp::Error> for LpError {
    fn from(err: microlp::Error) -> Self {
        match err {
            microlp::Error::Infeasible => LpError::Infeasible,
            microlp::Error::Unbounded => LpError::Unbounded,
            microlp::Error::InternalError(msg) => LpError::Internal(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl From<Relation> for ComparisonOp {
    fn from(rel: Relation) -> Self {
        match rel {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
            Relation::Eq => ComparisonOp::Eq,
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over continuous variables with box bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    maximize: bool,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

impl LinearProgram {
    pub fn maximize() -> Self {
        Self::new(true)
    }

    pub fn minimize() -> Self {
        Self::new(false)
    }

    fn new(maximize: bool) -> Self {
        Self {
            maximize,
            objective: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds a variable with objective coefficient `obj` and bounds `[lo, hi]`
    /// (infinite bounds allowed). Returns its index.
    pub fn add_var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(obj);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    /// Adds `sum terms (relation) rhs`. Repeated indices are summed.
    pub fn add_row<I>(&mut self, terms: I, relation: Relation, rhs: f64)
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        self.rows.push(Row {
            terms: merge_terms(terms),
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// The Lagrangian dual. Finite variable bounds become explicit rows, so the
    /// dual has one variable per row and per finite bound and one equality per
    /// primal variable. At optimality both objectives coincide; any feasible
    /// dual point bounds the primal objective.
    pub fn dual(&self) -> LinearProgram {
        let mut rows: Vec<Row> = self.rows.clone();
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_finite() {
                rows.push(Row {
                    terms: vec![(j, 1.0)],
                    relation: Relation::Ge,
                    rhs: lo,
                });
            }
            if hi.is_finite() {
                rows.push(Row {
                    terms: vec![(j, 1.0)],
                    relation: Relation::Le,
                    rhs: hi,
                });
            }
        }
        // max c.z, a.z <= b  ->  y >= 0 ; a.z >= b -> y <= 0 ; min b.y, A^T y = c
        let mut dual = if self.maximize {
            LinearProgram::minimize()
        } else {
            LinearProgram::maximize()
        };
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_vars()];
        for row in &rows {
            let nonneg = match (row.relation, self.maximize) {
                (Relation::Eq, _) => None,
                (Relation::Le, true) | (Relation::Ge, false) => Some(true),
                (Relation::Ge, true) | (Relation::Le, false) => Some(false),
            };
            let (lo, hi) = match nonneg {
                None => (f64::NEG_INFINITY, f64::INFINITY),
                Some(true) => (0.0, f64::INFINITY),
                Some(false) => (f64::NEG_INFINITY, 0.0),
            };
            let y = dual.add_var(row.rhs, lo, hi);
            for &(j, a) in &row.terms {
                columns[j].push((y, a));
            }
        }
        for (j, col) in columns.into_iter().enumerate() {
            dual.add_row(col, Relation::Eq, self.objective[j]);
        }
        dual
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let session = self.session()?;
        Ok(session.solution())
    }

    /// Solves and keeps the solver state so rows can be appended with a warm start.
    pub fn session(&self) -> Result<LpSession, LpError> {
        let direction = if self.maximize {
            OptimizationDirection::Maximize
        } else {
            OptimizationDirection::Minimize
        };
        let mut problem = Problem::new(direction);
        let vars: Vec<Variable> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for row in &self.rows {
            if row.terms.is_empty() {
                let ok = match row.relation {
                    Relation::Le => 0.0 <= row.rhs,
                    Relation::Ge => 0.0 >= row.rhs,
                    Relation::Eq => row.rhs == 0.0,
                };
                if ok {
                    continue;
                }
                return Err(LpError::Infeasible);
            }
            problem.add_constraint(to_expr(&vars, &row.terms), row.relation.into(), row.rhs);
        }
        let solution = problem.solve()?;
        Ok(LpSession { solution, vars })
    }
}

/// A solved LP that accepts further rows (cutting planes) with a warm start.
#[derive(Debug)]
pub struct LpSession {
    solution: Solution,
    vars: Vec<Variable>,
}

impl LpSession {
    pub fn objective(&self) -> f64 {
        self.solution.objective()
    }

    pub fn values(&self) -> Vec<f64> {
        self.vars.iter().map(|&v| *self.solution.var_value(v)).collect()
    }

    pub fn solution(&self) -> LpSolution {
        LpSolution {
            objective: self.objective(),
            values: self.values(),
        }
    }

    pub fn add_row<I>(self, terms: I, relation: Relation, rhs: f64) -> Result<Self, LpError>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let expr = to_expr(&self.vars, &merge_terms(terms));
        let vars = self.vars;
        let solution = self.solution.add_constraint(expr, relation.into(), rhs)?;
        Ok(Self { solution, vars })
    }
}

fn merge_terms<I: IntoIterator<Item = (usize, f64)>>(terms: I) -> Vec<(usize, f64)> {
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, c) in terms {
        *merged.entry(i).or_insert(0.0) += c;
    }
    merged.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

fn to_expr(vars: &[Variable], terms: &[(usize, f64)]) -> LinearExpr {
    let mut expr = LinearExpr::empty();
    for &(i, c) in terms {
        expr.add(vars[i], c);
    }
    expr
}
