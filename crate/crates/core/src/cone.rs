//! Polyhedral convex cones in generator form.
//!
//! A [`Cone`] is the conic hull of finitely many rays. For `d <= 4` the
//! halfspace description `{x : n_i . x >= 0}` is derived by exact facet
//! enumeration and cached; membership then reduces to a sign check. In
//! higher dimensions membership falls back to an LP feasibility problem and
//! every operation that needs the dual generators reports
//! [`Error::UnsupportedDimension`].
//!
//! Halfspace normals of `K` are exactly the generators of the dual cone
//! `K* = {y : g . y >= 0 for every generator g}`, so the dual is built by
//! swapping the two representations.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::vector::{all_finite, dot, neg, norm1, norm_inf, scale, unit};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Largest dimension for which facet enumeration runs.
pub const MAX_EXACT_DIM: usize = 4;

const RANK_TOL: f64 = 1e-12;
const NORMAL_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    dim: usize,
    generators: Vec<Vec<f64>>,
    halfspaces: Option<Vec<Vec<f64>>>,
    tol: f64,
}

/// Outcome of a certified membership query.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// `x = sum_i coefficients[i] * generators[i]` with nonnegative coefficients.
    Member { coefficients: Vec<f64> },
    /// `certificate` lies in `K*` and `certificate . x = value < 0`.
    Outside { certificate: Vec<f64>, value: f64 },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }
}

/// Interior point of the dual cone and the basis `a^j = y + e^j` built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBasis {
    pub y: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub gram: Vec<Vec<f64>>,
}

impl DualBasis {
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.gram[i][j])
    }

    /// Coordinates `c` with `x = sum_j c_j a^j`, obtained as `G^{-1} (a^i . x)_i`.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.basis.iter().map(|a| dot(a, x)).collect();
        self.solve_gram(&z)
    }

    /// Solves `G c = z`.
    pub fn solve_gram(&self, z: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(z);
        // G is symmetric positive definite for a linearly independent basis.
        let sol = match self.gram_matrix().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => self
                .gram_matrix()
                .lu()
                .solve(&rhs)
                .unwrap_or_else(|| DVector::from_element(z.len(), f64::NAN)),
        };
        sol.iter().copied().collect()
    }

    /// `sum_j c_j a^j`.
    pub fn combine(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (a, c) in self.basis.iter().zip(coords) {
            for (o, ai) in out.iter_mut().zip(a) {
                *o += c * ai;
            }
        }
        out
    }
}

/// Builds a validated cone from its generators. See [`Cone::new`].
pub fn make_cone(generators: Vec<Vec<f64>>, tol: f64) -> Result<Cone> {
    Cone::new(generators, tol)
}

impl Cone {
    /// Validates and normalizes the generators (1-norm in `(1/2, 1]`) and derives the
    /// halfspace representation when `d <= 4`.
    pub fn new(generators: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be finite and nonnegative, got {tol}"
            )));
        }
        let first = generators.first().ok_or(Error::EmptyGenerators)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("cone dimension must be positive".into()));
        }
        let mut normalized = Vec::with_capacity(generators.len());
        for (i, g) in generators.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.len(),
                });
            }
            if !all_finite(g) {
                return Err(Error::NonFinite(format!("generator {i}")));
            }
            let n = norm1(g);
            if n == 0.0 {
                return Err(Error::ZeroGenerator(i));
            }
            normalized.push(scale(g, pow2_scale(n)));
        }
        let halfspaces = (dim <= MAX_EXACT_DIM).then(|| facet_normals(&normalized, dim));
        Ok(Self {
            dim,
            generators: normalized,
            halfspaces,
            tol,
        })
    }

    /// The closed nonnegative orthant `R^d_+`.
    pub fn orthant(dim: usize) -> Result<Self> {
        Self::new((0..dim).map(|j| unit(dim, j)).collect(), DEFAULT_TOL)
    }

    /// Two-asset style solvency cone: generated by every `e^j` together with
    /// `pi[i][j] e^i - e^j` for `i != j` (exchanging asset `j` into asset `i`
    /// at cost factor `pi[i][j] >= 1`).
    pub fn solvency(pi: &[Vec<f64>]) -> Result<Self> {
        let d = pi.len();
        let mut gens: Vec<Vec<f64>> = (0..d).map(|j| unit(d, j)).collect();
        for i in 0..d {
            if pi[i].len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: pi[i].len(),
                });
            }
            for j in 0..d {
                if i != j {
                    let mut g = vec![0.0; d];
                    g[i] = pi[i][j];
                    g[j] = -1.0;
                    gens.push(g);
                }
            }
        }
        Self::new(gens, DEFAULT_TOL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Normalized generators (1-norm in `(1/2, 1]`).
    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Facet normals (1-norm in `(1/2, 1]`); `None` when `d > 4`.
    pub fn halfspaces(&self) -> Option<&[Vec<f64>]> {
        self.halfspaces.as_deref()
    }

    fn require_halfspaces(&self) -> Result<&[Vec<f64>]> {
        self.halfspaces.as_deref().ok_or(Error::UnsupportedDimension(self.dim))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `x in K` within the relative tolerance. Uses the halfspace cache when
    /// present and the LP oracle otherwise.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        match &self.halfspaces {
            Some(hs) => Ok(halfspace_member(hs, x, self.tol)),
            None => self.contains_lp(x),
        }
    }

    /// Halfspace route only. Errors above `d = 4`.
    pub fn contains_halfspace(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(halfspace_member(self.require_halfspaces()?, x, self.tol))
    }

    /// Conic-combination feasibility route: minimizes the l1 residual of
    /// `sum lambda_i g_i = x` over `lambda >= 0`.
    pub fn contains_lp(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.conic_residual(x)?.0 <= self.tol * norm1(x))
    }

    fn conic_residual(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut lp = LinearProgram::minimize();
        let lambdas: Vec<usize> = self
            .generators
            .iter()
            .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
            .collect();
        for j in 0..self.dim {
            let plus = lp.add_var(1.0, 0.0, f64::INFINITY);
            let minus = lp.add_var(1.0, 0.0, f64::INFINITY);
            let terms = lambdas
                .iter()
                .zip(&self.generators)
                .map(|(&v, g)| (v, g[j]))
                .chain([(plus, 1.0), (minus, -1.0)]);
            lp.add_row(terms, Relation::Eq, x[j]);
        }
        let sol = lp.solve()?;
        let coeffs = lambdas.iter().map(|&v| sol.values[v].max(0.0)).collect();
        Ok((sol.objective.max(0.0), coeffs))
    }

    /// Membership with a witness: nonnegative generator coefficients when
    /// `x in K`, otherwise a Farkas certificate `y in K*` with `y . x < 0`.
    pub fn certify(&self, x: &[f64]) -> Result<Membership> {
        self.check_dim(x)?;
        let (residual, coefficients) = self.conic_residual(x)?;
        if residual <= self.tol * norm1(x) {
            return Ok(Membership::Member { coefficients });
        }
        let (certificate, value) = self.farkas_certificate(x)?;
        Ok(Membership::Outside { certificate, value })
    }

    /// Minimizes `y . x` over `y in K*` with `|y_j| <= 1`.
    fn farkas_certificate(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut lp = LinearProgram::minimize();
        let ys: Vec<usize> = x.iter().map(|&xj| lp.add_var(xj, -1.0, 1.0)).collect();
        for g in &self.generators {
            lp.add_row(ys.iter().zip(g).map(|(&v, &gj)| (v, gj)), Relation::Ge, 0.0);
        }
        let sol = lp.solve()?;
        let y: Vec<f64> = ys.iter().map(|&v| sol.values[v]).collect();
        let value = dot(&y, x);
        Ok((y, value))
    }

    /// `y in K*`: `g . y >= -tol |y|_1` for every generator.
    pub fn dual_contains(&self, y: &[f64]) -> Result<bool> {
        self.check_dim(y)?;
        let slack = self.tol * norm1(y);
        Ok(self.generators.iter().all(|g| dot(g, y) >= -slack))
    }

    /// `K* = {y : g . y >= 0}`; its generators are the facet normals of `K`.
    pub fn dual_cone(&self) -> Result<Cone> {
        let normals = self.require_halfspaces()?.to_vec();
        Cone::new(normals, self.tol)
    }

    /// `K cap (-K) = {0}`, decided by testing `-g in K` for every generator
    /// with the LP oracle.
    pub fn is_proper(&self) -> Result<bool> {
        for g in &self.generators {
            if self.contains_lp(&neg(g))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Mutual generator membership.
    pub fn equivalent(&self, other: &Cone) -> Result<bool> {
        if self.dim != other.dim {
            return Ok(false);
        }
        for g in other.generators() {
            if !self.contains(g)? {
                return Ok(false);
            }
        }
        for g in &self.generators {
            if !other.contains(g)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Generators that are not conic combinations of the remaining distinct
    /// generators.
    pub fn extreme_rays(&self) -> Result<Vec<Vec<f64>>> {
        let mut distinct: Vec<Vec<f64>> = Vec::new();
        for g in &self.generators {
            if !distinct.iter().any(|h| approx_eq(h, g, DEDUP_TOL)) {
                distinct.push(g.clone());
            }
        }
        let mut rays = Vec::new();
        for (i, g) in distinct.iter().enumerate() {
            let others: Vec<Vec<f64>> = distinct
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, h)| h.clone())
                .collect();
            let extreme = if others.is_empty() {
                true
            } else {
                let rest = Cone {
                    dim: self.dim,
                    generators: others,
                    halfspaces: None,
                    tol: self.tol,
                };
                !rest.contains_lp(g)?
            };
            if extreme {
                rays.push(g.clone());
            }
        }
        Ok(rays)
    }

    /// Whether every canonical basis vector lies in `K`.
    pub fn contains_orthant(&self) -> Result<bool> {
        for j in 0..self.dim {
            if !self.contains(&unit(self.dim, j))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Whether every `e^j` lies in the interior of `K` (all facet normals have
    /// strictly positive entries beyond `margin`).
    pub fn orthant_in_interior(&self, margin: f64) -> Result<bool> {
        let hs = self.require_halfspaces()?;
        Ok(hs.iter().all(|n| n.iter().all(|&v| v > margin)))
    }

    /// Interior point `y` of `K*` with `y + e^j in K*` for all `j`, the basis
    /// `a^j = y + e^j` and its Gram matrix.
    ///
    /// `y` maximizes the smallest margin `min_i g_i . y` over the box
    /// `[-1, 1]^d` and is then scaled up (never down) until every `a^j` clears
    /// the membership tolerance.
    pub fn dual_interior_basis(&self) -> Result<DualBasis> {
        let d = self.dim;
        let mut lp = LinearProgram::maximize();
        let ys: Vec<usize> = (0..d).map(|_| lp.add_var(0.0, -1.0, 1.0)).collect();
        let margin = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        for g in &self.generators {
            let terms = ys.iter().zip(g).map(|(&v, &gj)| (v, gj)).chain([(margin, -1.0)]);
            lp.add_row(terms, Relation::Ge, 0.0);
        }
        let sol = lp.solve()?;
        let m = sol.values[margin];
        let floor = self.tol.max(1e-12);
        if m <= floor {
            return Err(Error::NotProper);
        }
        let y0: Vec<f64> = ys.iter().map(|&v| sol.values[v]).collect();
        // g_i . (s y0 + e^j) = s g_i . y0 + g_ij >= s m + g_ij
        let worst = self
            .generators
            .iter()
            .flat_map(|g| g.iter())
            .fold(f64::NEG_INFINITY, |acc, &gij| acc.max(floor - gij));
        let s = (worst / m).max(1.0);
        let y = scale(&y0, s);
        let basis: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let mut a = y.clone();
                a[j] += 1.0;
                a
            })
            .collect();
        let gram: Vec<Vec<f64>> = basis
            .iter()
            .map(|ai| basis.iter().map(|aj| dot(ai, aj)).collect())
            .collect();
        let out = DualBasis { y, basis, gram };
        if out.gram_matrix().determinant() <= 0.0 {
            return Err(Error::NotProper);
        }
        Ok(out)
    }

    /// `sup {c : v - c e^1 in K}`; `-inf` when no `c` works.
    pub fn liquidation_value(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        match &self.halfspaces {
            Some(hs) => liquidation_from_halfspaces(hs, v, self.tol),
            None => self.liquidation_lp(v),
        }
    }

    fn liquidation_lp(&self, v: &[f64]) -> Result<f64> {
        let mut lp = LinearProgram::maximize();
        let c = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let lambdas: Vec<usize> = self
            .generators
            .iter()
            .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
            .collect();
        for j in 0..self.dim {
            // v_j - c [j == 0] = sum lambda_i g_ij
            let mut terms: Vec<(usize, f64)> = lambdas.iter().zip(&self.generators).map(|(&l, g)| (l, g[j])).collect();
            if j == 0 {
                terms.push((c, 1.0));
            }
            lp.add_row(terms, Relation::Eq, v[j]);
        }
        match lp.solve() {
            Ok(sol) => Ok(sol.values[c]),
            Err(LpError::Infeasible) => Ok(f64::NEG_INFINITY),
            Err(LpError::Unbounded) => Err(Error::Unbounded),
            Err(e) => Err(e.into()),
        }
    }
}

/// Power of two `2^-e` with `n 2^-e` in `(1/2, 1]`. Scaling by it is exact, so
/// ratios of coordinates survive normalization bit for bit.
fn pow2_scale(n: f64) -> f64 {
    let e = n.log2().ceil() as i32;
    let mut f = 2f64.powi(-e);
    // log2 may round across an integer
    if n * f > 1.0 {
        f *= 0.5;
    } else if n * f <= 0.5 {
        f *= 2.0;
    }
    f
}

/// `sup {c : v - c e^1 in K}` from facet normals `n`: normals with `n_1 > 0`
/// bound `c` from above, those with `n_1 < 0` from below, and those with
/// `n_1 = 0` do not involve `c` at all.
pub(crate) fn liquidation_from_halfspaces(hs: &[Vec<f64>], v: &[f64], tol: f64) -> Result<f64> {
    let slack = tol * norm1(v);
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for n in hs {
        let nv = dot(n, v);
        if n[0] > NORMAL_TOL {
            upper = upper.min(nv / n[0]);
        } else if n[0] < -NORMAL_TOL {
            lower = lower.max(nv / n[0]);
        } else if nv < -slack {
            return Ok(f64::NEG_INFINITY);
        }
    }
    if upper == f64::INFINITY {
        return Err(Error::Unbounded);
    }
    if lower > upper + slack {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(upper)
}

fn halfspace_member(hs: &[Vec<f64>], x: &[f64], tol: f64) -> bool {
    let slack = tol * norm1(x);
    hs.iter().all(|n| dot(n, x) >= -slack)
}

fn approx_eq(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Facet normals of `cone(gens)` (1-norm in `(1/2, 1]`, deduplicated).
///
/// Let `r` be the rank of the generators and `C` an orthonormal basis of the
/// orthogonal complement of their span. Every `+-c` for `c in C` is a
/// (two-sided) facet. The remaining facets are the hyperplanes spanned by
/// `r - 1` generators together with `C` that leave all generators on one side.
fn facet_normals(gens: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        let has_pos = gens.iter().any(|g| g[0] > 0.0);
        let has_neg = gens.iter().any(|g| g[0] < 0.0);
        return match (has_pos, has_neg) {
            (true, true) => Vec::new(),
            (true, false) => vec![vec![1.0]],
            _ => vec![vec![-1.0]],
        };
    }
    let g = DMatrix::from_fn(gens.len(), dim, |i, j| gens[i][j]);
    let gtg = g.transpose() * &g;
    let eig = SymmetricEigen::new(gtg);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let complement: Vec<Vec<f64>> = (0..dim)
        .filter(|&k| eig.eigenvalues[k] <= RANK_TOL * lmax)
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let rank = dim - complement.len();

    let mut normals: Vec<Vec<f64>> = Vec::new();
    let push = |n: Vec<f64>, normals: &mut Vec<Vec<f64>>| {
        let unit_n = scale(&n, 1.0 / norm1(&n));
        if !normals
            .iter()
            .any(|m| approx_eq(&scale(m, 1.0 / norm1(m)), &unit_n, DEDUP_TOL))
        {
            normals.push(n);
        }
    };
    for c in &complement {
        let n = scale(c, pow2_scale(norm1(c)));
        push(neg(&n), &mut normals);
        push(n, &mut normals);
    }
    if rank == 0 {
        return normals;
    }
    for subset in (0..gens.len()).combinations(rank - 1) {
        let rows: Vec<&[f64]> = subset
            .iter()
            .map(|&i| gens[i].as_slice())
            .chain(complement.iter().map(|c| c.as_slice()))
            .collect();
        let n = cofactor_normal(&rows, dim);
        let scale_n = norm_inf(&n);
        if scale_n < NORMAL_TOL {
            continue;
        }
        let n = scale(&n, pow2_scale(norm1(&n)));
        let products: Vec<f64> = gens.iter().map(|g| dot(g, &n)).collect();
        let all_nonneg = products.iter().all(|&p| p >= -NORMAL_TOL);
        let all_nonpos = products.iter().all(|&p| p <= NORMAL_TOL);
        match (all_nonneg, all_nonpos) {
            (true, false) => push(n, &mut normals),
            (false, true) => push(neg(&n), &mut normals),
            _ => {}
        }
    }
    normals
}

/// Generalized cross product of `d - 1` vectors in `R^d`: the vector of signed
/// maximal minors, orthogonal to every row.
fn cofactor_normal(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    debug_assert_eq!(rows.len(), dim - 1);
    (0..dim)
        .map(|skip| {
            let minor = DMatrix::from_fn(dim - 1, dim - 1, |i, j| {
                let col = if j < skip { j } else { j + 1 };
                rows[i][col]
            });
            let sign = if skip % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect()
}
