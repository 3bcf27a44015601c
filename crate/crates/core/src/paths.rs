//! Vector-valued step paths on finite time grids.
//!
//! A [`GridPath`] is right-continuous and piecewise constant between grid
//! points. When `pre_initial` is set the path is read as a trading strategy
//! with `X(0-) = 0`, so the value at `t_0` is itself an initial jump.

use crate::cone::{Cone, DualBasis};
use crate::error::{Error, Result};
use crate::vector::{all_finite, dot, neg, norm1, scale, sub};

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    pre_initial: bool,
}

impl GridPath {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, pre_initial: bool) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidPath("empty time grid".into()));
        }
        if times.len() != values.len() {
            return Err(Error::InvalidPath(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath("first time must be 0".into()));
        }
        if !all_finite(&times) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(
                "times must be finite and strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::InvalidPath("values must have positive dimension".into()));
        }
        for (k, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if !all_finite(v) {
                return Err(Error::NonFinite(format!("path value at step {k}")));
            }
        }
        Ok(Self {
            times,
            values,
            pre_initial,
        })
    }

    /// Path on the integer grid `0, 1, ..., n-1`.
    pub fn on_unit_grid(values: Vec<Vec<f64>>, pre_initial: bool) -> Result<Self> {
        let times = (0..values.len()).map(|k| k as f64).collect();
        Self::new(times, values, pre_initial)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn pre_initial(&self) -> bool {
        self.pre_initial
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Jump at each grid point: `X(t_0) - X(0-)` first (zero unless
    /// `pre_initial`), then `X(t_k) - X(t_{k-1})`.
    pub fn increments(&self) -> Vec<Vec<f64>> {
        let first = if self.pre_initial {
            self.values[0].clone()
        } else {
            vec![0.0; self.dim()]
        };
        std::iter::once(first)
            .chain(self.values.windows(2).map(|w| sub(&w[1], &w[0])))
            .collect()
    }
}

/// Every jump lies in `-K`. Consecutive jumps suffice because `K` is a convex cone.
pub fn is_k_decreasing(path: &GridPath, cone: &Cone) -> Result<bool> {
    Ok(first_non_decreasing_step(path, cone)?.is_none())
}

fn first_non_decreasing_step(path: &GridPath, cone: &Cone) -> Result<Option<usize>> {
    if path.dim() != cone.dim() {
        return Err(Error::DimensionMismatch {
            expected: cone.dim(),
            got: path.dim(),
        });
    }
    for (k, inc) in path.increments().iter().enumerate() {
        if !cone.contains(&neg(inc))? {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Scalar path `Var(t_k) = sum_{j <= k} |dX(t_j)|_1`, the initial jump included
/// when `pre_initial` holds.
pub fn total_variation(path: &GridPath) -> GridPath {
    let mut acc = 0.0;
    let values = path
        .increments()
        .iter()
        .map(|inc| {
            acc += norm1(inc);
            vec![acc]
        })
        .collect();
    GridPath {
        times: path.times.clone(),
        values,
        pre_initial: false,
    }
}

/// Unit-variation jump `dX / |dX|_1` at a grid step with positive variation.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub step: usize,
    pub direction: Vec<f64>,
}

/// Bounded-variation decomposition of a K-decreasing path.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub basis: DualBasis,
    /// `z[j][k] = a^j . X(t_k)`, each nonincreasing in `k`.
    pub z: Vec<Vec<f64>>,
    /// `coords[k] = G^{-1} (z[.][k])`, so `X(t_k) = sum_j coords[k][j] a^j`.
    pub coords: Vec<Vec<f64>>,
    pub variation: GridPath,
    pub derivatives: Vec<Derivative>,
}

impl Decomposition {
    /// `sum_j coords[k][j] a^j` for every grid point.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.coords.iter().map(|c| self.basis.combine(c)).collect()
    }
}

pub fn decompose(path: &GridPath, cone: &Cone) -> Result<Decomposition> {
    if let Some(step) = first_non_decreasing_step(path, cone)? {
        return Err(Error::NotKDecreasing(step));
    }
    let basis = cone.dual_interior_basis()?;
    let z: Vec<Vec<f64>> = basis
        .basis
        .iter()
        .map(|a| path.values.iter().map(|x| dot(a, x)).collect())
        .collect();
    let coords = (0..path.len())
        .map(|k| {
            let zk: Vec<f64> = z.iter().map(|zj| zj[k]).collect();
            basis.solve_gram(&zk)
        })
        .collect();
    let derivatives = path
        .increments()
        .into_iter()
        .enumerate()
        .filter_map(|(step, inc)| {
            let var = norm1(&inc);
            (var > 0.0).then(|| Derivative {
                step,
                direction: scale(&inc, 1.0 / var),
            })
        })
        .collect();
    Ok(Decomposition {
        basis,
        z,
        coords,
        variation: total_variation(path),
        derivatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::DEFAULT_TOL;

    fn example_path() -> GridPath {
        GridPath::on_unit_grid(vec![vec![3.0, 2.0], vec![2.0, 2.0], vec![2.0, 0.5]], false).unwrap()
    }

    fn solvency_125() -> Cone {
        Cone::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.25, -1.0], vec![-1.0, 1.25]],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    #[test]
    fn path_validation() {
        assert!(GridPath::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]], false).is_err());
        assert!(GridPath::new(vec![1.0], vec![vec![1.0]], false).is_err());
        assert!(GridPath::new(vec![0.0, 1.0], vec![vec![1.0]], false).is_err());
        assert!(GridPath::new(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]], false).is_err());
        assert!(GridPath::new(vec![0.0], vec![vec![f64::INFINITY]], false).is_err());
    }

    #[test]
    fn orthant_monotonicity() {
        let k = Cone::orthant(2).unwrap();
        assert!(is_k_decreasing(&example_path(), &k).unwrap());
        let up = GridPath::on_unit_grid(vec![vec![3.0, 2.0], vec![3.1, 1.0]], false).unwrap();
        assert!(!is_k_decreasing(&up, &k).unwrap());
        // as a strategy the initial jump (3, 2) would be a purchase
        let strat = GridPath::on_unit_grid(example_path().values().to_vec(), true).unwrap();
        assert!(!is_k_decreasing(&strat, &k).unwrap());
    }

    #[test]
    fn solvency_trade_is_decreasing() {
        let k = solvency_125();
        let p = GridPath::on_unit_grid(vec![vec![0.0, 0.0], vec![-0.5, 0.4]], false).unwrap();
        assert!(is_k_decreasing(&p, &k).unwrap());
    }

    #[test]
    fn variation_examples() {
        let v = total_variation(&example_path());
        assert_eq!(v.values(), &[vec![0.0], vec![1.0], vec![2.5]]);
        let c = GridPath::on_unit_grid(vec![vec![1.0, 1.0]; 3], false).unwrap();
        assert!(total_variation(&c).values().iter().all(|v| v[0] == 0.0));
        let jump = GridPath::on_unit_grid(vec![vec![-1.0, -1.0]], true).unwrap();
        assert_eq!(total_variation(&jump).values(), &[vec![2.0]]);
    }

    #[test]
    fn orthant_decomposition() {
        let k = Cone::orthant(2).unwrap();
        let d = decompose(&example_path(), &k).unwrap();
        assert_eq!(d.basis.y, vec![1.0, 1.0]);
        assert_eq!(d.z, vec![vec![8.0, 6.0, 4.5], vec![7.0, 6.0, 3.0]]);
        assert!((d.coords[0][0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((d.coords[0][1] - 1.0 / 3.0).abs() < 1e-14);
        for (x, r) in example_path().values().iter().zip(d.reconstruct()) {
            assert!(x.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        assert_eq!(d.derivatives.len(), 2);
        assert_eq!(d.derivatives[0].direction, vec![-1.0, 0.0]);
        assert_eq!(d.derivatives[1].direction, vec![0.0, -1.0]);
    }

    #[test]
    fn constant_path_has_no_derivatives() {
        let k = solvency_125();
        let c = GridPath::on_unit_grid(vec![vec![1.0, -0.5]; 4], false).unwrap();
        let d = decompose(&c, &k).unwrap();
        assert!(d.derivatives.is_empty());
        assert!(d.variation.values().iter().all(|v| v[0] == 0.0));
        for zj in &d.z {
            assert!(zj.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn decompose_rejects_increasing_path() {
        let k = Cone::orthant(2).unwrap();
        let up = GridPath::on_unit_grid(vec![vec![3.0, 2.0], vec![3.1, 1.0]], false).unwrap();
        assert!(matches!(decompose(&up, &k), Err(Error::NotKDecreasing(1))));
    }
}
