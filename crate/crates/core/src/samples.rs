//! Random cones, paths and models for property tests, benchmarks and the
//! acceptance suite. All generators are deterministic given the RNG.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cone::{Cone, DEFAULT_TOL};
use crate::error::Result;
use crate::model::{Model, NodeSpec};
use crate::paths::GridPath;
use crate::vector::{add, neg, scale};

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Full solvency cone with random cost factors `pi_ij` in `(1, 1 + max_cost]`.
/// Every `e^j` lies in its interior.
pub fn solvency_cone<R: Rng>(rng: &mut R, d: usize, max_cost: f64) -> Cone {
    let pi: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        1.0 + rng.gen_range(0.05..=1.0) * max_cost
                    }
                })
                .collect()
        })
        .collect();
    Cone::solvency(&pi).expect("valid cost matrix")
}

/// The two-asset cone with cost factor `c`: generated by `e^1, e^2,
/// (c, -1), (-1, c)`.
pub fn two_asset_cone(c: f64) -> Cone {
    Cone::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![c, -1.0], vec![-1.0, c]],
        DEFAULT_TOL,
    )
    .expect("valid generators")
}

/// A pointed cone from `d..=d + 3` random generators clustered around a
/// random direction in the positive orthant.
pub fn proper_cone<R: Rng>(rng: &mut R, d: usize) -> Cone {
    let axis: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..1.5)).collect();
    let count = rng.gen_range(d..=d + 3);
    let gens: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let noise: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            add(&axis, &noise)
        })
        .collect();
    match Cone::new(gens, DEFAULT_TOL) {
        Ok(k) if k.is_proper().unwrap_or(false) && k.dual_interior_basis().is_ok() => k,
        _ => proper_cone(rng, d),
    }
}

/// A cone containing `R^d_+` whose unit vectors may sit on the boundary:
/// the orthant plus a few random exchange rays.
pub fn orthant_extension<R: Rng>(rng: &mut R, d: usize) -> Cone {
    let mut gens: Vec<Vec<f64>> = (0..d).map(|j| crate::vector::unit(d, j)).collect();
    let extra = rng.gen_range(0..=d);
    for _ in 0..extra {
        let i = rng.gen_range(0..d);
        let mut j = rng.gen_range(0..d);
        while j == i {
            j = rng.gen_range(0..d);
        }
        let mut g = vec![0.0; d];
        g[i] = 1.0 + rng.gen_range(0.1..1.0);
        g[j] = -1.0;
        gens.push(g);
    }
    Cone::new(gens, DEFAULT_TOL).expect("valid generators")
}

/// A K-decreasing path with `steps + 1` grid points: a random start followed
/// by increments drawn from `-K` (some of them zero).
pub fn k_decreasing_path<R: Rng>(rng: &mut R, cone: &Cone, steps: usize) -> Result<GridPath> {
    let d = cone.dim();
    let gens = cone.generators();
    let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut values = vec![x.clone()];
    let mut t = 0.0;
    let mut times = vec![t];
    for _ in 0..steps {
        if !rng.gen_bool(0.2) {
            let mut inc = vec![0.0; d];
            for g in gens {
                if rng.gen_bool(0.6) {
                    inc = add(&inc, &scale(g, rng.gen_range(0.0..2.0)));
                }
            }
            x = add(&x, &neg(&inc));
        }
        t += rng.gen_range(0.1..1.0);
        times.push(t);
        values.push(x.clone());
    }
    GridPath::new(times, values, false)
}

/// Shape and price dynamics of a random scenario tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    pub steps: usize,
    pub branching: usize,
    /// Largest one-step relative price move.
    pub volatility: f64,
}

/// A random model on a full `branching`-ary tree: each risky price moves by a
/// random factor per branch, `Y` is the vector of risky prices, and branch
/// probabilities are random. Siblings carry distinct labels, so `Y`
/// generates the filtration.
pub fn random_model<R: Rng>(rng: &mut R, cone: &Cone, shape: &TreeShape) -> Model {
    build_model(rng, cone, shape, |rng, _| random_probabilities(rng, shape.branching))
}

/// Like [`random_model`], but the root's children are equally likely and all
/// nodes at a given depth share one branch distribution, so swapping the
/// subtrees of two root children preserves the law.
pub fn exchangeable_model<R: Rng>(rng: &mut R, cone: &Cone, shape: &TreeShape) -> Model {
    let per_depth: Vec<Vec<f64>> = (0..shape.steps)
        .map(|k| {
            if k == 0 {
                vec![1.0 / shape.branching as f64; shape.branching]
            } else {
                random_probabilities(rng, shape.branching)
            }
        })
        .collect();
    build_model(rng, cone, shape, |_, k| per_depth[k].clone())
}

fn build_model<R: Rng, F: Fn(&mut R, usize) -> Vec<f64>>(
    rng: &mut R,
    cone: &Cone,
    shape: &TreeShape,
    probs_at: F,
) -> Model {
    let d = cone.dim();
    let mut nodes = vec![NodeSpec {
        id: "r".into(),
        parent: None,
        prob: 1.0,
        y: vec![1.0; d - 1],
        s: vec![1.0; d],
    }];
    let mut frontier = vec![0usize];
    for k in 0..shape.steps {
        let mut next = Vec::new();
        for &parent in &frontier {
            let probs = probs_at(rng, k);
            let base = nodes[parent].s.clone();
            let pid = nodes[parent].id.clone();
            for (b, p) in probs.into_iter().enumerate() {
                let mut s = base.clone();
                for sj in s.iter_mut().skip(1) {
                    // quantized factors keep labels short in JSON
                    let f = 1.0 + shape.volatility * (rng.gen_range(-1.0..1.0_f64) * 64.0).round() / 64.0;
                    *sj *= f.max(0.05);
                }
                // tie-break so siblings never share a label
                s[d - 1] *= 1.0 + 1e-3 * b as f64;
                nodes.push(NodeSpec {
                    id: format!("{pid}{b}"),
                    parent: Some(pid.clone()),
                    prob: p,
                    y: s[1..].to_vec(),
                    s,
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    Model::new(cone.clone(), nodes, 0).expect("well-formed tree")
}

/// `n` positive probabilities summing to 1, the last one taking the residual.
pub fn random_probabilities<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..4.0_f64).round()).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = probs[..n - 1].iter().sum();
    probs[n - 1] = 1.0 - head;
    probs
}

/// A two-asset model whose driving process has independent increments: every
/// node branches with the same moves and probabilities.
pub fn independent_increment_model<R: Rng>(rng: &mut R, cone: &Cone, steps: usize, branching: usize) -> Model {
    let moves: Vec<f64> = {
        let mut m: Vec<f64> = (0..branching)
            .map(|b| 0.25 * (b as f64 - (branching as f64 - 1.0) / 2.0))
            .collect();
        m.shuffle(rng);
        m
    };
    let probs = random_probabilities(rng, branching);
    let d = cone.dim();
    let mut nodes = vec![NodeSpec {
        id: "r".into(),
        parent: None,
        prob: 1.0,
        y: vec![0.0],
        s: vec![1.0; d],
    }];
    let mut frontier = vec![0usize];
    for _ in 0..steps {
        let mut next = Vec::new();
        for &parent in &frontier {
            for (b, (&mv, &p)) in moves.iter().zip(&probs).enumerate() {
                let y = nodes[parent].y[0] + mv;
                let mut s = vec![1.0; d];
                for sj in s.iter_mut().skip(1) {
                    *sj = y.exp();
                }
                let pid = nodes[parent].id.clone();
                nodes.push(NodeSpec {
                    id: format!("{pid}{b}"),
                    parent: Some(pid),
                    prob: p,
                    y: vec![y],
                    s,
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    Model::new(cone.clone(), nodes, 0).expect("well-formed tree")
}

/// A uniformly random leaf order.
pub fn shuffled_leaves<R: Rng>(rng: &mut R, model: &Model) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.tree().leaves().len()).collect();
    order.shuffle(rng);
    order
}

/// A random endowment in the interior of `K`: a positive holding of every
/// asset plus a small random tilt.
pub fn interior_endowment<R: Rng>(rng: &mut R, cone: &Cone) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..cone.dim()).map(|_| rng.gen_range(-0.3..1.5)).collect();
        if cone.contains(&x).unwrap_or(false) && x.iter().sum::<f64>() > 0.3 {
            return x;
        }
    }
}
