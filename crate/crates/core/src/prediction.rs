//! Finite prediction processes and the Dirac adaptedness check.
//!
//! For a path-valued target `X` (one full path per leaf) the prediction
//! process at an atom `A` of time `k` is the conditional law `P(X in . | A)`.
//! Probabilities are kept as exact rationals (every `f64` is a dyadic
//! rational), so towers and terminal Diracs hold with equality.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{label_bits, Model};

/// Per-leaf full paths of a target process, each of length `horizon + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTarget {
    paths: Vec<Vec<Vec<f64>>>,
}

impl PathTarget {
    pub fn from_leaf_paths(model: &Model, paths: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let tree = model.tree();
        if paths.len() != tree.leaves().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} target paths for {} leaves",
                paths.len(),
                tree.leaves().len()
            )));
        }
        if let Some(bad) = paths.iter().position(|p| p.len() != tree.horizon() + 1) {
            return Err(Error::ShapeMismatch(format!(
                "target path {bad} has {} points, expected {}",
                paths[bad].len(),
                tree.horizon() + 1
            )));
        }
        Ok(Self { paths })
    }

    /// The adapted target reading `values[node]` along each leaf's ancestry.
    pub fn from_node_values(model: &Model, values: &[Vec<f64>]) -> Result<Self> {
        let tree = model.tree();
        if values.len() != tree.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} node values for {} nodes",
                values.len(),
                tree.len()
            )));
        }
        let paths = tree
            .leaves()
            .iter()
            .map(|&l| tree.ancestry(l).iter().map(|&i| values[i].clone()).collect())
            .collect();
        Ok(Self { paths })
    }

    /// The driving process `Y` itself.
    pub fn driving(model: &Model) -> Self {
        Self::from_node_values(model, model.driving_labels()).expect("one label per node")
    }

    pub fn paths(&self) -> &[Vec<Vec<f64>>] {
        &self.paths
    }
}

/// Exact conditional law of the target on one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTable {
    pub node: usize,
    pub time: usize,
    /// `P(A)`.
    pub probability: BigRational,
    /// `(path index, P(X = path | A))`, sorted by path index, masses positive.
    pub masses: Vec<(usize, BigRational)>,
}

impl AtomTable {
    pub fn total(&self) -> BigRational {
        self.masses.iter().fold(BigRational::zero(), |acc, (_, m)| acc + m)
    }

    pub fn is_dirac(&self) -> bool {
        self.masses.len() == 1 && self.masses[0].1.is_one()
    }

    pub fn masses_f64(&self) -> Vec<(usize, f64)> {
        self.masses.iter().map(|(i, m)| (*i, to_f64(m))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionProcess {
    /// Distinct target paths, in order of first appearance over the leaves.
    pub paths: Vec<Vec<Vec<f64>>>,
    /// Path index of every leaf.
    pub leaf_path: Vec<usize>,
    /// One table per node (every node is an atom at its own time).
    pub tables: Vec<AtomTable>,
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite probability")
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact leaf probabilities `prod of branch probabilities`.
pub fn exact_leaf_probabilities(model: &Model) -> Vec<BigRational> {
    let tree = model.tree();
    tree.leaves()
        .iter()
        .map(|&l| {
            tree.ancestry(l)
                .iter()
                .fold(BigRational::one(), |acc, &i| acc * exact(tree.node(i).prob))
        })
        .collect()
}

pub fn prediction_process(model: &Model, target: &PathTarget) -> Result<PredictionProcess> {
    let tree = model.tree();
    if target.paths.len() != tree.leaves().len() {
        return Err(Error::ShapeMismatch("target does not match the model's leaves".into()));
    }
    let mut paths = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let leaf_path: Vec<usize> = target
        .paths
        .iter()
        .map(|p| {
            let key: Vec<u64> = p.iter().flat_map(|v| label_bits(v)).collect();
            *index.entry(key).or_insert_with(|| {
                paths.push(p.clone());
                paths.len() - 1
            })
        })
        .collect();
    let leaf_prob = exact_leaf_probabilities(model);
    let tables = (0..tree.len())
        .map(|node| {
            let mut probability = BigRational::zero();
            let mut masses: Vec<(usize, BigRational)> = Vec::new();
            for pos in tree.leaves_under(node) {
                probability += &leaf_prob[pos];
                match masses.iter_mut().find(|(i, _)| *i == leaf_path[pos]) {
                    Some((_, m)) => *m += &leaf_prob[pos],
                    None => masses.push((leaf_path[pos], leaf_prob[pos].clone())),
                }
            }
            for (_, m) in masses.iter_mut() {
                *m = &*m / &probability;
            }
            masses.sort_by_key(|(i, _)| *i);
            AtomTable {
                node,
                time: tree.node(node).time,
                probability,
                masses,
            }
        })
        .collect();
    Ok(PredictionProcess {
        paths,
        leaf_path,
        tables,
    })
}

impl PredictionProcess {
    pub fn table(&self, node: usize) -> &AtomTable {
        &self.tables[node]
    }

    /// First internal node whose table differs from the probability mixture of
    /// its children's tables.
    pub fn tower_violation(&self, model: &Model) -> Option<usize> {
        let tree = model.tree();
        (0..tree.len()).find(|&node| {
            let kids = tree.children(node);
            if kids.is_empty() {
                return false;
            }
            let mut mix: Vec<BigRational> = vec![BigRational::zero(); self.paths.len()];
            for &c in kids {
                let child = &self.tables[c];
                let weight = &child.probability / &self.tables[node].probability;
                for (i, m) in &child.masses {
                    mix[*i] += &weight * m;
                }
            }
            let own: Vec<(usize, BigRational)> = mix.into_iter().enumerate().filter(|(_, m)| !m.is_zero()).collect();
            own != self.tables[node].masses
        })
    }

    /// First leaf whose terminal table is not the Dirac at its own path.
    pub fn terminal_violation(&self, model: &Model) -> Option<usize> {
        let tree = model.tree();
        tree.leaves()
            .iter()
            .enumerate()
            .find(|&(pos, &leaf)| {
                let t = &self.tables[leaf];
                !(t.is_dirac() && t.masses[0].0 == self.leaf_path[pos])
            })
            .map(|(_, &leaf)| leaf)
    }

    /// Every table sums to one exactly.
    pub fn normalized(&self) -> bool {
        self.tables.iter().all(|t| t.total().is_one())
    }

    /// The table read at `(tau(omega), omega)` for every leaf, where `tau`
    /// stops at the first node on the path with `stop(node)` (or at the leaf).
    pub fn stopped_tables<F: Fn(usize) -> bool>(&self, model: &Model, stop: F) -> Vec<&AtomTable> {
        let tree = model.tree();
        tree.leaves()
            .iter()
            .map(|&l| {
                let node = tree.ancestry(l).into_iter().find(|&i| stop(i)).unwrap_or(l);
                &self.tables[node]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracViolation {
    pub k: usize,
    pub u: usize,
    pub node: usize,
    pub id: String,
}

/// One row of the recovered representation `value_u = f(Y_0, ..., Y_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionEntry {
    pub time: usize,
    pub driving_path: Vec<Vec<f64>>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracCertificate {
    pub passed: bool,
    pub violation: Option<DiracViolation>,
    /// Populated only when the check passes.
    pub function_table: Vec<FunctionEntry>,
    /// Driving paths that map to two different values; nonzero only when the
    /// filtration is finer than the one generated by `Y`.
    pub conflicts: usize,
}

/// Checks that for every atom at time `k` and every `u <= k`, the marginal of
/// the atom's table at time `u` is a point mass.
pub fn dirac_check(pred: &PredictionProcess, model: &Model) -> DiracCertificate {
    let tree = model.tree();
    for k in 0..=tree.horizon() {
        for node in tree.nodes_at(k) {
            let table = &pred.tables[node];
            for u in 0..=k {
                let first = &pred.paths[table.masses[0].0][u];
                let dirac = table
                    .masses
                    .iter()
                    .all(|(i, _)| label_bits(&pred.paths[*i][u]) == label_bits(first));
                if !dirac {
                    return DiracCertificate {
                        passed: false,
                        violation: Some(DiracViolation {
                            k,
                            u,
                            node,
                            id: tree.node(node).id.clone(),
                        }),
                        function_table: Vec::new(),
                        conflicts: 0,
                    };
                }
            }
        }
    }
    let mut function_table: Vec<FunctionEntry> = Vec::new();
    let mut seen: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
    let mut conflicts = 0;
    for &node in tree.topological_order() {
        let u = tree.node(node).time;
        let table = &pred.tables[node];
        let value = pred.paths[table.masses[0].0][u].clone();
        let driving_path: Vec<Vec<f64>> = tree.ancestry(node).iter().map(|&i| model.driving(i).to_vec()).collect();
        let key = (u, driving_path.iter().flat_map(|y| label_bits(y)).collect());
        match seen.get(&key) {
            Some(&e) => {
                if label_bits(&function_table[e].value) != label_bits(&value) {
                    conflicts += 1;
                }
            }
            None => {
                seen.insert(key, function_table.len());
                function_table.push(FunctionEntry {
                    time: u,
                    driving_path,
                    value,
                });
            }
        }
    }
    DiracCertificate {
        passed: true,
        violation: None,
        function_table,
        conflicts,
    }
}
