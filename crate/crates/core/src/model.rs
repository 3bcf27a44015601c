//! Finite filtered market models on scenario trees.
//!
//! Each node of a [`ScenarioTree`] is an atom of the filtration at its time
//! index. A [`Model`] attaches to every node a driving label `Y` and a price
//! vector `S` (numeraire first, constant 1), and fixes the solvency cone `K`.
//! Trades are per-node increments of the cumulative strategy `B` and execute at
//! the node's own prices.

use std::collections::HashMap;

use crate::cone::Cone;
use crate::error::{Error, Result};
use crate::vector::{add, all_finite, hadamard, neg, unit};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: String,
    pub parent: Option<usize>,
    pub time: usize,
    /// Conditional probability of this node given its parent (for roots:
    /// its unconditional probability).
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
    leaves: Vec<usize>,
    leaf_pos: Vec<Option<usize>>,
    order: Vec<usize>,
    horizon: usize,
}

impl ScenarioTree {
    /// Builds the tree from `(id, parent index, branch probability)` triples.
    ///
    /// Nodes without a parent sit at time 0. More than one such node is
    /// allowed: a forest models information revealed before the first trade.
    pub fn new(nodes: Vec<(String, Option<usize>, f64)>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let mut seen = HashMap::new();
        for (i, (id, parent, _)) in nodes.iter().enumerate() {
            if seen.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {id:?}")));
            }
            if let Some(p) = parent {
                if *p >= n {
                    return Err(Error::InvalidTree(format!("node {id:?} has unknown parent {p}")));
                }
                if *p == i {
                    return Err(Error::InvalidTree(format!("node {id:?} is its own parent")));
                }
            }
        }
        let mut time = vec![usize::MAX; n];
        for start in 0..n {
            let mut chain = Vec::new();
            let mut cur = start;
            while time[cur] == usize::MAX {
                chain.push(cur);
                if chain.len() > n {
                    return Err(Error::InvalidTree("parent links contain a cycle".into()));
                }
                match nodes[cur].1 {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            let t = if time[cur] == usize::MAX { 0 } else { time[cur] + 1 };
            if time[cur] == usize::MAX {
                time[cur] = 0;
                chain.pop();
            }
            for (off, &c) in chain.iter().rev().enumerate() {
                time[c] = t + off;
            }
        }
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (i, (_, parent, _)) in nodes.iter().enumerate() {
            match parent {
                Some(p) => children[*p].push(i),
                None => roots.push(i),
            }
        }
        let horizon = *time.iter().max().unwrap();
        let leaves: Vec<usize> = (0..n).filter(|&i| children[i].is_empty()).collect();
        if let Some(&bad) = leaves.iter().find(|&&l| time[l] != horizon) {
            return Err(Error::InvalidTree(format!(
                "leaf {:?} ends at time {} but the horizon is {horizon}",
                nodes[bad].0, time[bad]
            )));
        }
        let mut leaf_pos = vec![None; n];
        for (pos, &l) in leaves.iter().enumerate() {
            leaf_pos[l] = Some(pos);
        }
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<usize> = roots.iter().rev().copied().collect();
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev());
        }
        let nodes = nodes
            .into_iter()
            .zip(time)
            .map(|((id, parent, prob), time)| TreeNode { id, parent, time, prob })
            .collect();
        Ok(Self {
            nodes,
            children,
            roots,
            leaves,
            leaf_pos,
            order,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Leaf node indices; a leaf's position in this list is its leaf index.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf_index(&self, node: usize) -> Option<usize> {
        self.leaf_pos[node]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Parents before children (depth-first, children in input order).
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Node indices from the root down to `node` inclusive.
    pub fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Unconditional probability of the atom `node`.
    pub fn path_probability(&self, node: usize) -> f64 {
        self.ancestry(node).iter().map(|&i| self.nodes[i].prob).product()
    }

    /// Leaf indices (positions in [`Self::leaves`]) below `node`.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            if let Some(pos) = self.leaf_pos[i] {
                out.push(pos);
            }
            stack.extend(self.children[i].iter());
        }
        out.sort_unstable();
        out
    }

    /// Nodes at time `k` in topological order.
    pub fn nodes_at(&self, k: usize) -> Vec<usize> {
        self.order
            .iter()
            .copied()
            .filter(|&i| self.nodes[i].time == k)
            .collect()
    }
}

/// Input record for one node of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub parent: Option<String>,
    pub prob: f64,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    tree: ScenarioTree,
    cone: Cone,
    y: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    aux_dims: usize,
}

impl Model {
    /// Structural construction: ids, parent links and vector dimensions.
    /// Value-level invariants are checked by [`validate_model`].
    ///
    /// The last `aux_dims` coordinates of `Y` carry external randomization
    /// that is observed but is not part of the market's driving process.
    pub fn new(cone: Cone, nodes: Vec<NodeSpec>, aux_dims: usize) -> Result<Self> {
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut triples = Vec::with_capacity(nodes.len());
        for n in &nodes {
            let parent = match &n.parent {
                Some(pid) => Some(
                    *index
                        .get(pid.as_str())
                        .ok_or_else(|| Error::InvalidTree(format!("node {:?} has unknown parent {pid:?}", n.id)))?,
                ),
                None => None,
            };
            triples.push((n.id.clone(), parent, n.prob));
        }
        let tree = ScenarioTree::new(triples)?;
        let (y, s) = nodes.into_iter().map(|n| (n.y, n.s)).unzip();
        Self::from_parts(tree, cone, y, s, aux_dims)
    }

    pub fn from_parts(
        tree: ScenarioTree,
        cone: Cone,
        y: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        aux_dims: usize,
    ) -> Result<Self> {
        let n = tree.len();
        if y.len() != n || s.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} nodes but {} driving labels and {} price vectors",
                y.len(),
                s.len()
            )));
        }
        let p = y[0].len();
        for (i, (yi, si)) in y.iter().zip(&s).enumerate() {
            let id = &tree.node(i).id;
            if yi.len() != p {
                return Err(Error::ShapeMismatch(format!(
                    "node {id:?}: driving label has {} entries, expected {p}",
                    yi.len()
                )));
            }
            if si.len() != cone.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "node {id:?}: price has {} entries, expected {}",
                    si.len(),
                    cone.dim()
                )));
            }
            if !all_finite(yi) || !all_finite(si) {
                return Err(Error::NonFinite(format!("labels of node {id:?}")));
            }
        }
        if aux_dims > p {
            return Err(Error::ShapeMismatch(format!(
                "{aux_dims} auxiliary coordinates but driving labels have {p}"
            )));
        }
        Ok(Self {
            tree,
            cone,
            y,
            s,
            aux_dims,
        })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    pub fn driving(&self, node: usize) -> &[f64] {
        &self.y[node]
    }

    pub fn prices(&self, node: usize) -> &[f64] {
        &self.s[node]
    }

    pub fn driving_labels(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn price_labels(&self) -> &[Vec<f64>] {
        &self.s
    }

    /// Number of assets `d`.
    pub fn asset_dim(&self) -> usize {
        self.cone.dim()
    }

    /// Dimension `p` of the driving labels, auxiliary coordinates included.
    pub fn driving_dim(&self) -> usize {
        self.y[0].len()
    }

    pub fn aux_dims(&self) -> usize {
        self.aux_dims
    }

    /// The market part of a driving label (auxiliary coordinates removed).
    pub fn market_driving(&self, node: usize) -> &[f64] {
        &self.y[node][..self.driving_dim() - self.aux_dims]
    }

    pub fn aux_label(&self, node: usize) -> &[f64] {
        &self.y[node][self.driving_dim() - self.aux_dims..]
    }

    pub fn horizon(&self) -> usize {
        self.tree.horizon()
    }

    /// `(leaf node, probability)` for every leaf, in leaf order.
    pub fn leaf_probabilities(&self) -> Vec<(usize, f64)> {
        self.tree
            .leaves()
            .iter()
            .map(|&l| (l, self.tree.path_probability(l)))
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }

    /// Errors with [`Error::InvalidModel`] unless validation passes.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate();
        if report.is_valid() {
            Ok(report)
        } else {
            Err(Error::InvalidModel(report.errors.join("; ")))
        }
    }

    /// Copy with different node ids (same order and structure).
    pub fn with_ids<F: Fn(usize, &str) -> String>(&self, rename: F) -> Result<Self> {
        let triples = self
            .tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (rename(i, &n.id), n.parent, n.prob))
            .collect();
        let tree = ScenarioTree::new(triples)?;
        Self::from_parts(tree, self.cone.clone(), self.y.clone(), self.s.clone(), self.aux_dims)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every value-level model invariant. Errors are fatal; a driving
/// process that does not separate the tree's atoms and a cone missing some
/// `e^j` are only warnings.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();
    let tree = model.tree();
    let d = model.asset_dim();
    for &r in tree.roots() {
        if model.prices(r).iter().any(|&v| v != 1.0) {
            report.errors.push(format!(
                "root price must be 1: node {:?} has {:?}",
                tree.node(r).id,
                model.prices(r)
            ));
        }
    }
    for (i, node) in tree.nodes().iter().enumerate() {
        let s = model.prices(i);
        if s.iter().any(|&v| v <= 0.0) {
            report
                .errors
                .push(format!("nonpositive price at node {:?}: {s:?}", node.id));
        } else if s[0] != 1.0 {
            report
                .errors
                .push(format!("numeraire price must be 1 at node {:?}, got {}", node.id, s[0]));
        }
        if !(node.prob > 0.0 && node.prob <= 1.0) {
            report.errors.push(format!(
                "branch probability of node {:?} must lie in (0, 1], got {}",
                node.id, node.prob
            ));
        }
        let kids = tree.children(i);
        if !kids.is_empty() {
            let total: f64 = kids.iter().map(|&c| tree.node(c).prob).sum();
            if (total - 1.0).abs() > PROB_TOL {
                report.errors.push(format!(
                    "children of node {:?} have probabilities summing to {total}",
                    node.id
                ));
            }
        }
    }
    let root_total: f64 = tree.roots().iter().map(|&r| tree.node(r).prob).sum();
    if (root_total - 1.0).abs() > PROB_TOL {
        report.errors.push(format!("root probabilities sum to {root_total}"));
    }
    match model.cone().is_proper() {
        Ok(true) => {}
        Ok(false) => report.errors.push("K not proper".into()),
        Err(e) => report.errors.push(format!("K could not be checked: {e}")),
    }
    for j in 0..d {
        if !model.cone().contains(&unit(d, j)).unwrap_or(false) {
            report
                .warnings
                .push(format!("e^{} is not in K (the positive orthant should be)", j + 1));
        }
    }
    if let Some(k) = first_non_generating_time(model) {
        report.warnings.push(format!(
            "driving process does not generate the filtration: atoms at time {k} share driving paths"
        ));
    }
    report
}

/// Per-node trade `dB`, executed at that node's time and prices. The root's
/// entry is the initial trade `B_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    increments: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn new(increments: Vec<Vec<f64>>) -> Self {
        Self { increments }
    }

    pub fn zero(model: &Model) -> Self {
        Self {
            increments: vec![vec![0.0; model.asset_dim()]; model.tree().len()],
        }
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn increment(&self, node: usize) -> &[f64] {
        &self.increments[node]
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn check_shape(&self, model: &Model) -> Result<()> {
        if self.increments.len() != model.tree().len() {
            return Err(Error::ShapeMismatch(format!(
                "strategy has {} increments for {} nodes",
                self.increments.len(),
                model.tree().len()
            )));
        }
        let d = model.asset_dim();
        if let Some(bad) = self.increments.iter().position(|v| v.len() != d) {
            return Err(Error::ShapeMismatch(format!(
                "increment at node {:?} has dimension {}, expected {d}",
                model.tree().node(bad).id,
                self.increments[bad].len()
            )));
        }
        Ok(())
    }

    /// Cumulative position `B` at every node.
    pub fn cumulative(&self, model: &Model) -> Vec<Vec<f64>> {
        let tree = model.tree();
        let mut out = vec![Vec::new(); tree.len()];
        for &i in tree.topological_order() {
            out[i] = match tree.node(i).parent {
                Some(p) => add(&out[p], &self.increments[i]),
                None => self.increments[i].clone(),
            };
        }
        out
    }

    /// Pointwise `theta * self + (1 - theta) * other`.
    pub fn mix(&self, other: &Strategy, theta: f64) -> Strategy {
        Strategy {
            increments: self
                .increments
                .iter()
                .zip(&other.increments)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect())
                .collect(),
        }
    }
}

/// Physical holdings `V^` and numeraire-valued wealth `V = S (.) V^` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthProcess {
    pub physical: Vec<Vec<f64>>,
    pub numeraire: Vec<Vec<f64>>,
}

const CANCEL_ULPS: f64 = 16.0;

/// `V^(node) = x + sum over the ancestry of dB(m) / S(m)` and `V = S (.) V^`.
/// Coordinates that cancel to within rounding of their summands are set to zero.
pub fn wealth(model: &Model, x: &[f64], strategy: &Strategy) -> Result<WealthProcess> {
    strategy.check_shape(model)?;
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
    let tree = model.tree();
    let mut physical = vec![Vec::new(); tree.len()];
    let mut numeraire = vec![Vec::new(); tree.len()];
    // sum of magnitudes behind each physical coordinate
    let mut gross: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for &i in tree.topological_order() {
        let (base, base_gross) = match tree.node(i).parent {
            Some(p) => (physical[p].clone(), gross[p].clone()),
            None => (x.to_vec(), x.iter().map(|v| v.abs()).collect()),
        };
        let s = model.prices(i);
        let mut vh = Vec::with_capacity(d);
        let mut g = Vec::with_capacity(d);
        for j in 0..d {
            let step = strategy.increment(i)[j] / s[j];
            let v = base[j] + step;
            let gj = base_gross[j] + step.abs();
            // cancellation down to rounding noise is an exact zero
            vh.push(if v.abs() <= CANCEL_ULPS * f64::EPSILON * gj {
                0.0
            } else {
                v
            });
            g.push(gj);
        }
        gross[i] = g;
        numeraire[i] = hadamard(s, &vh);
        physical[i] = vh;
    }
    Ok(WealthProcess { physical, numeraire })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The node's trade is not in `-K`.
    IncrementNotInMinusK,
    /// The wealth after the node's trade is not in `K`.
    WealthNotInK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: usize,
    pub id: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub violations: Vec<Violation>,
}

/// Admissible iff every trade lies in `-K` and every node's wealth lies in `K`.
pub fn is_admissible(model: &Model, x: &[f64], strategy: &Strategy) -> Result<AdmissibilityReport> {
    let w = wealth(model, x, strategy)?;
    let tree = model.tree();
    let cone = model.cone();
    let mut violations = Vec::new();
    for &i in tree.topological_order() {
        let id = tree.node(i).id.clone();
        if !cone.contains(&neg(strategy.increment(i)))? {
            violations.push(Violation {
                node: i,
                id: id.clone(),
                kind: ViolationKind::IncrementNotInMinusK,
            });
        }
        if !cone.contains(&w.numeraire[i])? {
            violations.push(Violation {
                node: i,
                id,
                kind: ViolationKind::WealthNotInK,
            });
        }
    }
    Ok(AdmissibilityReport {
        admissible: violations.is_empty(),
        violations,
    })
}

/// Only checks that every increment lies in `-K`.
pub fn is_k_decreasing_strategy(model: &Model, strategy: &Strategy) -> Result<bool> {
    strategy.check_shape(model)?;
    for inc in strategy.increments() {
        if !model.cone().contains(&neg(inc))? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomMode {
    /// Leaves grouped by their time-k ancestor node.
    Tree,
    /// Leaves grouped by equal driving paths up to time k.
    DrivingPath,
}

/// Bit pattern of a label with `-0.0` folded onto `0.0`, for exact grouping.
pub(crate) fn label_bits(v: &[f64]) -> Vec<u64> {
    v.iter()
        .map(|&x| if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() })
        .collect()
}

/// Partition of leaf indices generating the filtration at time `k`, ordered by
/// smallest leaf index.
pub fn filtration_atoms(model: &Model, k: usize, mode: AtomMode) -> Result<Vec<Vec<usize>>> {
    let tree = model.tree();
    if k > tree.horizon() {
        return Err(Error::TimeOutOfRange {
            index: k,
            horizon: tree.horizon(),
        });
    }
    let mut groups: Vec<(Vec<u64>, Vec<usize>)> = Vec::new();
    let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        let ancestry = tree.ancestry(leaf);
        let key: Vec<u64> = match mode {
            AtomMode::Tree => vec![ancestry[k] as u64],
            AtomMode::DrivingPath => ancestry[..=k]
                .iter()
                .flat_map(|&i| label_bits(model.driving(i)))
                .collect(),
        };
        match lookup.get(&key) {
            Some(&g) => groups[g].1.push(pos),
            None => {
                lookup.insert(key.clone(), groups.len());
                groups.push((key, vec![pos]));
            }
        }
    }
    Ok(groups.into_iter().map(|(_, g)| g).collect())
}

/// First time at which two distinct atoms share a driving path, if any.
pub fn first_non_generating_time(model: &Model) -> Option<usize> {
    (0..=model.horizon()).find(|&k| {
        let tree_atoms = filtration_atoms(model, k, AtomMode::Tree).expect("k in range");
        let y_atoms = filtration_atoms(model, k, AtomMode::DrivingPath).expect("k in range");
        tree_atoms != y_atoms
    })
}

pub fn is_driving_generated(model: &Model) -> bool {
    first_non_generating_time(model).is_none()
}
