//! Distributionally equal models and strategy transfer between them.
//!
//! Two finite models have the same law of `(Y, S)` when the multisets of
//! labelled leaf paths with their probabilities agree. On a model whose
//! filtration is generated by `Y`, a strategy is a function of the driving
//! path, so it can be tabulated on one model and replayed on another.

use std::collections::{BTreeMap, HashMap};

use crate::bellman::{expected_utility, solve_bellman, BellmanResult, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{
    first_non_generating_time, is_admissible, is_k_decreasing_strategy, label_bits, Model, NodeSpec, Strategy,
};
use crate::prediction::{dirac_check, prediction_process, DiracCertificate, PathTarget};
use crate::utility::UtilitySpec;

pub const LAW_TOL: f64 = 1e-12;

/// Which coordinates of `Y` enter a path key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    /// `Y` without auxiliary coordinates, and `S`.
    Market,
    /// All of `Y`, and `S`.
    Full,
}

fn path_key(model: &Model, leaf: usize, labels: Labels) -> Vec<u64> {
    let mut key = vec![model.horizon() as u64, model.asset_dim() as u64];
    for i in model.tree().ancestry(leaf) {
        let y = match labels {
            Labels::Market => model.market_driving(i),
            Labels::Full => model.driving(i),
        };
        key.push(y.len() as u64);
        key.extend(label_bits(y));
        key.extend(label_bits(model.prices(i)));
    }
    key
}

/// Finitely supported law of the labelled paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Law {
    masses: BTreeMap<Vec<u64>, f64>,
}

impl Law {
    pub fn of(model: &Model, labels: Labels) -> Self {
        let mut masses = BTreeMap::new();
        for (leaf, p) in model.leaf_probabilities() {
            *masses.entry(path_key(model, leaf, labels)).or_insert(0.0) += p;
        }
        Self { masses }
    }

    pub fn support_size(&self) -> usize {
        self.masses.len()
    }

    /// Largest probability discrepancy; infinite when supports differ.
    pub fn distance(&self, other: &Law) -> f64 {
        if self.masses.len() != other.masses.len() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for ((ka, pa), (kb, pb)) in self.masses.iter().zip(&other.masses) {
            if ka != kb {
                return f64::INFINITY;
            }
            worst = worst.max((pa - pb).abs());
        }
        worst
    }

    pub fn matches(&self, other: &Law, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

/// Law of `(Y, S)` with auxiliary coordinates projected out.
pub fn market_law(model: &Model) -> Law {
    Law::of(model, Labels::Market)
}

pub fn laws_equal(a: &Model, b: &Model) -> bool {
    market_law(a).matches(&market_law(b), LAW_TOL)
}

/// Values per node after moving leaf paths: leaf `i` receives the path of
/// leaf `perm[i]`. Fails unless the result is again one value per node.
pub fn permute_node_values(model: &Model, perm: &[usize], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let tree = model.tree();
    let n_leaves = tree.leaves().len();
    if perm.len() != n_leaves {
        return Err(Error::InvalidArgument(format!(
            "permutation has {} entries for {n_leaves} leaves",
            perm.len()
        )));
    }
    let mut seen = vec![false; n_leaves];
    for &p in perm {
        if p >= n_leaves || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("not a permutation of the leaves".into()));
        }
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; tree.len()];
    for (i, &leaf) in tree.leaves().iter().enumerate() {
        let from = tree.ancestry(tree.leaves()[perm[i]]);
        for (k, node) in tree.ancestry(leaf).into_iter().enumerate() {
            let v = &values[from[k]];
            match &out[node] {
                Some(existing) if label_bits(existing) != label_bits(v) => {
                    return Err(Error::InvalidArgument(format!(
                        "permutation splits node {:?} between different labels",
                        tree.node(node).id
                    )));
                }
                Some(_) => {}
                None => out[node] = Some(v.clone()),
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|v| v.expect("every node lies on a leaf path"))
        .collect())
}

/// Moves the labelled paths `(Y, S)` between leaves, keeping the tree and its
/// probabilities. Errors unless the law of `(Y, S)` is unchanged.
pub fn permute_atoms(model: &Model, perm: &[usize]) -> Result<Model> {
    let y = permute_node_values(model, perm, model.driving_labels())?;
    let s = permute_node_values(model, perm, model.price_labels())?;
    let out = Model::from_parts(model.tree().clone(), model.cone().clone(), y, s, model.aux_dims())?;
    let distance = Law::of(model, Labels::Full).distance(&Law::of(&out, Labels::Full));
    if distance > LAW_TOL {
        return Err(Error::LawMismatch(format!(
            "permutation changes the law of (Y, S) (distance {distance})"
        )));
    }
    Ok(out)
}

pub fn permute_strategy(model: &Model, strategy: &Strategy, perm: &[usize]) -> Result<Strategy> {
    strategy.check_shape(model)?;
    Ok(Strategy::new(permute_node_values(model, perm, strategy.increments())?))
}

/// Leaf permutation exchanging the subtrees below two siblings.
pub fn sibling_swap(model: &Model, a: usize, b: usize) -> Result<Vec<usize>> {
    let tree = model.tree();
    if a >= tree.len() || b >= tree.len() || tree.node(a).parent != tree.node(b).parent {
        return Err(Error::InvalidArgument("nodes are not siblings".into()));
    }
    let la = tree.leaves_under(a);
    let lb = tree.leaves_under(b);
    if la.len() != lb.len() {
        return Err(Error::InvalidArgument(
            "subtrees have different numbers of leaves".into(),
        ));
    }
    let mut perm: Vec<usize> = (0..tree.leaves().len()).collect();
    for (&i, &j) in la.iter().zip(&lb) {
        perm[i] = j;
        perm[j] = i;
    }
    Ok(perm)
}

/// Builds a fresh tree from the model's labelled leaf paths by merging equal
/// label prefixes. Leaves are visited in `order` (default: leaf order), which
/// fixes the order of children; node ids are `n0, n1, ...`.
pub fn rebuild(model: &Model, order: Option<&[usize]>) -> Result<Model> {
    let tree = model.tree();
    let default: Vec<usize> = (0..tree.leaves().len()).collect();
    let order = order.unwrap_or(&default);
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != default {
        return Err(Error::InvalidArgument(
            "order is not a permutation of the leaves".into(),
        ));
    }
    struct Proto {
        parent: Option<usize>,
        mass: f64,
        y: Vec<f64>,
        s: Vec<f64>,
    }
    let mut protos: Vec<Proto> = Vec::new();
    let mut index: HashMap<(Option<usize>, Vec<u64>), usize> = HashMap::new();
    let probs = model.leaf_probabilities();
    for &pos in order {
        let (leaf, p) = probs[pos];
        let mut parent = None;
        for node in tree.ancestry(leaf) {
            let mut label = label_bits(model.driving(node));
            label.extend(label_bits(model.prices(node)));
            let id = *index.entry((parent, label)).or_insert_with(|| {
                protos.push(Proto {
                    parent,
                    mass: 0.0,
                    y: model.driving(node).to_vec(),
                    s: model.prices(node).to_vec(),
                });
                protos.len() - 1
            });
            protos[id].mass += p;
            parent = Some(id);
        }
    }
    let nodes = protos
        .iter()
        .enumerate()
        .map(|(i, proto)| NodeSpec {
            id: format!("n{i}"),
            parent: proto.parent.map(|p| format!("n{p}")),
            prob: match proto.parent {
                Some(p) => proto.mass / protos[p].mass,
                None => proto.mass,
            }
            .min(1.0),
            y: proto.y.clone(),
            s: proto.s.clone(),
        })
        .collect();
    Model::new(model.cone().clone(), nodes, model.aux_dims())
}

/// The enlargement of a model by an independent uniform label `xi` in
/// `{1, ..., m}` revealed at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedModel {
    pub model: Model,
    pub base: Model,
    pub copies: usize,
}

impl RandomizedModel {
    /// Node of the randomized model for `node` of the base in copy `a` (0-based).
    pub fn node_in_copy(&self, a: usize, node: usize) -> usize {
        a * self.base.tree().len() + node
    }
}

/// `m` copies of the tree, root probabilities divided by `m`, and `xi = a`
/// appended to `Y` as a constant auxiliary coordinate on copy `a`.
pub fn randomize(model: &Model, m: usize) -> Result<RandomizedModel> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 copies, got {m}")));
    }
    let tree = model.tree();
    let mut nodes = Vec::with_capacity(m * tree.len());
    for a in 1..=m {
        for (i, node) in tree.nodes().iter().enumerate() {
            let mut y = model.driving(i).to_vec();
            y.push(a as f64);
            nodes.push(NodeSpec {
                id: format!("xi{a}:{}", node.id),
                parent: node.parent.map(|p| format!("xi{a}:{}", tree.node(p).id)),
                prob: if node.parent.is_some() {
                    node.prob
                } else {
                    node.prob / m as f64
                },
                y,
                s: model.prices(i).to_vec(),
            });
        }
    }
    Ok(RandomizedModel {
        model: Model::new(model.cone().clone(), nodes, model.aux_dims() + 1)?,
        base: model.clone(),
        copies: m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derandomization {
    /// Strategy on the base model for each value of `xi`.
    pub slices: Vec<Strategy>,
    pub slice_utilities: Vec<f64>,
    pub slices_admissible: Vec<bool>,
    pub average: f64,
    pub best: f64,
    pub value_on_randomized: f64,
    /// `|average - value_on_randomized|`.
    pub identity_error: f64,
}

/// Restricts a strategy on the randomized model to each copy.
pub fn derandomize(
    rm: &RandomizedModel,
    x: &[f64],
    strategy: &Strategy,
    utility: &UtilitySpec,
) -> Result<Derandomization> {
    let report = is_admissible(&rm.model, x, strategy)?;
    if !report.admissible {
        return Err(Error::NotAdmissible(format!(
            "{} violation(s) on the randomized model",
            report.violations.len()
        )));
    }
    let n = rm.base.tree().len();
    let slices: Vec<Strategy> = (0..rm.copies)
        .map(|a| Strategy::new(strategy.increments()[a * n..(a + 1) * n].to_vec()))
        .collect();
    let mut slice_utilities = Vec::with_capacity(rm.copies);
    let mut slices_admissible = Vec::with_capacity(rm.copies);
    for s in &slices {
        slice_utilities.push(expected_utility(&rm.base, x, s, utility)?);
        slices_admissible.push(is_admissible(&rm.base, x, s)?.admissible);
    }
    let average = slice_utilities.iter().sum::<f64>() / rm.copies as f64;
    let best = slice_utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value_on_randomized = expected_utility(&rm.model, x, strategy, utility)?;
    let identity_error = if average == value_on_randomized {
        0.0
    } else {
        (average - value_on_randomized).abs()
    };
    Ok(Derandomization {
        slices,
        slice_utilities,
        slices_admissible,
        average,
        best,
        value_on_randomized,
        identity_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub strategy: Strategy,
    pub certificate: DiracCertificate,
    pub k_decreasing: bool,
    pub admissible: bool,
}

fn key_labels(src: &Model, dst: &Model) -> Labels {
    if src.aux_dims() == dst.aux_dims() {
        Labels::Full
    } else {
        Labels::Market
    }
}

/// Tabulates `leaf key -> increments along the leaf path` over some leaves.
fn build_table(
    src: &Model,
    strategy: &Strategy,
    leaves: &[usize],
    labels: Labels,
) -> Result<HashMap<Vec<u64>, Vec<Vec<f64>>>> {
    let tree = src.tree();
    let mut table: HashMap<Vec<u64>, Vec<Vec<f64>>> = HashMap::new();
    for &pos in leaves {
        let leaf = tree.leaves()[pos];
        let path: Vec<Vec<f64>> = tree
            .ancestry(leaf)
            .iter()
            .map(|&i| strategy.increment(i).to_vec())
            .collect();
        let key = path_key(src, leaf, labels);
        match table.get(&key) {
            Some(existing)
                if existing
                    .iter()
                    .flatten()
                    .map(|v| v.to_bits())
                    .ne(path.iter().flatten().map(|v| v.to_bits())) =>
            {
                return Err(Error::AmbiguousTable(format!(
                    "labelled path of leaf {:?} is mapped to two different trade paths",
                    tree.node(leaf).id
                )));
            }
            Some(_) => {}
            None => {
                table.insert(key, path);
            }
        }
    }
    Ok(table)
}

/// Replays a table on `dst` and certifies the result is adapted.
fn apply_table(dst: &Model, table: &HashMap<Vec<u64>, Vec<Vec<f64>>>, labels: Labels, x: &[f64]) -> Result<Transfer> {
    let tree = dst.tree();
    let mut paths = Vec::with_capacity(tree.leaves().len());
    for &leaf in tree.leaves() {
        let key = path_key(dst, leaf, labels);
        let path = table.get(&key).ok_or_else(|| {
            Error::LawMismatch(format!(
                "labelled path of leaf {:?} does not occur in the source model",
                tree.node(leaf).id
            ))
        })?;
        paths.push(path.clone());
    }
    let target = PathTarget::from_leaf_paths(dst, paths)?;
    let pred = prediction_process(dst, &target)?;
    let certificate = dirac_check(&pred, dst);
    if let Some(v) = &certificate.violation {
        return Err(Error::NotAdapted(format!(
            "transferred trades at time {} are not known at node {:?}",
            v.u, v.id
        )));
    }
    let increments = (0..tree.len())
        .map(|node| {
            let table = pred.table(node);
            pred.paths[table.masses[0].0][tree.node(node).time].clone()
        })
        .collect();
    let strategy = Strategy::new(increments);
    let k_decreasing = is_k_decreasing_strategy(dst, &strategy)?;
    let admissible = is_admissible(dst, x, &strategy)?.admissible;
    Ok(Transfer {
        strategy,
        certificate,
        k_decreasing,
        admissible,
    })
}

fn require_generated(model: &Model, role: &str) -> Result<()> {
    match first_non_generating_time(model) {
        Some(k) => Err(Error::NonGenerating(format!(
            "{role} model has distinct atoms with equal driving paths at time {k}"
        ))),
        None => Ok(()),
    }
}

/// Tabulates the strategy as a function of the labelled path on `src` and
/// evaluates that function on `dst`. Auxiliary coordinates are part of the
/// key when both models carry the same number of them.
pub fn transfer_strategy(src: &Model, strategy: &Strategy, dst: &Model, x: &[f64]) -> Result<Transfer> {
    strategy.check_shape(src)?;
    require_generated(src, "source")?;
    let labels = key_labels(src, dst);
    let distance = Law::of(src, labels).distance(&Law::of(dst, labels));
    if distance > LAW_TOL {
        return Err(Error::LawMismatch(format!(
            "laws of (Y, S) differ (distance {distance})"
        )));
    }
    let all: Vec<usize> = (0..src.tree().leaves().len()).collect();
    let table = build_table(src, strategy, &all, labels)?;
    apply_table(dst, &table, labels, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    /// Auxiliary label path shared by the slice.
    pub aux_path: Vec<Vec<f64>>,
    pub probability: f64,
    pub transfer: Transfer,
}

/// Splits `src` by its auxiliary label path and transfers each slice to
/// `dst` on market labels. Each slice's conditional law must match `dst`.
pub fn transfer_slices(src: &Model, strategy: &Strategy, dst: &Model, x: &[f64]) -> Result<Vec<Slice>> {
    strategy.check_shape(src)?;
    require_generated(src, "source")?;
    let tree = src.tree();
    let probs = src.leaf_probabilities();
    // (aux key, aux labels, leaf positions, mass)
    type Group = (Vec<u64>, Vec<Vec<f64>>, Vec<usize>, f64);
    let mut groups: Vec<Group> = Vec::new();
    for (pos, &(leaf, p)) in probs.iter().enumerate() {
        let aux: Vec<Vec<f64>> = tree.ancestry(leaf).iter().map(|&i| src.aux_label(i).to_vec()).collect();
        let key: Vec<u64> = aux.iter().flat_map(|a| label_bits(a)).collect();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                g.2.push(pos);
                g.3 += p;
            }
            None => groups.push((key, aux, vec![pos], p)),
        }
    }
    let dst_law = market_law(dst);
    let mut out = Vec::with_capacity(groups.len());
    for (_, aux_path, leaves, probability) in groups {
        let mut masses: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        for &pos in &leaves {
            let (leaf, p) = probs[pos];
            *masses.entry(path_key(src, leaf, Labels::Market)).or_insert(0.0) += p / probability;
        }
        let slice_law = Law { masses };
        let distance = slice_law.distance(&dst_law);
        if distance > LAW_TOL {
            return Err(Error::LawMismatch(format!(
                "conditional law of slice {aux_path:?} differs from the target (distance {distance})"
            )));
        }
        let table = build_table(src, strategy, &leaves, Labels::Market)?;
        out.push(Slice {
            aux_path,
            probability,
            transfer: apply_table(dst, &table, Labels::Market, x)?,
        });
    }
    Ok(out)
}

/// Whether the increments `Y_0, Y_1 - Y_0, ..., Y_N - Y_{N-1}` are independent
/// (joint law equals the product of the marginals within `LAW_TOL`).
pub fn has_independent_increments(model: &Model) -> bool {
    let tree = model.tree();
    let horizon = tree.horizon();
    let mut joint: HashMap<Vec<Vec<u64>>, f64> = HashMap::new();
    let mut marginals: Vec<HashMap<Vec<u64>, f64>> = vec![HashMap::new(); horizon + 1];
    for (leaf, p) in model.leaf_probabilities() {
        let anc = tree.ancestry(leaf);
        let incs: Vec<Vec<u64>> = (0..=horizon)
            .map(|k| {
                let y = model.driving(anc[k]);
                let inc: Vec<f64> = if k == 0 {
                    y.to_vec()
                } else {
                    y.iter().zip(model.driving(anc[k - 1])).map(|(a, b)| a - b).collect()
                };
                label_bits(&inc)
            })
            .collect();
        for (k, inc) in incs.iter().enumerate() {
            *marginals[k].entry(inc.clone()).or_insert(0.0) += p;
        }
        *joint.entry(incs).or_insert(0.0) += p;
    }
    let support: usize = marginals.iter().map(|m| m.len()).product();
    if support != joint.len() {
        return false;
    }
    joint.iter().all(|(incs, p)| {
        let product: f64 = incs.iter().zip(&marginals).map(|(inc, m)| m[inc]).product();
        (product - p).abs() <= LAW_TOL
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The laws differ, so equality is not claimed.
    NotClaimed,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::NotClaimed => "not_claimed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransferMethod {
    /// A single strategy transferred on labelled paths.
    Direct,
    /// The source split by auxiliary labels; the best slice is used.
    Slices { count: usize },
}

/// Expected utility of an optimal strategy of one model after transfer to the other.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferCheck {
    pub from: String,
    pub to: String,
    pub method: TransferMethod,
    pub source_value: f64,
    pub transferred_value: f64,
    pub error: f64,
    pub dirac_passed: bool,
    pub admissible: bool,
    pub note: Option<String>,
}

impl TransferCheck {
    /// Direct transfers reproduce the source value; slices may only improve on it.
    pub fn passed(&self, tol: f64) -> bool {
        if !(self.dirac_passed && self.admissible) {
            return false;
        }
        match self.method {
            TransferMethod::Direct => self.error <= tol,
            TransferMethod::Slices { .. } => self.transferred_value >= self.source_value - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub value_a: f64,
    pub value_b: f64,
    pub difference: f64,
    pub status_a: SolveStatus,
    pub status_b: SolveStatus,
    pub laws_equal: bool,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub checks: Vec<TransferCheck>,
    pub errors: Vec<String>,
}

/// Tolerance for utilities reproduced by transferred strategies.
pub const TRANSFER_TOL: f64 = 1e-12;

pub fn verify_invariance(
    a: &Model,
    b: &Model,
    x: &[f64],
    utility: &UtilitySpec,
    tol: f64,
    opts: &SolverOptions,
) -> Result<InvarianceReport> {
    let laws_equal = laws_equal(a, b);
    let ra = solve_bellman(a, x, utility, opts)?;
    let rb = solve_bellman(b, x, utility, opts)?;
    let difference = if ra.value == rb.value {
        0.0
    } else {
        (ra.value - rb.value).abs()
    };
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    if laws_equal {
        for (src, dst, res, from, to) in [(a, b, &ra, "A", "B"), (b, a, &rb, "B", "A")] {
            match transfer_check(src, dst, res, x, utility, from, to) {
                Ok(c) => checks.push(c),
                Err(e) => errors.push(format!("{from} -> {to}: {e}")),
            }
        }
    }
    let solved = ra.status == SolveStatus::Optimal && rb.status == SolveStatus::Optimal;
    let verdict = if !laws_equal {
        Verdict::NotClaimed
    } else if solved && difference <= tol && errors.is_empty() && checks.iter().all(|c| c.passed(TRANSFER_TOL)) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(InvarianceReport {
        value_a: ra.value,
        value_b: rb.value,
        difference,
        status_a: ra.status,
        status_b: rb.status,
        laws_equal,
        tolerance: tol,
        verdict,
        checks,
        errors,
    })
}

fn transfer_check(
    src: &Model,
    dst: &Model,
    solved: &BellmanResult,
    x: &[f64],
    utility: &UtilitySpec,
    from: &str,
    to: &str,
) -> Result<TransferCheck> {
    let source_value = expected_utility(src, x, &solved.strategy, utility)?;
    let direct = transfer_strategy(src, &solved.strategy, dst, x);
    let (method, transfers, note) = match direct {
        Ok(t) => (TransferMethod::Direct, vec![t], None),
        Err(Error::AmbiguousTable(msg)) if src.aux_dims() > dst.aux_dims() => {
            let slices = transfer_slices(src, &solved.strategy, dst, x)?;
            (
                TransferMethod::Slices { count: slices.len() },
                slices.into_iter().map(|s| s.transfer).collect(),
                Some(format!("strategy depends on auxiliary labels ({msg})")),
            )
        }
        Err(e) => return Err(e),
    };
    let mut transferred_value = f64::NEG_INFINITY;
    let mut dirac_passed = true;
    let mut admissible = true;
    for t in &transfers {
        transferred_value = transferred_value.max(expected_utility(dst, x, &t.strategy, utility)?);
        dirac_passed &= t.certificate.passed;
        admissible &= t.admissible && t.k_decreasing;
    }
    let error = if transferred_value == source_value {
        0.0
    } else {
        (transferred_value - source_value).abs()
    };
    Ok(TransferCheck {
        from: from.into(),
        to: to.into(),
        method,
        source_value,
        transferred_value,
        error,
        dirac_passed,
        admissible,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Cone, DEFAULT_TOL};

    fn solvency_125() -> Cone {
        Cone::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.25, -1.0], vec![-1.0, 1.25]],
            DEFAULT_TOL,
        )
        .unwrap()
    }

    fn node(id: &str, parent: Option<&str>, prob: f64, s2: f64) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            parent: parent.map(Into::into),
            prob,
            y: vec![s2],
            s: vec![1.0, s2],
        }
    }

    /// Two steps; the subtrees below `a` and `b` have equal probability.
    fn two_step() -> Model {
        Model::new(
            solvency_125(),
            vec![
                node("r", None, 1.0, 1.0),
                node("a", Some("r"), 0.5, 1.2),
                node("b", Some("r"), 0.5, 0.9),
                node("aa", Some("a"), 0.6, 1.5),
                node("ab", Some("a"), 0.4, 1.0),
                node("ba", Some("b"), 0.6, 1.1),
                node("bb", Some("b"), 0.4, 0.7),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn identity_permutation() {
        let m = two_step();
        let p = permute_atoms(&m, &[0, 1, 2, 3]).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn sibling_swap_preserves_law() {
        let m = two_step();
        let perm = sibling_swap(&m, 1, 2).unwrap();
        let p = permute_atoms(&m, &perm).unwrap();
        assert!(laws_equal(&m, &p));
        assert_eq!(p.driving(1), m.driving(2));
        assert_eq!(p.prices(3), m.prices(5));
    }

    #[test]
    fn law_changing_permutation_is_rejected() {
        let m = two_step();
        // swap leaves aa and ab: probabilities 0.3 and 0.2 differ
        assert!(matches!(permute_atoms(&m, &[1, 0, 2, 3]), Err(Error::LawMismatch(_))));
        // moving a leaf across subtrees splits node labels
        assert!(matches!(
            permute_atoms(&m, &[2, 1, 0, 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rebuild_has_same_law() {
        let m = two_step();
        let r = rebuild(&m, Some(&[3, 1, 2, 0])).unwrap();
        assert!(r.validate().is_valid());
        assert!(laws_equal(&m, &r));
        assert_eq!(r.tree().node(0).id, "n0");
        assert_eq!(r.prices(1), m.prices(2));
    }

    #[test]
    fn randomize_structure() {
        let m = Model::new(
            solvency_125(),
            vec![
                node("root", None, 1.0, 1.0),
                node("up", Some("root"), 0.5, 1.5),
                node("down", Some("root"), 0.5, 0.75),
            ],
            0,
        )
        .unwrap();
        let rm = randomize(&m, 2).unwrap();
        let n = &rm.model;
        assert_eq!(n.tree().leaves().len(), 4);
        assert!(n.validate().is_valid(), "{:?}", n.validate());
        assert!(n.leaf_probabilities().iter().all(|&(_, p)| p == 0.25));
        assert!(laws_equal(&m, n));
        assert_eq!(n.driving(rm.node_in_copy(1, 1)), &[1.5, 2.0]);
        assert!(randomize(&m, 1).is_err());
    }

    #[test]
    fn randomization_keeps_independent_increments() {
        // recombining increments +-0.5 with the same conditional law at every node
        let m = Model::new(
            solvency_125(),
            vec![
                node("r", None, 1.0, 1.0),
                node("u", Some("r"), 0.3, 1.5),
                node("d", Some("r"), 0.7, 0.5),
                node("uu", Some("u"), 0.3, 2.0),
                node("ud", Some("u"), 0.7, 1.0),
                node("du", Some("d"), 0.3, 1.0),
                node("dd", Some("d"), 0.7, 0.25),
            ],
            0,
        )
        .unwrap();
        assert!(!has_independent_increments(&m));
        let mut y = m.driving_labels().to_vec();
        for (i, v) in [1.0, 1.5, 0.5, 2.0, 1.0, 1.0, 0.0].into_iter().enumerate() {
            y[i] = vec![v];
        }
        let h = Model::from_parts(m.tree().clone(), m.cone().clone(), y, m.price_labels().to_vec(), 0).unwrap();
        assert!(has_independent_increments(&h));
        assert!(has_independent_increments(&randomize(&h, 3).unwrap().model));
    }

    #[test]
    fn derandomize_slices() {
        let m = two_step();
        let rm = randomize(&m, 2).unwrap();
        let x = [1.0, 0.0];
        let u = UtilitySpec::LogLiquidation;
        let mut s = Strategy::zero(&rm.model);
        // trade only when xi = 1
        s = {
            let mut inc = s.increments().to_vec();
            inc[rm.node_in_copy(0, 0)] = vec![-0.5, 0.4];
            Strategy::new(inc)
        };
        let d = derandomize(&rm, &x, &s, &u).unwrap();
        assert_eq!(d.slices[1], Strategy::zero(&m));
        assert_eq!(d.slices[0].increment(0), &[-0.5, 0.4]);
        assert!(d.identity_error <= 1e-12);
        assert!(d.best >= d.average);
        assert!(d.slices_admissible.iter().all(|&a| a));
    }

    #[test]
    fn transfer_to_permuted_model() {
        let m = two_step();
        let x = [1.0, 0.2];
        let u = UtilitySpec::LogLiquidation;
        let solved = solve_bellman(&m, &x, &u, &SolverOptions::default()).unwrap();
        let perm = sibling_swap(&m, 1, 2).unwrap();
        let p = permute_atoms(&m, &perm).unwrap();
        let t = transfer_strategy(&m, &solved.strategy, &p, &x).unwrap();
        assert_eq!(t.strategy, permute_strategy(&m, &solved.strategy, &perm).unwrap());
        assert!(t.certificate.passed && t.admissible && t.k_decreasing);
        let v = expected_utility(&p, &x, &t.strategy, &u).unwrap();
        assert!((v - solved.value).abs() <= 1e-12);
    }

    #[test]
    fn transfer_rejects_perturbed_law() {
        let m = two_step();
        let mut nodes: Vec<NodeSpec> = (0..m.tree().len())
            .map(|i| {
                let n = m.tree().node(i);
                NodeSpec {
                    id: n.id.clone(),
                    parent: n.parent.map(|p| m.tree().node(p).id.clone()),
                    prob: n.prob,
                    y: m.driving(i).to_vec(),
                    s: m.prices(i).to_vec(),
                }
            })
            .collect();
        nodes[3].prob = 0.61;
        nodes[4].prob = 0.39;
        let q = Model::new(m.cone().clone(), nodes, 0).unwrap();
        let s = Strategy::zero(&m);
        assert!(matches!(
            transfer_strategy(&m, &s, &q, &[1.0, 0.0]),
            Err(Error::LawMismatch(_))
        ));
    }

    #[test]
    fn invariance_under_randomization() {
        let m = two_step();
        let rm = randomize(&m, 3).unwrap();
        let x = [1.0, 0.2];
        let r = verify_invariance(
            &m,
            &rm.model,
            &x,
            &UtilitySpec::linear(vec![1.0, 1.0]),
            1e-6,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        let r = verify_invariance(
            &m,
            &rm.model,
            &x,
            &UtilitySpec::LogLiquidation,
            1e-3,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn different_laws_are_not_claimed() {
        let m = two_step();
        let other = Model::new(
            solvency_125(),
            vec![
                node("root", None, 1.0, 1.0),
                node("up", Some("root"), 0.5, 1.5),
                node("down", Some("root"), 0.5, 0.75),
            ],
            0,
        )
        .unwrap();
        let r = verify_invariance(
            &m,
            &other,
            &[1.0, 0.0],
            &UtilitySpec::LogLiquidation,
            1e-3,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::NotClaimed);
        assert!(r.checks.is_empty());
    }
}
