//! Contraction-order search: greedy seeding plus simulated annealing
//! over contraction trees.
//!
//! A contraction tree is a binary tree whose leaves are network tensors;
//! every internal node is a pairwise contraction, so an N-tensor network
//! has N-1 internal nodes. Costs: T_cc (flops), T_mc (bytes moved), and
//! T_sc (largest intermediate, in elements). Sparse open-bond merges
//! replace the product of two open extents by the joint configuration
//! count of the boundary state.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BondId, TensorId, TensorNetwork};

/// Flops per scalar multiply-accumulate and bytes per stored element.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostModel {
    pub ops_per_element: u64,
    pub sizeof_data: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        // Complex data: 8 flops per element multiply, 8 bytes per element
        // (complex of FP32 pairs).
        CostModel { ops_per_element: 8, sizeof_data: 8 }
    }
}

/// Shape thresholds below which GEMM-formable contractions are penalized
/// during path search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BalancePenalty {
    pub weight: f64,
    pub mn_threshold: f64,
    pub k_threshold: f64,
}

impl Default for BalancePenalty {
    fn default() -> Self {
        BalancePenalty { weight: 0.05, mn_threshold: 32.0, k_threshold: 64.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreParams {
    /// Memory-complexity weight inside the log.
    pub alpha: f64,
    /// Largest-intermediate weight.
    pub beta: f64,
    pub log_base: f64,
    pub balance: Option<BalancePenalty>,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { alpha: 64.0, beta: 1.0, log_base: 2.0, balance: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SaSchedule {
    pub t0: f64,
    pub tmin: f64,
    pub decay: f64,
    pub sweeps: usize,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule { t0: 2.0, tmin: 0.02, decay: 0.98, sweeps: 200 }
    }
}

/// Per-node (T_cc, T_mc) of a single pairwise contraction given the
/// closed-dim products of both operands, the contracted-dim product, and
/// the operand/output sizes in elements.
pub fn step_cost(
    closed_a: u64,
    closed_b: u64,
    contracted: u64,
    merged_extent: u64,
    size_a: u64,
    size_b: u64,
    size_out: u64,
    model: &CostModel,
) -> (u64, u64) {
    let t_cc = model
        .ops_per_element
        .saturating_mul(closed_a)
        .saturating_mul(closed_b / contracted.max(1))
        .saturating_mul(merged_extent);
    let t_mc = model.sizeof_data.saturating_mul(size_a + size_b + size_out);
    (t_cc, t_mc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf(TensorId),
    Internal(usize, usize),
}

/// Annotated contraction-tree node.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Surviving closed labels (sorted), sliced bonds excluded.
    pub closed: Vec<BondId>,
    /// Qubits of open content, as a bitmask.
    pub open_mask: u64,
    /// Extent of the open content: raw product for leaves, joint
    /// configuration count for internal nodes.
    pub open_extent: u64,
    /// Output size in elements.
    pub size: u64,
    pub t_cc: u64,
    pub t_mc: u64,
    /// Working set of this step in elements, including TTGT scratch for
    /// the larger operand.
    pub peak_elems: u64,
    /// Product of contracted dims (k); 1 for leaves and outer products.
    pub contracted_prod: u64,
    /// Closed-only GEMM extents for the balance penalty.
    pub m_extent: u64,
    pub n_extent: u64,
}

impl TreeNode {
    fn leaf_placeholder(id: TensorId) -> Self {
        TreeNode {
            kind: NodeKind::Leaf(id),
            parent: None,
            closed: Vec::new(),
            open_mask: 0,
            open_extent: 1,
            size: 0,
            t_cc: 0,
            t_mc: 0,
            peak_elems: 0,
            contracted_prod: 1,
            m_extent: 1,
            n_extent: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContractionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    /// Leaf node indices in network tensor order.
    pub leaves: Vec<usize>,
}

/// Computes and caches sparse-merge extents against a network's boundary
/// state and bond table.
pub struct Annotator<'a> {
    pub net: &'a TensorNetwork,
    pub model: CostModel,
    proj_cache: RefCell<HashMap<u64, u64>>,
}

impl<'a> Annotator<'a> {
    pub fn new(net: &'a TensorNetwork, model: CostModel) -> Self {
        Annotator { net, model, proj_cache: RefCell::new(HashMap::new()) }
    }

    /// Joint configuration count of an open-qubit mask under the boundary.
    pub fn open_extent(&self, mask: u64) -> u64 {
        if mask == 0 {
            return 1;
        }
        if let Some(&v) = self.proj_cache.borrow().get(&mask) {
            return v;
        }
        let qubits: Vec<usize> = (0..64).filter(|q| mask >> q & 1 == 1).collect();
        let v = match &self.net.boundary {
            Some(state) => state.projection_count(&qubits),
            None => qubits
                .iter()
                .map(|q| {
                    self.net
                        .bonds
                        .values()
                        .find(|b| b.open && b.qubit == Some(*q))
                        .map(|b| b.dim as u64)
                        .unwrap_or(2)
                })
                .product(),
        };
        self.proj_cache.borrow_mut().insert(mask, v);
        v
    }

    fn annotate_leaf(&self, node: &mut TreeNode) {
        let id = match node.kind {
            NodeKind::Leaf(id) => id,
            _ => unreachable!(),
        };
        let tensor = &self.net.tensors[&id];
        let mut closed = Vec::new();
        let mut mask = 0u64;
        let mut open_extent = 1u64;
        let mut size = 1u64;
        for (&l, &d) in tensor.labels.iter().zip(&tensor.dims) {
            let bond = &self.net.bonds[&l];
            if bond.sliced {
                continue;
            }
            size = size.saturating_mul(d as u64);
            if bond.open {
                mask |= 1 << bond.qubit.expect("open bond carries a qubit tag");
                open_extent *= d as u64;
            } else {
                closed.push(l);
            }
        }
        closed.sort_unstable();
        node.closed = closed;
        node.open_mask = mask;
        node.open_extent = open_extent;
        node.size = size;
        node.t_cc = 0;
        node.t_mc = 0;
        node.peak_elems = 0;
        node.contracted_prod = 1;
    }

    /// Recompute one internal node from its already-annotated children.
    fn annotate_internal(&self, nodes: &mut [TreeNode], idx: usize) {
        let (l, r) = match nodes[idx].kind {
            NodeKind::Internal(l, r) => (l, r),
            _ => unreachable!(),
        };
        let (closed, contracted_prod) = {
            let (a, b) = (&nodes[l], &nodes[r]);
            let mut out = Vec::with_capacity(a.closed.len() + b.closed.len());
            let mut kprod = 1u64;
            let (mut i, mut j) = (0, 0);
            while i < a.closed.len() || j < b.closed.len() {
                if j >= b.closed.len() || (i < a.closed.len() && a.closed[i] < b.closed[j]) {
                    out.push(a.closed[i]);
                    i += 1;
                } else if i >= a.closed.len() || b.closed[j] < a.closed[i] {
                    out.push(b.closed[j]);
                    j += 1;
                } else {
                    kprod = kprod.saturating_mul(self.net.bonds[&a.closed[i]].dim as u64);
                    i += 1;
                    j += 1;
                }
            }
            (out, kprod)
        };
        let a = &nodes[l];
        let b = &nodes[r];
        let mask = a.open_mask | b.open_mask;
        let extent = self.open_extent(mask);
        let closed_out: u64 = closed
            .iter()
            .map(|l| self.net.bonds[l].dim as u64)
            .fold(1u64, |acc, d| acc.saturating_mul(d));
        let size = closed_out.saturating_mul(extent);
        let closed_a = a.size / a.open_extent;
        let closed_b = b.size / b.open_extent;
        let (t_cc, t_mc) = step_cost(
            closed_a,
            closed_b,
            contracted_prod,
            extent,
            a.size,
            b.size,
            size,
            &self.model,
        );
        let peak = a.size + b.size + size + a.size.max(b.size);
        let (m, nn) = (closed_a / contracted_prod, closed_b / contracted_prod);
        let node = &mut nodes[idx];
        node.closed = closed;
        node.open_mask = mask;
        node.open_extent = extent;
        node.size = size;
        node.t_cc = t_cc;
        node.t_mc = t_mc;
        node.peak_elems = peak;
        node.contracted_prod = contracted_prod;
        node.m_extent = m;
        node.n_extent = nn;
    }
}

impl ContractionTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Internal(..))).count()
    }

    pub fn total_tcc(&self) -> u64 {
        self.nodes.iter().map(|n| n.t_cc).sum()
    }

    pub fn total_tmc(&self) -> u64 {
        self.nodes.iter().map(|n| n.t_mc).sum()
    }

    /// Largest intermediate size in elements, leaves included.
    pub fn t_sc(&self) -> u64 {
        self.nodes.iter().map(|n| n.size).max().unwrap_or(0)
    }

    /// Peak step working set in bytes.
    pub fn peak_bytes(&self, model: &CostModel) -> u64 {
        self.nodes.iter().map(|n| n.peak_elems).max().unwrap_or(0) * model.sizeof_data
    }

    /// Internal node indices ordered root to leaves (breadth first).
    pub fn internal_nodes_from_root(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(self.root);
        while let Some(idx) = queue.pop_front() {
            if let NodeKind::Internal(l, r) = self.nodes[idx].kind {
                order.push(idx);
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        order
    }

    /// Internal node indices in execution order (children before parents,
    /// deterministic left-first postorder).
    pub fn execution_order(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let mut stack = vec![(self.root, false)];
        while let Some((idx, expanded)) = stack.pop() {
            match self.nodes[idx].kind {
                NodeKind::Leaf(_) => {}
                NodeKind::Internal(l, r) => {
                    if expanded {
                        order.push(idx);
                    } else {
                        stack.push((idx, true));
                        stack.push((r, false));
                        stack.push((l, false));
                    }
                }
            }
        }
        order
    }

    /// Full annotation pass, leaves to root.
    pub fn annotate(&mut self, ann: &Annotator) {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].kind, NodeKind::Leaf(_)) {
                ann.annotate_leaf(&mut self.nodes[i]);
            }
        }
        for idx in self.execution_order() {
            ann.annotate_internal(&mut self.nodes, idx);
        }
    }

    fn balance_penalty(&self, p: &BalancePenalty) -> f64 {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Internal(..)) && n.contracted_prod >= 2)
            .map(|n| {
                let short = |x: u64, thr: f64| (thr / x as f64).log2().max(0.0);
                p.weight
                    * (short(n.m_extent, p.mn_threshold)
                        + short(n.n_extent, p.mn_threshold)
                        + short(n.contracted_prod, p.k_threshold))
            })
            .sum()
    }

    /// log(T_cc + alpha T_mc) + beta log(T_sc), plus the optional balance
    /// penalty.
    pub fn score(&self, params: &ScoreParams) -> f64 {
        let lb = params.log_base.ln();
        let cost = self.total_tcc() as f64 + params.alpha * self.total_tmc() as f64;
        let mut s = cost.max(1.0).ln() / lb + params.beta * (self.t_sc() as f64).max(1.0).ln() / lb;
        if let Some(bp) = &params.balance {
            s += self.balance_penalty(bp);
        }
        s
    }

    /// One associativity rotation at `node`. The pivot is the internal
    /// child (left preferred); `direction` selects which grandchild is
    /// pulled out to the sibling slot:
    ///   (X (*) Y) (*) Z  ->  (X (*) Z) (*) Y   (direction 0)
    ///   (X (*) Y) (*) Z  ->  (Y (*) Z) (*) X   (direction 1)
    /// Returns None when both children are leaves.
    pub fn local_update(
        &self,
        ann: &Annotator,
        node: usize,
        direction: usize,
    ) -> Result<Option<ContractionTree>> {
        let mut tree = self.clone();
        if tree.rotate_in_place(ann, node, direction)?.is_none() {
            return Ok(None);
        }
        Ok(Some(tree))
    }

    /// In-place rotation; returns the two re-annotated node indices
    /// (pivot, node) or None for the leaf-leaf no-op.
    fn rotate_in_place(
        &mut self,
        ann: &Annotator,
        node: usize,
        direction: usize,
    ) -> Result<Option<(usize, usize)>> {
        let (l, r) = match self.nodes[node].kind {
            NodeKind::Internal(l, r) => (l, r),
            NodeKind::Leaf(_) => return Err(Error::Path("local update targets an internal node".into())),
        };
        let l_internal = matches!(self.nodes[l].kind, NodeKind::Internal(..));
        let r_internal = matches!(self.nodes[r].kind, NodeKind::Internal(..));
        let (pivot, sibling, pivot_left) = if l_internal {
            (l, r, true)
        } else if r_internal {
            (r, l, false)
        } else {
            return Ok(None);
        };
        let (g1, g2) = match self.nodes[pivot].kind {
            NodeKind::Internal(a, b) => (a, b),
            _ => unreachable!(),
        };
        let (keep, displaced) = if direction == 0 { (g1, g2) } else { (g2, g1) };
        self.nodes[pivot].kind = NodeKind::Internal(keep, sibling);
        self.nodes[node].kind = if pivot_left {
            NodeKind::Internal(pivot, displaced)
        } else {
            NodeKind::Internal(displaced, pivot)
        };
        self.nodes[sibling].parent = Some(pivot);
        self.nodes[displaced].parent = Some(node);
        self.nodes[keep].parent = Some(pivot);
        ann.annotate_internal(&mut self.nodes, pivot);
        ann.annotate_internal(&mut self.nodes, node);
        Ok(Some((pivot, node)))
    }

    /// Sorted tensor ids under each node (test helper).
    pub fn leaf_set(&self, node: usize) -> Vec<TensorId> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            match self.nodes[i].kind {
                NodeKind::Leaf(id) => out.push(id),
                NodeKind::Internal(l, r) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        out.sort();
        out
    }
}

/// Greedy seeding: repeatedly contract the pair minimizing the resulting
/// tensor size; ties by smaller T_cc, then lexicographic node ids.
pub fn greedy_init(net: &TensorNetwork, model: CostModel) -> Result<ContractionTree> {
    let ann = Annotator::new(net, model);
    if net.tensors.is_empty() {
        return Err(Error::Path("cannot build a tree over an empty network".into()));
    }
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(2 * net.tensors.len());
    let mut leaves = Vec::with_capacity(net.tensors.len());
    for id in net.tensors.keys() {
        let mut node = TreeNode::leaf_placeholder(*id);
        ann.annotate_leaf(&mut node);
        leaves.push(nodes.len());
        nodes.push(node);
    }
    let n = leaves.len();
    if n == 1 {
        return Ok(ContractionTree { nodes, root: 0, leaves });
    }

    // Min-heap over (result size, t_cc, node ids); lazily invalidated.
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize, usize)>> = BinaryHeap::new();
    let mut alive = vec![true; nodes.len()];
    let eval = |nodes: &Vec<TreeNode>, i: usize, j: usize| -> (u64, u64) {
        let tmp = TreeNode {
            kind: NodeKind::Internal(i, j),
            ..TreeNode::leaf_placeholder(TensorId(0))
        };
        let mut scratch = nodes.clone();
        scratch.push(tmp);
        let idx = scratch.len() - 1;
        ann.annotate_internal(&mut scratch, idx);
        (scratch[idx].size, scratch[idx].t_cc)
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let (size, tcc) = eval(&nodes, i, j);
            heap.push(Reverse((size, tcc, i, j)));
        }
    }
    let mut remaining = n;
    while remaining > 1 {
        let Reverse((_, _, i, j)) = heap.pop().ok_or_else(|| Error::Path("greedy heap exhausted".into()))?;
        if !alive[i] || !alive[j] {
            continue;
        }
        let idx = nodes.len();
        nodes.push(TreeNode { kind: NodeKind::Internal(i, j), ..TreeNode::leaf_placeholder(TensorId(0)) });
        ann.annotate_internal(&mut nodes, idx);
        nodes[i].parent = Some(idx);
        nodes[j].parent = Some(idx);
        alive[i] = false;
        alive[j] = false;
        alive.push(true);
        remaining -= 1;
        if remaining > 1 {
            for other in 0..idx {
                if alive[other] {
                    let (size, tcc) = eval(&nodes, other.min(idx), other.max(idx));
                    heap.push(Reverse((size, tcc, other.min(idx), other.max(idx))));
                }
            }
        }
    }
    let root = nodes.len() - 1;
    Ok(ContractionTree { nodes, root, leaves })
}

#[derive(Debug, Clone, Copy)]
pub struct SaMove {
    pub temperature: f64,
    pub delta: f64,
    pub accepted: bool,
}

/// Simulated annealing over contraction trees. Each sweep visits every
/// internal node from the root down, proposing one uniformly random
/// rotation direction and accepting with the Metropolis rule. Returns
/// the best tree seen, so the result never scores above the greedy
/// initialization.
pub fn sa_optimize(
    net: &TensorNetwork,
    params: &ScoreParams,
    schedule: &SaSchedule,
    seed: u64,
    model: CostModel,
) -> Result<ContractionTree> {
    sa_optimize_traced(net, params, schedule, seed, model, None)
}

pub fn sa_optimize_traced(
    net: &TensorNetwork,
    params: &ScoreParams,
    schedule: &SaSchedule,
    seed: u64,
    model: CostModel,
    trace: Option<&mut Vec<SaMove>>,
) -> Result<ContractionTree> {
    let tree = greedy_init(net, model)?;
    sa_refine_traced(net, tree, params, schedule, seed, model, trace)
}

/// Anneal starting from an existing tree (used by dynamic slicing's
/// fine-tune step).
pub fn sa_refine(
    net: &TensorNetwork,
    tree: ContractionTree,
    params: &ScoreParams,
    schedule: &SaSchedule,
    seed: u64,
    model: CostModel,
) -> Result<ContractionTree> {
    sa_refine_traced(net, tree, params, schedule, seed, model, None)
}

pub fn sa_refine_traced(
    net: &TensorNetwork,
    mut tree: ContractionTree,
    params: &ScoreParams,
    schedule: &SaSchedule,
    seed: u64,
    model: CostModel,
    mut trace: Option<&mut Vec<SaMove>>,
) -> Result<ContractionTree> {
    let ann = Annotator::new(net, model);
    if tree.leaf_count() <= 2 || schedule.sweeps == 0 {
        return Ok(tree);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut score = tree.score(params);
    let mut best = tree.clone();
    let mut best_score = score;
    let mut temperature = schedule.t0;
    for _ in 0..schedule.sweeps {
        let order = tree.internal_nodes_from_root();
        for node in order {
            let direction = rng.gen_range(0..2usize);
            let mut candidate = tree.clone();
            if candidate.rotate_in_place(&ann, node, direction)?.is_none() {
                continue;
            }
            let new_score = candidate.score(params);
            let delta = new_score - score;
            let accepted = delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp();
            if let Some(t) = trace.as_deref_mut() {
                t.push(SaMove { temperature, delta, accepted });
            }
            if accepted {
                tree = candidate;
                score = new_score;
                if score < best_score {
                    best_score = score;
                    best = tree.clone();
                }
            }
        }
        temperature = (temperature * schedule.decay).max(schedule.tmin);
    }
    Ok(best)
}

/// Brute-force optimum over every contraction tree of a small network.
/// Enumerates all pairwise contraction sequences (each tree is reached
/// at least once); intended for networks of at most 8 tensors.
pub fn exhaustive_best_score(net: &TensorNetwork, params: &ScoreParams, model: CostModel) -> Result<f64> {
    if net.tensors.len() > 8 {
        return Err(Error::Path("exhaustive search limited to 8 tensors".into()));
    }
    let ann = Annotator::new(net, model);
    let mut base = ContractionTree {
        nodes: net
            .tensors
            .keys()
            .map(|id| {
                let mut n = TreeNode::leaf_placeholder(*id);
                ann.annotate_leaf(&mut n);
                n
            })
            .collect(),
        root: 0,
        leaves: (0..net.tensors.len()).collect(),
    };
    let roots: Vec<usize> = (0..base.nodes.len()).collect();
    let mut best = f64::INFINITY;
    fn recurse(
        ann: &Annotator,
        params: &ScoreParams,
        tree: &mut ContractionTree,
        roots: &[usize],
        best: &mut f64,
    ) {
        if roots.len() == 1 {
            tree.root = roots[0];
            let s = tree.score(params);
            if s < *best {
                *best = s;
            }
            return;
        }
        for i in 0..roots.len() {
            for j in (i + 1)..roots.len() {
                let idx = tree.nodes.len();
                tree.nodes.push(TreeNode {
                    kind: NodeKind::Internal(roots[i], roots[j]),
                    ..TreeNode::leaf_placeholder(TensorId(0))
                });
                ann.annotate_internal(&mut tree.nodes, idx);
                let next: Vec<usize> = roots
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, &r)| r)
                    .chain(std::iter::once(idx))
                    .collect();
                recurse(ann, params, tree, &next, best);
                tree.nodes.pop();
            }
        }
    }
    recurse(&ann, params, &mut base, &roots, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{random_test_network, Bond, ComplexTensor};
    use num_complex::Complex64;

    /// Matrix-chain network A(2x4) B(4x8) C(8x2), open dimensions modeled
    /// as closed dangling bonds is not possible, so the outer indices
    /// connect to rank-1 cap tensors.
    fn matrix_chain() -> TensorNetwork {
        let mut net = TensorNetwork::default();
        let dims = [2usize, 4, 8, 2];
        // bonds: 0 = i (2), 1 = j (4), 2 = k (8), 3 = l (2)
        for (b, d) in dims.iter().enumerate() {
            net.add_bond(Bond {
                id: BondId(b as u32),
                dim: *d,
                endpoints: vec![],
                open: false,
                qubit: None,
                sliced: false,
            });
        }
        let data = |n: usize| vec![Complex64::new(1.0, 0.0); n];
        let tensors: Vec<(TensorId, Vec<BondId>, Vec<usize>)> = vec![
            (TensorId(0), vec![BondId(0), BondId(1)], vec![2, 4]),
            (TensorId(1), vec![BondId(1), BondId(2)], vec![4, 8]),
            (TensorId(2), vec![BondId(2), BondId(3)], vec![8, 2]),
            (TensorId(3), vec![BondId(0)], vec![2]),
            (TensorId(4), vec![BondId(3)], vec![2]),
        ];
        for (id, labels, dims) in tensors {
            let count = dims.iter().product();
            for l in &labels {
                net.bonds.get_mut(l).unwrap().endpoints.push(id);
            }
            net.insert_tensor(id, ComplexTensor::new(labels, dims, data(count)).unwrap());
        }
        net
    }

    #[test]
    fn step_cost_matches_hand_counts() {
        let model = CostModel::default();
        // C_mn = sum_k A_mk B_kn, all dims 4.
        let (tcc, tmc) = step_cost(16, 16, 4, 1, 16, 16, 16, &model);
        assert_eq!(tcc, 512);
        assert_eq!(tmc, 384);
        // Outer product of two dim-2 vectors.
        let (tcc, _) = step_cost(2, 2, 1, 1, 2, 2, 4, &model);
        assert_eq!(tcc, 32);
        // Full trace of two 2x2 tensors sharing both indices.
        let (tcc, _) = step_cost(4, 4, 4, 1, 4, 4, 1, &model);
        assert_eq!(tcc, 32);
    }

    #[test]
    fn score_formula() {
        // Synthetic tree with known totals.
        let mut tree = ContractionTree {
            nodes: vec![TreeNode::leaf_placeholder(TensorId(0))],
            root: 0,
            leaves: vec![0],
        };
        tree.nodes[0].kind = NodeKind::Internal(0, 0); // count as internal for sums
        tree.nodes[0].t_cc = 1 << 20;
        tree.nodes[0].t_mc = 1 << 10;
        tree.nodes[0].size = 1 << 10;
        let params = ScoreParams { alpha: 1.0, beta: 1.0, log_base: 2.0, balance: None };
        let s = tree.score(&params);
        assert!((s - 30.00141).abs() < 1e-4, "{s}");

        // beta = 0: independent of T_sc.
        let p0 = ScoreParams { alpha: 1.0, beta: 0.0, log_base: 2.0, balance: None };
        let s1 = tree.score(&p0);
        tree.nodes[0].size = 1 << 20;
        assert_eq!(tree.score(&p0), s1);

        // alpha = 0, beta = 0: log of total T_cc.
        let p00 = ScoreParams { alpha: 0.0, beta: 0.0, log_base: 2.0, balance: None };
        assert!((tree.score(&p00) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn greedy_matrix_chain_prefers_small_intermediates() {
        let net = matrix_chain();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        assert_eq!(tree.internal_count(), net.tensors.len() - 1);
        // The (B,C) pair must contract before (A,B): check that some
        // internal node's leaf set is exactly {B, C} or a superset of C
        // that excludes A's j-bond blowup. The size-minimizing first
        // fusion among the matrices is B x C.
        let has_bc = tree
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Internal(..)))
            .any(|(i, _)| {
                let set = tree.leaf_set(i);
                set == vec![TensorId(1), TensorId(2)]
                    || set == vec![TensorId(1), TensorId(2), TensorId(4)]
            });
        assert!(has_bc, "greedy should fuse the small side first");
    }

    #[test]
    fn greedy_two_tensor_network_is_unique_tree() {
        let mut net = TensorNetwork::default();
        net.add_bond(Bond { id: BondId(0), dim: 3, endpoints: vec![TensorId(0), TensorId(1)], open: false, qubit: None, sliced: false });
        for id in [TensorId(0), TensorId(1)] {
            net.insert_tensor(
                id,
                ComplexTensor::new(vec![BondId(0)], vec![3], vec![Complex64::new(1.0, 0.0); 3]).unwrap(),
            );
        }
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        assert_eq!(tree.internal_count(), 1);
        assert_eq!(tree.leaf_set(tree.root), vec![TensorId(0), TensorId(1)]);
    }

    #[test]
    fn greedy_handles_disconnected_components() {
        // Two dot products: contract within each pair, then the outer
        // product of the two scalars.
        let mut net = TensorNetwork::default();
        for (b, eps) in [(0u32, (0u32, 1u32)), (1, (2, 3))] {
            net.add_bond(Bond {
                id: BondId(b),
                dim: 4,
                endpoints: vec![TensorId(eps.0), TensorId(eps.1)],
                open: false,
                qubit: None,
                sliced: false,
            });
        }
        for t in 0..4u32 {
            net.insert_tensor(
                TensorId(t),
                ComplexTensor::new(vec![BondId(t / 2)], vec![4], vec![Complex64::new(1.0, 0.0); 4]).unwrap(),
            );
        }
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        // The root's children must each cover one component.
        if let NodeKind::Internal(l, r) = tree.nodes[tree.root].kind {
            let mut sides = [tree.leaf_set(l), tree.leaf_set(r)];
            sides.sort();
            assert_eq!(sides[0], vec![TensorId(0), TensorId(1)]);
            assert_eq!(sides[1], vec![TensorId(2), TensorId(3)]);
        } else {
            panic!("root must be internal");
        }
    }

    #[test]
    fn local_update_cycles_three_associations() {
        let net = random_test_network(3, 3, 0);
        let model = CostModel::default();
        let ann = Annotator::new(&net, model);
        let tree = greedy_init(&net, model).unwrap();
        // Find the node with an internal child (the root of 3 leaves).
        let node = tree.root;
        let t0sets: Vec<_> = (0..tree.nodes.len()).map(|i| tree.leaf_set(i)).collect();
        let a = tree.local_update(&ann, node, 0).unwrap().unwrap();
        let b = tree.local_update(&ann, node, 1).unwrap().unwrap();
        // The three trees are the three distinct associations: compare
        // the grouping below the root.
        let group = |t: &ContractionTree| {
            if let NodeKind::Internal(l, r) = t.nodes[t.root].kind {
                let mut sides = [t.leaf_set(l), t.leaf_set(r)];
                sides.sort();
                sides
            } else {
                unreachable!()
            }
        };
        let g0 = group(&tree);
        let ga = group(&a);
        let gb = group(&b);
        assert_ne!(g0, ga);
        assert_ne!(g0, gb);
        assert_ne!(ga, gb);
        // Applying the same direction twice returns to the start.
        let back = a.local_update(&ann, node, 0).unwrap().unwrap();
        assert_eq!(group(&back), g0);
        let _ = t0sets;
    }

    #[test]
    fn local_update_noop_on_leaf_leaf() {
        let net = random_test_network(2, 3, 1);
        let model = CostModel::default();
        let ann = Annotator::new(&net, model);
        let tree = greedy_init(&net, model).unwrap();
        assert!(tree.local_update(&ann, tree.root, 0).unwrap().is_none());
    }

    #[test]
    fn sa_finds_matrix_chain_optimum() {
        let net = matrix_chain();
        let model = CostModel::default();
        let params = ScoreParams { alpha: 0.0, beta: 0.0, log_base: 2.0, balance: None };
        let schedule = SaSchedule { sweeps: 80, ..Default::default() };
        let tree = sa_optimize(&net, &params, &schedule, 3, model).unwrap();
        let best = exhaustive_best_score(&net, &params, model).unwrap();
        assert!((tree.score(&params) - best).abs() < 1e-12, "sa={} best={}", tree.score(&params), best);
    }

    #[test]
    fn sa_zero_sweeps_returns_greedy() {
        let net = random_test_network(6, 4, 9);
        let model = CostModel::default();
        let params = ScoreParams::default();
        let greedy = greedy_init(&net, model).unwrap();
        let schedule = SaSchedule { sweeps: 0, ..Default::default() };
        let tree = sa_optimize(&net, &params, &schedule, 5, model).unwrap();
        assert_eq!(tree.score(&params), greedy.score(&params));
    }

    #[test]
    fn sa_is_deterministic_and_monotone() {
        let net = random_test_network(8, 4, 11);
        let model = CostModel::default();
        let params = ScoreParams::default();
        let schedule = SaSchedule { sweeps: 40, ..Default::default() };
        let a = sa_optimize(&net, &params, &schedule, 7, model).unwrap();
        let b = sa_optimize(&net, &params, &schedule, 7, model).unwrap();
        assert_eq!(a.score(&params).to_bits(), b.score(&params).to_bits());
        let greedy = greedy_init(&net, model).unwrap();
        assert!(a.score(&params) <= greedy.score(&params));
    }

    #[test]
    fn sa_cold_chain_only_accepts_improvements() {
        let net = random_test_network(8, 4, 13);
        let model = CostModel::default();
        let params = ScoreParams::default();
        let schedule = SaSchedule { t0: 1e-12, tmin: 1e-12, decay: 1.0, sweeps: 10 };
        let mut trace = Vec::new();
        let _ = sa_optimize_traced(&net, &params, &schedule, 3, model, Some(&mut trace)).unwrap();
        assert!(!trace.is_empty());
        for mv in &trace {
            if mv.accepted {
                assert!(mv.delta <= 0.0, "accepted uphill move at T~0: {mv:?}");
            }
        }
    }

    #[test]
    fn tree_has_n_minus_one_internal_nodes() {
        for seed in 0..5 {
            let n = 3 + (seed as usize % 5);
            let net = random_test_network(n, 4, seed);
            let tree = greedy_init(&net, CostModel::default()).unwrap();
            assert_eq!(tree.internal_count(), n - 1);
            assert_eq!(tree.leaf_count(), n);
        }
    }
}
