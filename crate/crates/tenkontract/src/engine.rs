//! Execution of contraction trees: general einsum via TTGT (permute to
//! matrix form, batched GEMM, permute back), GEMM classification, top-k
//! index reordering, and sparse einsum as indexed batched GEMM.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::BitString;
use crate::network::{
    merge_open_groups, BondId, ComplexTensor, GroupTable, MergePlan, TensorId, TensorNetwork,
};
use crate::pathopt::{ContractionTree, NodeKind};
use crate::precision::{
    mac_dot_complex_strided, FormatSpec, MacCounter, PrecisionSchedule, StepPrecision,
};
use crate::slicer::{subtask_count, subtask_network, SliceSet};
use crate::verify::AmplitudeSet;

/// Sparse open-bond merge attached to a contraction step. The listed
/// group labels in each operand coalesce into `out_label`; per joint
/// configuration, the plan names which slab of each side contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMerge {
    pub lhs_groups: Vec<BondId>,
    pub rhs_groups: Vec<BondId>,
    pub out_label: BondId,
    pub plan: MergePlan,
}

/// One pairwise contraction: operand label orders, output order, the
/// contracted and batch label sets, and per-label dims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsumSpec {
    pub lhs: Vec<BondId>,
    pub lhs_dims: Vec<usize>,
    pub rhs: Vec<BondId>,
    pub rhs_dims: Vec<usize>,
    pub out: Vec<BondId>,
    pub out_dims: Vec<usize>,
    /// Contracted labels in lhs-appearance order.
    pub contracted: Vec<BondId>,
    /// Labels present in both operands and the output.
    pub batch: Vec<BondId>,
    pub merge: Option<SparseMerge>,
}

impl EinsumSpec {
    pub fn dim_of(&self, label: BondId) -> Option<usize> {
        self.lhs
            .iter()
            .position(|&l| l == label)
            .map(|i| self.lhs_dims[i])
            .or_else(|| self.rhs.iter().position(|&l| l == label).map(|i| self.rhs_dims[i]))
            .or_else(|| self.out.iter().position(|&l| l == label).map(|i| self.out_dims[i]))
    }

    fn lhs_group_set(&self) -> Vec<BondId> {
        self.merge.as_ref().map(|m| m.lhs_groups.clone()).unwrap_or_default()
    }

    fn rhs_group_set(&self) -> Vec<BondId> {
        self.merge.as_ref().map(|m| m.rhs_groups.clone()).unwrap_or_default()
    }

    /// Free lhs labels (M side) in output order.
    fn m_labels(&self) -> Vec<BondId> {
        let groups = self.lhs_group_set();
        self.out
            .iter()
            .filter(|l| self.lhs.contains(l) && !self.batch.contains(l) && !groups.contains(l))
            .cloned()
            .collect()
    }

    /// Free rhs labels (N side) in output order.
    fn n_labels(&self) -> Vec<BondId> {
        let groups = self.rhs_group_set();
        self.out
            .iter()
            .filter(|l| {
                self.rhs.contains(l)
                    && !self.lhs.contains(l)
                    && !self.batch.contains(l)
                    && !groups.contains(l)
            })
            .cloned()
            .collect()
    }

    fn prod(&self, labels: &[BondId]) -> u64 {
        labels.iter().map(|l| self.dim_of(*l).unwrap_or(1) as u64).product()
    }
}

/// Flattened (batched) matrix-multiply equivalent of a contraction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmShape {
    pub b: u64,
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub lhs_transposed: bool,
    pub rhs_transposed: bool,
    /// Per-batch element offsets into each operand for sparse batched
    /// GEMM; dense batches stride uniformly and carry no lists.
    pub lhs_offsets: Option<Vec<usize>>,
    pub rhs_offsets: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GemmClass {
    Formable(GemmShape),
    NotFormable(String),
}

impl GemmClass {
    pub fn is_formable(&self) -> bool {
        matches!(self, GemmClass::Formable(_))
    }
}

/// Does `labels` consist of `prefix` followed by two contiguous runs
/// equal to `first` and `second`, in those exact orders?
fn is_prefix_runs(labels: &[BondId], prefix: &[BondId], first: &[BondId], second: &[BondId]) -> bool {
    if labels.len() != prefix.len() + first.len() + second.len() {
        return false;
    }
    labels[..prefix.len()] == *prefix
        && labels[prefix.len()..prefix.len() + first.len()] == *first
        && labels[prefix.len() + first.len()..] == *second
}

/// Decide whether the step, with its current operand and output label
/// orders, is directly a (batched) GEMM: each operand must be
/// [batch..., then M|K in one contiguous run each] in one of the four
/// transpose combinations, and the output [batch..., M..., N...].
/// Sparse merges act as the batch, with per-configuration offsets.
pub fn classify_gemm(spec: &EinsumSpec) -> GemmClass {
    let m_labels = spec.m_labels();
    let n_labels = spec.n_labels();
    let k_labels: Vec<BondId> =
        spec.lhs.iter().filter(|l| spec.contracted.contains(l)).cloned().collect();
    let m = spec.prod(&m_labels);
    let n = spec.prod(&n_labels);
    let k = spec.prod(&k_labels);

    let (lhs_prefix, rhs_prefix, out_prefix): (Vec<BondId>, Vec<BondId>, Vec<BondId>) =
        if let Some(merge) = &spec.merge {
            if !spec.batch.is_empty() {
                return GemmClass::NotFormable("sparse merge cannot carry batch labels".into());
            }
            (merge.lhs_groups.clone(), merge.rhs_groups.clone(), vec![merge.out_label])
        } else {
            (spec.batch.clone(), spec.batch.clone(), spec.batch.clone())
        };

    if !is_prefix_runs(&spec.out, &out_prefix, &m_labels, &n_labels) {
        return GemmClass::NotFormable("output is not [batch, M, N]".into());
    }
    let lhs_transposed = if is_prefix_runs(&spec.lhs, &lhs_prefix, &m_labels, &k_labels) {
        false
    } else if is_prefix_runs(&spec.lhs, &lhs_prefix, &k_labels, &m_labels) {
        true
    } else {
        return GemmClass::NotFormable("lhs M/K runs are not contiguous in the required order".into());
    };
    let rhs_transposed = if is_prefix_runs(&spec.rhs, &rhs_prefix, &k_labels, &n_labels) {
        false
    } else if is_prefix_runs(&spec.rhs, &rhs_prefix, &n_labels, &k_labels) {
        true
    } else {
        return GemmClass::NotFormable("rhs K/N runs are not contiguous in the required order".into());
    };

    let (b, lhs_offsets, rhs_offsets) = if let Some(merge) = &spec.merge {
        let mk = (m * k.max(1)) as usize;
        let kn = (k.max(1) * n) as usize;
        let lhs: Vec<usize> = merge.plan.pairs.iter().map(|(ia, _)| *ia as usize * mk).collect();
        let rhs: Vec<usize> = merge.plan.pairs.iter().map(|(_, ib)| *ib as usize * kn).collect();
        (merge.plan.merged_dim() as u64, Some(lhs), Some(rhs))
    } else {
        (spec.prod(&spec.batch), None, None)
    };

    GemmClass::Formable(GemmShape { b, m, n, k, lhs_transposed, rhs_transposed, lhs_offsets, rhs_offsets })
}

/// Indexed batched GEMM: output slab c is GEMM(A at lhs_offsets[c], B at
/// rhs_offsets[c]); slabs concatenate along the batch axis. Operands are
/// read in place through the offsets; no gathered copies are made.
pub fn sparse_batched_gemm(
    a: &[Complex64],
    b: &[Complex64],
    shape: &GemmShape,
    prec: StepPrecision,
    accum: FormatSpec,
    counter: &mut MacCounter,
) -> Vec<Complex64> {
    let (bsz, m, n, k) = (shape.b as usize, shape.m as usize, shape.n as usize, shape.k as usize);
    let k_len = k.max(1);
    let mut out = vec![Complex64::new(0.0, 0.0); bsz * m * n];
    for c in 0..bsz {
        let ao = match &shape.lhs_offsets {
            Some(offs) => offs[c],
            None => c * m * k_len,
        };
        let bo = match &shape.rhs_offsets {
            Some(offs) => offs[c],
            None => c * k_len * n,
        };
        for i in 0..m {
            // Element (i, t) of the lhs slab; (t, j) of the rhs slab.
            let (a0, astride) = if shape.lhs_transposed { (ao + i, m) } else { (ao + i * k_len, 1) };
            for j in 0..n {
                let (b0, bstride) = if shape.rhs_transposed { (bo + j * k_len, 1) } else { (bo + j, n) };
                out[c * m * n + i * n + j] =
                    mac_dot_complex_strided(a, a0, astride, b, b0, bstride, k_len, prec, accum, counter);
            }
        }
    }
    out
}

/// Execute one contraction step under the TTGT scheme: permute operands
/// into (batched) matrix form unless a transpose-compatible layout is
/// already in place, multiply through the precision-emulating kernel,
/// and permute the result to the spec's output order when needed.
pub fn execute_step(
    a: &ComplexTensor,
    b: &ComplexTensor,
    spec: &EinsumSpec,
    prec: StepPrecision,
    accum: FormatSpec,
    counter: &mut MacCounter,
) -> Result<ComplexTensor> {
    for (labels, dims, tensor, side) in
        [(&spec.lhs, &spec.lhs_dims, a, "lhs"), (&spec.rhs, &spec.rhs_dims, b, "rhs")]
    {
        if tensor.labels.len() != labels.len() {
            return Err(Error::Engine(format!("{side} rank mismatch")));
        }
        for (l, d) in labels.iter().zip(dims.iter()) {
            match tensor.dim_of(*l) {
                Some(got) if got == *d => {}
                Some(got) => {
                    return Err(Error::Engine(format!("{side} dim mismatch on {l}: {got} vs {d}")))
                }
                None => return Err(Error::Engine(format!("unknown label {l} on {side}"))),
            }
        }
    }

    let m_labels = spec.m_labels();
    let n_labels = spec.n_labels();
    let k_labels: Vec<BondId> =
        spec.lhs.iter().filter(|l| spec.contracted.contains(l)).cloned().collect();
    let (lhs_prefix, rhs_prefix) = if spec.merge.is_some() {
        (spec.lhs_group_set(), spec.rhs_group_set())
    } else {
        (spec.batch.clone(), spec.batch.clone())
    };

    let layout = |prefix: &[BondId], first: &[BondId], second: &[BondId]| -> Vec<BondId> {
        prefix.iter().chain(first).chain(second).cloned().collect()
    };
    let target_lhs = layout(&lhs_prefix, &m_labels, &k_labels);
    let target_lhs_t = layout(&lhs_prefix, &k_labels, &m_labels);
    let (a_exec, lhs_transposed) = if a.labels == target_lhs {
        (None, false)
    } else if a.labels == target_lhs_t {
        (None, true)
    } else {
        (Some(a.permuted(&target_lhs)?), false)
    };
    let target_rhs = layout(&rhs_prefix, &k_labels, &n_labels);
    let target_rhs_t = layout(&rhs_prefix, &n_labels, &k_labels);
    let (b_exec, rhs_transposed) = if b.labels == target_rhs {
        (None, false)
    } else if b.labels == target_rhs_t {
        (None, true)
    } else {
        (Some(b.permuted(&target_rhs)?), false)
    };

    let m = spec.prod(&m_labels);
    let n = spec.prod(&n_labels);
    let k = spec.prod(&k_labels);
    let (bsz, lhs_offsets, rhs_offsets) = if let Some(merge) = &spec.merge {
        let mk = (m * k.max(1)) as usize;
        let kn = (k.max(1) * n) as usize;
        (
            merge.plan.merged_dim() as u64,
            Some(merge.plan.pairs.iter().map(|(ia, _)| *ia as usize * mk).collect()),
            Some(merge.plan.pairs.iter().map(|(_, ib)| *ib as usize * kn).collect()),
        )
    } else {
        (spec.prod(&spec.batch), None, None)
    };
    let shape = GemmShape { b: bsz, m, n, k, lhs_transposed, rhs_transposed, lhs_offsets, rhs_offsets };
    let data = sparse_batched_gemm(
        &a_exec.as_ref().unwrap_or(a).data,
        &b_exec.as_ref().unwrap_or(b).data,
        &shape,
        prec,
        accum,
        counter,
    );

    // Natural result layout: [merged/batch, M..., N...].
    let mut natural: Vec<BondId> = if let Some(merge) = &spec.merge {
        vec![merge.out_label]
    } else {
        spec.batch.clone()
    };
    natural.extend(&m_labels);
    natural.extend(&n_labels);
    let mut natural_dims = Vec::with_capacity(natural.len());
    if let Some(merge) = &spec.merge {
        natural_dims.push(merge.plan.merged_dim());
    } else {
        for l in &spec.batch {
            natural_dims.push(spec.dim_of(*l).unwrap());
        }
    }
    for l in m_labels.iter().chain(&n_labels) {
        natural_dims.push(spec.dim_of(*l).unwrap());
    }
    let mut result = ComplexTensor::new(natural, natural_dims, data)?;
    result.precision = prec.fmt;
    if result.labels != spec.out {
        result = result.permuted(&spec.out)?;
        result.precision = prec.fmt;
    }
    Ok(result)
}

/// Reference to a step operand: a plan leaf or an earlier step's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRef {
    Leaf(usize),
    Step(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanStep {
    pub lhs: NodeRef,
    pub rhs: NodeRef,
    pub spec: EinsumSpec,
    pub t_cc: u64,
    pub t_mc: u64,
    pub modified: bool,
}

/// A fully materialized contraction order: leaf layouts, one spec per
/// step in execution order, the slice set, and the mapping from the root
/// group axis back to bitstrings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub leaves: Vec<TensorId>,
    pub leaf_layouts: Vec<Vec<BondId>>,
    pub steps: Vec<PlanStep>,
    pub slices: Vec<BondId>,
    pub slice_dims: Vec<usize>,
    /// Configs of the root tensor's group axis over all qubits; a single
    /// empty config for closed networks.
    pub root_table: GroupTable,
    pub score: f64,
}

struct NodeInfo {
    reference: NodeRef,
    out: Vec<BondId>,
    /// Group labels in out order with their tables.
    groups: Vec<(BondId, GroupTable)>,
}

/// Derive the executable plan from an annotated tree: explicit label
/// orders, merge plans against the boundary state, and per-step costs.
pub fn plan_from_tree(net: &TensorNetwork, tree: &ContractionTree) -> Result<ExecutionPlan> {
    let state = net.boundary.clone();
    let mut next_label = net.next_bond_id();
    let mut infos: Vec<Option<NodeInfo>> = (0..tree.nodes.len()).map(|_| None).collect();
    let leaves: Vec<TensorId> = tree
        .leaves
        .iter()
        .map(|&idx| match tree.nodes[idx].kind {
            NodeKind::Leaf(id) => id,
            _ => unreachable!("leaf list points at leaves"),
        })
        .collect();

    for (pos, &idx) in tree.leaves.iter().enumerate() {
        let id = leaves[pos];
        let tensor = &net.tensors[&id];
        let mut out = Vec::new();
        let mut groups = Vec::new();
        for &l in &tensor.labels {
            let bond = &net.bonds[&l];
            if bond.sliced {
                continue;
            }
            out.push(l);
            if bond.open {
                let q = bond
                    .qubit
                    .ok_or_else(|| Error::Engine(format!("open bond {l} lacks a qubit tag")))?;
                groups.push((l, GroupTable::single_qubit(q)));
            }
        }
        infos[idx] = Some(NodeInfo { reference: NodeRef::Leaf(pos), out, groups });
    }

    let exec = tree.execution_order();
    let mut steps: Vec<PlanStep> = Vec::with_capacity(exec.len());
    for (step_idx, &idx) in exec.iter().enumerate() {
        let (l, r) = match tree.nodes[idx].kind {
            NodeKind::Internal(l, r) => (l, r),
            _ => unreachable!(),
        };
        let (li, ri) = (infos[l].as_ref().unwrap(), infos[r].as_ref().unwrap());
        let contracted: Vec<BondId> =
            li.out.iter().filter(|x| ri.out.contains(x)).cloned().collect();
        let lhs_groups = li.groups.clone();
        let rhs_groups = ri.groups.clone();
        let total_groups = lhs_groups.len() + rhs_groups.len();

        // Merge policy: coalesce whenever two or more open groups would
        // survive, or when a lone raw group needs restricting to the
        // boundary's local configurations.
        let mut merge: Option<SparseMerge> = None;
        let mut out_groups: Vec<(BondId, GroupTable)> = Vec::new();
        if total_groups >= 1 {
            let state = state
                .as_ref()
                .ok_or_else(|| Error::Engine("open bonds require a boundary state".into()))?;
            let needs_merge = if total_groups >= 2 {
                true
            } else {
                let (_, table) = lhs_groups.first().or(rhs_groups.first()).unwrap();
                state.projection_count(&sorted(&table.qubits)) != table.configs.len() as u64
            };
            if needs_merge {
                let side = |groups: &[(BondId, GroupTable)]| -> GroupTable {
                    groups
                        .iter()
                        .fold(GroupTable { qubits: vec![], configs: vec![0] }, |acc, (_, t)| {
                            acc.product(t)
                        })
                };
                let plan = merge_open_groups(state, &side(&lhs_groups), &side(&rhs_groups))?;
                let out_label = BondId(next_label);
                next_label += 1;
                debug_assert_eq!(plan.merged_dim() as u64, tree.nodes[idx].open_extent);
                out_groups.push((out_label, plan.merged.clone()));
                merge = Some(SparseMerge {
                    lhs_groups: lhs_groups.iter().map(|(g, _)| *g).collect(),
                    rhs_groups: rhs_groups.iter().map(|(g, _)| *g).collect(),
                    out_label,
                    plan,
                });
            } else {
                out_groups = lhs_groups.iter().chain(rhs_groups.iter()).cloned().collect();
            }
        }

        // Output order: merged label first, then lhs survivors in lhs
        // order, then rhs survivors in rhs order.
        let merged_away: Vec<BondId> = merge
            .as_ref()
            .map(|m| m.lhs_groups.iter().chain(&m.rhs_groups).cloned().collect())
            .unwrap_or_default();
        let mut out = Vec::new();
        if let Some(m) = &merge {
            out.push(m.out_label);
        }
        out.extend(li.out.iter().filter(|x| !contracted.contains(x) && !merged_away.contains(x)));
        out.extend(ri.out.iter().filter(|x| !contracted.contains(x) && !merged_away.contains(x)));

        let dim_lookup = |label: &BondId, local: &NodeInfo| -> usize {
            if let Some((_, t)) = local.groups.iter().find(|(g, _)| g == label) {
                t.dim()
            } else {
                net.bonds[label].dim
            }
        };
        let lhs_dims: Vec<usize> = li.out.iter().map(|x| dim_lookup(x, li)).collect();
        let rhs_dims: Vec<usize> = ri.out.iter().map(|x| dim_lookup(x, ri)).collect();
        let out_dims: Vec<usize> = out
            .iter()
            .map(|x| {
                out_groups
                    .iter()
                    .find(|(g, _)| g == x)
                    .map(|(_, t)| t.dim())
                    .unwrap_or_else(|| net.bonds[x].dim)
            })
            .collect();

        let spec = EinsumSpec {
            lhs: li.out.clone(),
            lhs_dims,
            rhs: ri.out.clone(),
            rhs_dims,
            out: out.clone(),
            out_dims,
            contracted,
            batch: vec![],
            merge,
        };
        steps.push(PlanStep {
            lhs: li.reference,
            rhs: ri.reference,
            spec,
            t_cc: tree.nodes[idx].t_cc,
            t_mc: tree.nodes[idx].t_mc,
            modified: false,
        });
        infos[idx] = Some(NodeInfo { reference: NodeRef::Step(step_idx), out, groups: out_groups });
    }

    let root_info = infos[tree.root].as_ref().unwrap();
    let root_table = match root_info.groups.len() {
        0 => GroupTable { qubits: vec![], configs: vec![0] },
        1 => root_info.groups[0].1.clone(),
        n => return Err(Error::Engine(format!("root carries {n} unmerged groups"))),
    };
    let slices: Vec<BondId> = net.bonds.values().filter(|b| b.sliced).map(|b| b.id).collect();
    let slice_dims: Vec<usize> = slices.iter().map(|b| net.bonds[b].dim).collect();
    Ok(ExecutionPlan {
        leaf_layouts: leaves
            .iter()
            .map(|id| {
                net.tensors[id]
                    .labels
                    .iter()
                    .filter(|l| !net.bonds[l].sliced)
                    .cloned()
                    .collect()
            })
            .collect(),
        leaves,
        steps,
        slices,
        slice_dims,
        root_table,
        score: 0.0,
    })
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

impl ExecutionPlan {
    pub fn step_tccs(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.t_cc).collect()
    }

    pub fn total_tcc(&self) -> u64 {
        self.steps.iter().map(|s| s.t_cc).sum()
    }

    /// Number of independent subtasks implied by the slice set.
    pub fn n_subtasks(&self) -> usize {
        subtask_count(&self.slice_dims)
    }

    pub fn slice_set(&self) -> SliceSet {
        SliceSet { bonds: self.slices.clone(), dims: self.slice_dims.clone() }
    }

    /// Sanity-check the plan against a network: leaf existence, label
    /// sets (net of sliced bonds).
    pub fn validate_against(&self, net: &TensorNetwork) -> Result<()> {
        if self.leaves.len() != net.tensors.len() {
            return Err(Error::Engine(format!(
                "plan covers {} leaves but the network has {} tensors",
                self.leaves.len(),
                net.tensors.len()
            )));
        }
        for (pos, id) in self.leaves.iter().enumerate() {
            let tensor = net
                .tensors
                .get(id)
                .ok_or_else(|| Error::Engine(format!("plan leaf {id} missing from network")))?;
            let mut want: Vec<BondId> = self.leaf_layouts[pos].clone();
            want.sort_unstable();
            let mut got: Vec<BondId> = tensor
                .labels
                .iter()
                .filter(|l| net.bonds.get(l).map(|b| !b.sliced).unwrap_or(true))
                .cloned()
                .collect();
            got.sort_unstable();
            if want != got {
                return Err(Error::Engine(format!("plan leaf {id} labels differ from network")));
            }
        }
        Ok(())
    }
}

/// Steps ranked by T_cc descending (ties by step index), as used for
/// top-k selection.
pub fn rank_steps(plan: &ExecutionPlan) -> Vec<usize> {
    let mut order: Vec<usize> = (0..plan.steps.len()).collect();
    order.sort_by(|&a, &b| plan.steps[b].t_cc.cmp(&plan.steps[a].t_cc).then(a.cmp(&b)));
    order
}

/// Reorder producer output indices so the top-k steps by T_cc become
/// direct GEMMs. A step is skipped when it was already modified, is
/// already formable, cannot become formable without touching its own
/// output order, or either producer step was already modified. Leaves
/// re-layout freely and never block. Returns how many steps changed.
pub fn reorder_topk(plan: &mut ExecutionPlan, k: usize) -> usize {
    let order = rank_steps(plan);
    let mut reordered = 0;
    for &i in order.iter().take(k) {
        if plan.steps[i].modified {
            continue;
        }
        if classify_gemm(&plan.steps[i].spec).is_formable() {
            continue;
        }
        let spec = &plan.steps[i].spec;
        let m_labels = spec.m_labels();
        let n_labels = spec.n_labels();
        let out_prefix: Vec<BondId> = if let Some(m) = &spec.merge {
            vec![m.out_label]
        } else {
            spec.batch.clone()
        };
        // The output order must stay fixed; an input-only reorder exists
        // only if the output is already [prefix, M, N].
        if !is_prefix_runs(&spec.out, &out_prefix, &m_labels, &n_labels) {
            continue;
        }
        let producer_modified = |r: NodeRef, plan: &ExecutionPlan| match r {
            NodeRef::Step(s) => plan.steps[s].modified,
            NodeRef::Leaf(_) => false,
        };
        if producer_modified(plan.steps[i].lhs, plan) || producer_modified(plan.steps[i].rhs, plan) {
            continue;
        }

        let spec = &plan.steps[i].spec;
        let k_labels: Vec<BondId> =
            spec.lhs.iter().filter(|l| spec.contracted.contains(l)).cloned().collect();
        let mut new_lhs: Vec<BondId> =
            if spec.merge.is_some() { spec.lhs_group_set() } else { spec.batch.clone() };
        new_lhs.extend(&m_labels);
        new_lhs.extend(&k_labels);
        let mut new_rhs: Vec<BondId> =
            if spec.merge.is_some() { spec.rhs_group_set() } else { spec.batch.clone() };
        new_rhs.extend(&k_labels);
        new_rhs.extend(&n_labels);
        let new_lhs_dims: Vec<usize> = new_lhs.iter().map(|l| spec.dim_of(*l).unwrap()).collect();
        let new_rhs_dims: Vec<usize> = new_rhs.iter().map(|l| spec.dim_of(*l).unwrap()).collect();

        let (lhs_ref, rhs_ref) = (plan.steps[i].lhs, plan.steps[i].rhs);
        for (r, labels) in [(lhs_ref, new_lhs.clone()), (rhs_ref, new_rhs.clone())] {
            match r {
                NodeRef::Leaf(pos) => plan.leaf_layouts[pos] = labels,
                NodeRef::Step(s) => {
                    let dims: Vec<usize> =
                        labels.iter().map(|l| plan.steps[s].spec.dim_of(*l).unwrap()).collect();
                    plan.steps[s].spec.out = labels;
                    plan.steps[s].spec.out_dims = dims;
                    plan.steps[s].modified = true;
                }
            }
        }
        let step = &mut plan.steps[i];
        step.spec.lhs = new_lhs;
        step.spec.lhs_dims = new_lhs_dims;
        step.spec.rhs = new_rhs;
        step.spec.rhs_dims = new_rhs_dims;
        step.spec.contracted = k_labels;
        step.modified = true;
        reordered += 1;
        debug_assert!(classify_gemm(&plan.steps[i].spec).is_formable());
    }
    reordered
}

/// Execute every step of one subtask, leaves to root, under the given
/// precision schedule. Returns the root tensor.
pub fn contract_subtask(
    subtask_net: &TensorNetwork,
    plan: &ExecutionPlan,
    schedule: &PrecisionSchedule,
    counter: &mut MacCounter,
) -> Result<ComplexTensor> {
    let mut leaf_tensors: Vec<Option<ComplexTensor>> = Vec::with_capacity(plan.leaves.len());
    for (pos, id) in plan.leaves.iter().enumerate() {
        let t = subtask_net
            .tensors
            .get(id)
            .ok_or_else(|| Error::Engine(format!("subtask network lacks tensor {id}")))?;
        let want = &plan.leaf_layouts[pos];
        leaf_tensors.push(Some(if &t.labels == want { t.clone() } else { t.permuted(want)? }));
    }
    if plan.steps.is_empty() {
        return leaf_tensors
            .into_iter()
            .next()
            .flatten()
            .ok_or_else(|| Error::Engine("empty plan".into()));
    }
    let mut outputs: Vec<Option<ComplexTensor>> = vec![None; plan.steps.len()];
    for (i, step) in plan.steps.iter().enumerate() {
        let a = take_operand(step.lhs, &mut leaf_tensors, &mut outputs)?;
        let b = take_operand(step.rhs, &mut leaf_tensors, &mut outputs)?;
        let prec = schedule.resolve(i);
        outputs[i] = Some(execute_step(&a, &b, &step.spec, prec, schedule.accum, counter)?);
    }
    outputs
        .pop()
        .flatten()
        .ok_or_else(|| Error::Engine("plan produced no root tensor".into()))
}

fn take_operand(
    r: NodeRef,
    leaves: &mut [Option<ComplexTensor>],
    outputs: &mut [Option<ComplexTensor>],
) -> Result<ComplexTensor> {
    let slot = match r {
        NodeRef::Leaf(pos) => leaves.get_mut(pos),
        NodeRef::Step(s) => outputs.get_mut(s),
    };
    slot.and_then(|s| s.take())
        .ok_or_else(|| Error::Engine("operand consumed twice or missing".into()))
}

/// Simulation result: requested amplitudes plus instrumentation.
#[derive(Debug)]
pub struct SimulationOutput {
    pub amplitudes: AmplitudeSet,
    pub flops: u64,
    pub subtasks: usize,
}

/// Contract all subtasks (in parallel over `workers`), sum the root
/// tensors in fixed index order with FP64 accumulation, and map the
/// requested bitstrings to amplitudes. `requested` defaults to the
/// boundary state's enumeration.
pub fn run_simulation(
    net: &TensorNetwork,
    plan: &ExecutionPlan,
    schedule: &PrecisionSchedule,
    workers: usize,
    requested: Option<&[BitString]>,
) -> Result<SimulationOutput> {
    plan.validate_against(net)?;
    let state = net
        .boundary
        .as_ref()
        .ok_or_else(|| Error::Engine("simulation needs a boundary state".into()))?;
    let slice_set = plan.slice_set();
    let tasks = plan.n_subtasks();

    let run_one = |t: usize| -> Result<(ComplexTensor, u64)> {
        let sub = subtask_network(net, &slice_set, t)?;
        let mut counter = MacCounter::default();
        let root = contract_subtask(&sub, plan, schedule, &mut counter)?;
        Ok((root, counter.macs))
    };

    let results: Vec<Result<(ComplexTensor, u64)>> = if workers > 1 && tasks > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Engine(format!("worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..tasks).into_par_iter().map(run_one).collect()
        })
    } else {
        (0..tasks).map(run_one).collect()
    };

    let mut total = None::<ComplexTensor>;
    let mut macs = 0u64;
    for (t, r) in results.into_iter().enumerate() {
        let (root, m) = r.map_err(|e| Error::Engine(format!("subtask {t} failed: {e}")))?;
        macs += m;
        total = Some(match total {
            None => root,
            Some(mut acc) => {
                if acc.labels != root.labels || acc.dims != root.dims {
                    return Err(Error::Engine(format!("subtask {t} produced mismatched shape")));
                }
                for (x, y) in acc.data.iter_mut().zip(&root.data) {
                    *x += *y;
                }
                acc
            }
        });
    }
    let root = total.ok_or_else(|| Error::Engine("no subtasks".into()))?;

    if plan.root_table.qubits.len() != state.n_qubits {
        return Err(Error::Engine(format!(
            "root group covers {} of {} qubits",
            plan.root_table.qubits.len(),
            state.n_qubits
        )));
    }
    let lookup: std::collections::HashMap<u64, usize> =
        plan.root_table.configs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let wanted: Vec<BitString> = match requested {
        Some(bits) => bits.to_vec(),
        None => state.enumerate()?.into_iter().map(|i| BitString::new(state.n_qubits, i)).collect(),
    };
    let entries = wanted
        .into_iter()
        .map(|b| {
            let pos = lookup
                .get(&b.idx)
                .ok_or_else(|| Error::Engine(format!("bitstring {b} absent from the boundary state")))?;
            Ok((b, root.data[*pos]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationOutput {
        amplitudes: AmplitudeSet::new(state.n_qubits, entries)?,
        flops: macs * 8,
        subtasks: tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{
        circuit_to_network, generate_random_circuit, linear_coupler_pattern, parse_circuit,
        Circuit, RandomCircuitOptions,
    };
    use crate::network::{random_test_network, SparseState};
    use crate::oracle;
    use crate::pathopt::{greedy_init, CostModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fp64() -> (StepPrecision, FormatSpec) {
        (StepPrecision::FP64, FormatSpec::FP64)
    }

    /// Independent nested-loop einsum oracle in plain f64.
    fn naive_einsum(a: &ComplexTensor, b: &ComplexTensor, spec: &EinsumSpec) -> ComplexTensor {
        assert!(spec.merge.is_none(), "oracle covers dense specs");
        let out_dims = spec.out_dims.clone();
        let total: usize = out_dims.iter().product::<usize>().max(1);
        let kprod: usize =
            spec.contracted.iter().map(|l| spec.dim_of(*l).unwrap()).product::<usize>().max(1);
        let mut data = vec![Complex64::new(0.0, 0.0); total];
        let index_of = |labels: &[BondId], dims: &[usize], assign: &dyn Fn(BondId) -> usize| {
            let mut off = 0usize;
            for (l, d) in labels.iter().zip(dims) {
                off = off * d + assign(*l);
            }
            off
        };
        for (oi, slot) in data.iter_mut().enumerate() {
            let mut rem = oi;
            let mut out_assign = std::collections::HashMap::new();
            for (l, d) in spec.out.iter().zip(&out_dims).rev() {
                out_assign.insert(*l, rem % d);
                rem /= d;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for ki in 0..kprod {
                let mut rem = ki;
                let mut k_assign = std::collections::HashMap::new();
                for l in spec.contracted.iter().rev() {
                    let d = spec.dim_of(*l).unwrap();
                    k_assign.insert(*l, rem % d);
                    rem /= d;
                }
                let assign =
                    |l: BondId| -> usize { *out_assign.get(&l).or_else(|| k_assign.get(&l)).unwrap() };
                let ai = index_of(&a.labels, &a.dims, &assign);
                let bi = index_of(&b.labels, &b.dims, &assign);
                s += a.data[ai] * b.data[bi];
            }
            *slot = s;
        }
        ComplexTensor::new(spec.out.clone(), out_dims, data).unwrap()
    }

    fn random_spec(seed: u64) -> (ComplexTensor, ComplexTensor, EinsumSpec) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let nb = rng.gen_range(0..2usize);
        let nm = rng.gen_range(0..3usize);
        let nn = rng.gen_range(0..3usize);
        let nk = rng.gen_range(0..3usize);
        let mut next = 0u32;
        let mut mk = |count: usize, rng: &mut ChaCha12Rng| -> Vec<(BondId, usize)> {
            (0..count)
                .map(|_| {
                    let id = BondId(next);
                    next += 1;
                    (id, rng.gen_range(2..4usize))
                })
                .collect()
        };
        let batch = mk(nb, &mut rng);
        let m = mk(nm, &mut rng);
        let n = mk(nn, &mut rng);
        let k = mk(nk, &mut rng);
        let mut lhs: Vec<(BondId, usize)> =
            batch.iter().chain(m.iter()).chain(k.iter()).cloned().collect();
        let mut rhs: Vec<(BondId, usize)> =
            batch.iter().chain(n.iter()).chain(k.iter()).cloned().collect();
        let mut out: Vec<(BondId, usize)> =
            batch.iter().chain(m.iter()).chain(n.iter()).cloned().collect();
        for v in [&mut lhs, &mut rhs, &mut out] {
            for i in (1..v.len()).rev() {
                v.swap(i, rng.gen_range(0..=i));
            }
        }
        let tensor = |labels: &[(BondId, usize)], rng: &mut ChaCha12Rng| {
            let dims: Vec<usize> = labels.iter().map(|(_, d)| *d).collect();
            let count: usize = dims.iter().product::<usize>().max(1);
            ComplexTensor::new(
                labels.iter().map(|(l, _)| *l).collect(),
                dims,
                (0..count)
                    .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
            )
            .unwrap()
        };
        let a = tensor(&lhs, &mut rng);
        let b = tensor(&rhs, &mut rng);
        let spec = EinsumSpec {
            lhs: a.labels.clone(),
            lhs_dims: a.dims.clone(),
            rhs: b.labels.clone(),
            rhs_dims: b.dims.clone(),
            out: out.iter().map(|(l, _)| *l).collect(),
            out_dims: out.iter().map(|(_, d)| *d).collect(),
            contracted: a
                .labels
                .iter()
                .filter(|l| k.iter().any(|(x, _)| x == *l))
                .cloned()
                .collect(),
            batch: batch.iter().map(|(l, _)| *l).collect(),
            merge: None,
        };
        (a, b, spec)
    }

    #[test]
    fn identity_gemm() {
        let a = ComplexTensor::new(
            vec![BondId(0), BondId(1)],
            vec![2, 2],
            vec![
                Complex64::new(1., 0.),
                Complex64::new(0., 0.),
                Complex64::new(0., 0.),
                Complex64::new(1., 0.),
            ],
        )
        .unwrap();
        let b = ComplexTensor::new(
            vec![BondId(1), BondId(2)],
            vec![2, 2],
            vec![
                Complex64::new(0.3, 0.1),
                Complex64::new(-0.2, 0.4),
                Complex64::new(0.9, -0.7),
                Complex64::new(0.5, 0.5),
            ],
        )
        .unwrap();
        let spec = EinsumSpec {
            lhs: vec![BondId(0), BondId(1)],
            lhs_dims: vec![2, 2],
            rhs: vec![BondId(1), BondId(2)],
            rhs_dims: vec![2, 2],
            out: vec![BondId(0), BondId(2)],
            out_dims: vec![2, 2],
            contracted: vec![BondId(1)],
            batch: vec![],
            merge: None,
        };
        let (prec, accum) = fp64();
        let mut counter = MacCounter::default();
        let c = execute_step(&a, &b, &spec, prec, accum, &mut counter).unwrap();
        for (x, y) in c.data.iter().zip(&b.data) {
            assert!((x - y).norm() < 1e-15);
        }
        assert_eq!(counter.macs, 8);
    }

    #[test]
    fn matches_naive_einsum_on_random_specs() {
        let (prec, accum) = fp64();
        for seed in 0..200 {
            let (a, b, spec) = random_spec(seed);
            let mut counter = MacCounter::default();
            let got = execute_step(&a, &b, &spec, prec, accum, &mut counter).unwrap();
            let want = naive_einsum(&a, &b, &spec);
            assert_eq!(got.labels, want.labels);
            for (x, y) in got.data.iter().zip(&want.data) {
                assert!((x - y).norm() < 1e-10, "seed {seed}");
            }
        }
    }

    #[test]
    fn execute_rejects_mismatches() {
        let (prec, accum) = fp64();
        let mut counter = MacCounter::default();
        let (a, b, mut spec) = random_spec(3);
        if !spec.lhs_dims.is_empty() {
            spec.lhs_dims[0] += 1;
            assert!(execute_step(&a, &b, &spec, prec, accum, &mut counter).is_err());
        }
        let (a, b, mut spec) = random_spec(3);
        if !spec.lhs.is_empty() {
            spec.lhs[0] = BondId(999);
            assert!(execute_step(&a, &b, &spec, prec, accum, &mut counter).is_err());
        }
    }

    #[test]
    fn classify_basic_forms() {
        let mk_spec = |lhs: Vec<u32>, rhs: Vec<u32>, out: Vec<u32>, contracted: Vec<u32>| EinsumSpec {
            lhs: lhs.iter().map(|&x| BondId(x)).collect(),
            lhs_dims: vec![2; lhs.len()],
            rhs: rhs.iter().map(|&x| BondId(x)).collect(),
            rhs_dims: vec![2; rhs.len()],
            out: out.iter().map(|&x| BondId(x)).collect(),
            out_dims: vec![2; out.len()],
            contracted: contracted.iter().map(|&x| BondId(x)).collect(),
            batch: vec![],
            merge: None,
        };
        // ak,kb->ab
        let c = classify_gemm(&mk_spec(vec![0, 1], vec![1, 2], vec![0, 2], vec![1]));
        match c {
            GemmClass::Formable(s) => {
                assert_eq!((s.m, s.n, s.k, s.b), (2, 2, 2, 1));
                assert!(!s.lhs_transposed && !s.rhs_transposed);
            }
            other => panic!("{other:?}"),
        }
        // ka,kb->ab: lhs transposed
        let c = classify_gemm(&mk_spec(vec![1, 0], vec![1, 2], vec![0, 2], vec![1]));
        match c {
            GemmClass::Formable(s) => assert!(s.lhs_transposed && !s.rhs_transposed),
            other => panic!("{other:?}"),
        }
        // akb,kc->abc: k interleaved in lhs
        let c = classify_gemm(&mk_spec(vec![0, 1, 2], vec![1, 3], vec![0, 2, 3], vec![1]));
        assert!(!c.is_formable());
    }

    #[test]
    fn classify_shape_flops_match_step_cost() {
        for seed in 0..100 {
            let (_, _, spec) = random_spec(seed);
            if let GemmClass::Formable(s) = classify_gemm(&spec) {
                let tcc_formula = 8 * spec.prod(&spec.lhs) * spec.prod(&spec.rhs)
                    / spec.prod(&spec.contracted)
                    / spec.prod(&spec.batch);
                assert_eq!(s.b * s.m * s.n * s.k.max(1) * 8, tcc_formula, "seed {seed}");
            }
        }
    }

    #[test]
    fn one_qubit_full_state_amplitudes() {
        let circ = parse_circuit("1\n0 sx 0\n").unwrap();
        let state = SparseState::full(1).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let plan = plan_from_tree(&net, &tree).unwrap();
        let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, None).unwrap();
        let amps = &out.amplitudes;
        assert_eq!(amps.m(), 2);
        let get = |idx: u64| amps.entries.iter().find(|(b, _)| b.idx == idx).unwrap().1;
        assert!((get(0) - Complex64::new(0.5, 0.5)).norm() < 1e-12);
        assert!((get(1) - Complex64::new(0.5, -0.5)).norm() < 1e-12);
        assert_eq!(out.flops, plan.total_tcc());
    }

    #[test]
    fn trivial_amplitude_of_empty_circuit() {
        let circ = Circuit::new(3, vec![]).unwrap();
        let state = SparseState::single(3, BitString::parse("000").unwrap()).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let plan = plan_from_tree(&net, &tree).unwrap();
        let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, None).unwrap();
        assert_eq!(out.amplitudes.m(), 1);
        assert!((out.amplitudes.entries[0].1 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn engine_matches_oracle_on_random_circuits() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for case in 0..12u64 {
            let n = rng.gen_range(2..=6usize);
            let cycles = rng.gen_range(1..=8usize);
            let circ = generate_random_circuit(
                n,
                cycles,
                &linear_coupler_pattern(n),
                1000 + case,
                &RandomCircuitOptions::default(),
            )
            .unwrap();
            let m = rng.gen_range(1..=16usize);
            let bits: Vec<BitString> =
                (0..m).map(|_| BitString::new(n, rng.gen_range(0..(1u64 << n)))).collect();
            let state = SparseState::sparse(n, &bits).unwrap();
            let net = circuit_to_network(&circ, &state).unwrap();
            let tree = greedy_init(&net, CostModel::default()).unwrap();
            let plan = plan_from_tree(&net, &tree).unwrap();
            let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, Some(&bits)).unwrap();
            let want = oracle::amplitudes_for(&circ, &bits).unwrap();
            for ((gb, ga), (wb, wa)) in out.amplitudes.entries.iter().zip(&want.entries) {
                assert_eq!(gb, wb);
                assert!((ga - wa).norm() < 1e-10, "case {case}: {gb} {ga} vs {wa}");
            }
            assert_eq!(out.flops, plan.total_tcc(), "case {case}");
        }
    }

    #[test]
    fn engine_full_state_is_normalized() {
        let circ = generate_random_circuit(
            4,
            6,
            &linear_coupler_pattern(4),
            3,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let state = SparseState::full(4).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let plan = plan_from_tree(&net, &tree).unwrap();
        let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, None).unwrap();
        assert!((out.amplitudes.squared_l2() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn subspace_simulation_matches_oracle() {
        let circ = generate_random_circuit(
            5,
            6,
            &linear_coupler_pattern(5),
            9,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let state = SparseState::subspace(5, vec![1, 3], vec![(0, 1), (2, 0), (4, 1)]).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let plan = plan_from_tree(&net, &tree).unwrap();
        let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, None).unwrap();
        let bits: Vec<BitString> =
            state.enumerate().unwrap().into_iter().map(|i| BitString::new(5, i)).collect();
        let want = oracle::amplitudes_for(&circ, &bits).unwrap();
        for ((gb, ga), (wb, wa)) in out.amplitudes.entries.iter().zip(&want.entries) {
            assert_eq!(gb, wb);
            assert!((ga - wa).norm() < 1e-10);
        }
    }

    #[test]
    fn sparse_gemm_equals_gather_reference() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        for _ in 0..200 {
            let da = rng.gen_range(1..5usize);
            let db = rng.gen_range(1..5usize);
            let m = rng.gen_range(1..4usize);
            let n = rng.gen_range(1..4usize);
            let k = rng.gen_range(1..4usize);
            let bsz = rng.gen_range(1..6usize);
            let a: Vec<Complex64> = (0..da * m * k)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let b: Vec<Complex64> = (0..db * k * n)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let lhs_offsets: Vec<usize> = (0..bsz).map(|_| rng.gen_range(0..da) * m * k).collect();
            let rhs_offsets: Vec<usize> = (0..bsz).map(|_| rng.gen_range(0..db) * k * n).collect();
            let shape = GemmShape {
                b: bsz as u64,
                m: m as u64,
                n: n as u64,
                k: k as u64,
                lhs_transposed: false,
                rhs_transposed: false,
                lhs_offsets: Some(lhs_offsets.clone()),
                rhs_offsets: Some(rhs_offsets.clone()),
            };
            // Emulated low precision: rounding sequences must agree
            // exactly, not merely to FP64 accuracy.
            let prec =
                StepPrecision { fmt: FormatSpec::TF32, mode: crate::precision::SplitMode::Triple };
            let mut counter = MacCounter::default();
            let got = sparse_batched_gemm(&a, &b, &shape, prec, FormatSpec::FP32, &mut counter);

            let mut want = vec![Complex64::new(0.0, 0.0); bsz * m * n];
            for c in 0..bsz {
                let ga: Vec<Complex64> = a[lhs_offsets[c]..lhs_offsets[c] + m * k].to_vec();
                let gb: Vec<Complex64> = b[rhs_offsets[c]..rhs_offsets[c] + k * n].to_vec();
                let dense = GemmShape {
                    b: 1,
                    m: m as u64,
                    n: n as u64,
                    k: k as u64,
                    lhs_transposed: false,
                    rhs_transposed: false,
                    lhs_offsets: None,
                    rhs_offsets: None,
                };
                let mut c2 = MacCounter::default();
                let slab = sparse_batched_gemm(&ga, &gb, &dense, prec, FormatSpec::FP32, &mut c2);
                want[c * m * n..(c + 1) * m * n].copy_from_slice(&slab);
            }
            for (x, y) in got.iter().zip(&want) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
            assert_eq!(counter.macs, (bsz * m * n * k) as u64);
        }
    }

    #[test]
    fn reorder_topk_preserves_results_and_forms_gemms() {
        let circ = generate_random_circuit(
            6,
            8,
            &linear_coupler_pattern(6),
            41,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let bits: Vec<BitString> = (0..12).map(|_| BitString::new(6, rng.gen_range(0..64))).collect();
        let state = SparseState::sparse(6, &bits).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let base = plan_from_tree(&net, &tree).unwrap();
        let mut reordered = base.clone();
        let changed = reorder_topk(&mut reordered, 10);
        assert!(changed > 0, "expected at least one reorder on a dense circuit");

        let formable_topk = |plan: &ExecutionPlan| -> usize {
            rank_steps(plan)
                .iter()
                .take(10)
                .filter(|&&i| classify_gemm(&plan.steps[i].spec).is_formable())
                .count()
        };
        assert!(formable_topk(&reordered) > formable_topk(&base));

        let a = run_simulation(&net, &base, &PrecisionSchedule::fp64(), 1, Some(&bits)).unwrap();
        let b = run_simulation(&net, &reordered, &PrecisionSchedule::fp64(), 1, Some(&bits)).unwrap();
        for ((_, x), (_, y)) in a.amplitudes.entries.iter().zip(&b.amplitudes.entries) {
            assert!((x - y).norm() <= 1e-12 * x.norm().max(1e-30));
        }
        assert_eq!(a.flops, b.flops);

        let mut untouched = base.clone();
        assert_eq!(reorder_topk(&mut untouched, 0), 0);
        assert!(untouched.steps.iter().all(|s| !s.modified));
    }

    #[test]
    fn reorder_full_plan_still_matches_oracle() {
        let circ = generate_random_circuit(
            6,
            8,
            &linear_coupler_pattern(6),
            43,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let state = SparseState::full(6).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let mut plan = plan_from_tree(&net, &tree).unwrap();
        let all = plan.steps.len();
        reorder_topk(&mut plan, all);
        let out = run_simulation(&net, &plan, &PrecisionSchedule::fp64(), 1, None).unwrap();
        let want = oracle::statevector(&circ).unwrap();
        for (b, a) in &out.amplitudes.entries {
            assert!((a - want[b.idx as usize]).norm() < 1e-10);
        }
    }

    #[test]
    fn contraction_is_deterministic() {
        let net = random_test_network(8, 4, 21);
        let tree = greedy_init(&net, CostModel::default()).unwrap();
        let plan = plan_from_tree(&net, &tree).unwrap();
        let mut c1 = MacCounter::default();
        let root = contract_subtask(&net, &plan, &PrecisionSchedule::fp64(), &mut c1).unwrap();
        assert_eq!(c1.macs * 8, plan.total_tcc());
        let mut c2 = MacCounter::default();
        let again = contract_subtask(&net, &plan, &PrecisionSchedule::fp64(), &mut c2).unwrap();
        for (x, y) in root.data.iter().zip(&again.data) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
        }
    }

    #[test]
    fn path_independence_across_random_trees() {
        for seed in 0..8 {
            let net = random_test_network(6, 4, 100 + seed);
            let t1 = greedy_init(&net, CostModel::default()).unwrap();
            let p1 = plan_from_tree(&net, &t1).unwrap();
            let t2 = crate::pathopt::sa_optimize(
                &net,
                &crate::pathopt::ScoreParams::default(),
                &crate::pathopt::SaSchedule { sweeps: 15, ..Default::default() },
                seed,
                CostModel::default(),
            )
            .unwrap();
            let p2 = plan_from_tree(&net, &t2).unwrap();
            let mut c = MacCounter::default();
            let r1 = contract_subtask(&net, &p1, &PrecisionSchedule::fp64(), &mut c).unwrap();
            let r2 = contract_subtask(&net, &p2, &PrecisionSchedule::fp64(), &mut c).unwrap();
            assert_eq!(r1.data.len(), r2.data.len());
            for (x, y) in r1.data.iter().zip(&r2.data) {
                assert!((x - y).norm() < 1e-10, "seed {seed}");
            }
        }
    }
}
