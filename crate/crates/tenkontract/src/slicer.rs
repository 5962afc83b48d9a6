//! Dynamic slicing: cut closed bonds until the largest step working set
//! fits a memory budget, fine-tuning the contraction order after each
//! cut. A sliced bond's extent becomes an outer loop over independent
//! subtasks whose results sum to the unsliced contraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BondId, TensorNetwork};
use crate::pathopt::{sa_refine, Annotator, ContractionTree, CostModel, NodeKind, SaSchedule, ScoreParams};

/// Ordered sliced bonds; the most recently sliced varies fastest in the
/// mixed-radix subtask index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSet {
    pub bonds: Vec<BondId>,
    pub dims: Vec<usize>,
}

impl SliceSet {
    pub fn n_subtasks(&self) -> usize {
        subtask_count(&self.dims)
    }
}

pub fn subtask_count(dims: &[usize]) -> usize {
    dims.iter().product::<usize>().max(1)
}

/// The closed bond whose removal maximally reduces T_sc; ties break by
/// the smaller resulting total T_cc, then by bond id.
pub fn select_slice_bond(net: &TensorNetwork, tree: &ContractionTree) -> Result<BondId> {
    let candidates: Vec<BondId> = net
        .bonds
        .values()
        .filter(|b| !b.open && !b.sliced)
        .map(|b| b.id)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Slice("no closed bonds left to slice".into()));
    }
    let mut best: Option<(u64, u64, BondId)> = None;
    for bond in candidates {
        let dim = net.bonds[&bond].dim as u64;
        let mut t_sc = 0u64;
        for node in &tree.nodes {
            let size = if node.closed.binary_search(&bond).is_ok() { node.size / dim } else { node.size };
            t_sc = t_sc.max(size);
        }
        let mut t_cc = 0u64;
        for node in &tree.nodes {
            if let NodeKind::Internal(l, r) = node.kind {
                let affected = tree.nodes[l].closed.binary_search(&bond).is_ok()
                    || tree.nodes[r].closed.binary_search(&bond).is_ok();
                t_cc += if affected { node.t_cc / dim } else { node.t_cc };
            }
        }
        let key = (t_sc, t_cc, bond);
        if best.map(|b| key < b).unwrap_or(true) {
            best = Some(key);
        }
    }
    Ok(best.unwrap().2)
}

/// Mark `bond` sliced and recompute the tree's costs: the bond drops out
/// of every einsum signature, its extent becoming an outer loop.
pub fn apply_slice(
    net: &mut TensorNetwork,
    tree: &mut ContractionTree,
    bond: BondId,
    model: CostModel,
) -> Result<()> {
    let b = net
        .bonds
        .get_mut(&bond)
        .ok_or_else(|| Error::Slice(format!("unknown bond {bond}")))?;
    if b.open {
        return Err(Error::Slice(format!("bond {bond} is open and cannot be sliced")));
    }
    if b.sliced {
        return Err(Error::Slice(format!("bond {bond} is already sliced")));
    }
    b.sliced = true;
    let ann = Annotator::new(net, model);
    tree.annotate(&ann);
    Ok(())
}

/// Iteratively slice, fine-tune, and re-check until the peak step
/// working set fits `mem_budget` bytes. The fine-tune runs a short cold
/// annealing pass over the altered structure.
pub fn dynamic_slice(
    net: &mut TensorNetwork,
    mut tree: ContractionTree,
    mem_budget: u64,
    finetune_sweeps: usize,
    params: &ScoreParams,
    seed: u64,
    model: CostModel,
) -> Result<(ContractionTree, SliceSet)> {
    let mut slices = SliceSet::default();
    let mut round = 0u64;
    loop {
        let peak = tree.peak_bytes(&model);
        if peak <= mem_budget {
            return Ok((tree, slices));
        }
        let bond = match select_slice_bond(net, &tree) {
            Ok(b) => b,
            Err(_) => {
                return Err(Error::BudgetUnreachable { residual: peak, budget: mem_budget });
            }
        };
        let dim = net.bonds[&bond].dim;
        apply_slice(net, &mut tree, bond, model)?;
        slices.bonds.push(bond);
        slices.dims.push(dim);
        if finetune_sweeps > 0 {
            let schedule = SaSchedule {
                t0: 0.02,
                tmin: 0.02,
                decay: 1.0,
                sweeps: finetune_sweeps,
            };
            tree = sa_refine(net, tree, params, &schedule, seed.wrapping_add(round), model)?;
        }
        round += 1;
    }
}

/// Specialize the network to one subtask: every sliced bond is fixed to
/// its digit of `task_index` in the mixed-radix expansion over the slice
/// dims (most recently sliced varies fastest) and removed.
pub fn subtask_network(net: &TensorNetwork, slices: &SliceSet, task_index: usize) -> Result<TensorNetwork> {
    let total = slices.n_subtasks();
    if task_index >= total {
        return Err(Error::Slice(format!("subtask index {task_index} out of range ({total})")));
    }
    let mut digits = vec![0usize; slices.bonds.len()];
    let mut rem = task_index;
    for j in (0..slices.bonds.len()).rev() {
        digits[j] = rem % slices.dims[j];
        rem /= slices.dims[j];
    }
    let mut out = net.clone();
    for (j, &bond) in slices.bonds.iter().enumerate() {
        let endpoints = out
            .bonds
            .get(&bond)
            .ok_or_else(|| Error::Slice(format!("sliced bond {bond} missing")))?
            .endpoints
            .clone();
        for t in endpoints {
            let tensor = out.tensors.get(&t).unwrap();
            let fixed = tensor.select(bond, digits[j])?;
            out.tensors.insert(t, fixed);
        }
        out.bonds.remove(&bond);
    }
    Ok(out)
}
