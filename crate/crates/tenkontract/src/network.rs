//! Tensor network data model, sparse-state boundary conditions, and
//! open-bond merge planning.
//!
//! Open bonds carry the final-state degrees of freedom of individual
//! qubits. Under a sparse-state boundary condition, merging two groups of
//! open bonds keeps only the joint configurations that occur among the
//! sample bitstrings, so the merged bond dimension stays bounded by the
//! sample count instead of growing as a tensor product.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::FormatSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TensorId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BondId(pub u32);

impl fmt::Display for TensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Display for BondId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Dense multi-way array of complex values with labeled indices, stored
/// row-major over the label order.
#[derive(Debug, Clone)]
pub struct ComplexTensor {
    pub labels: Vec<BondId>,
    pub dims: Vec<usize>,
    pub data: Vec<Complex64>,
    /// Format under which the data was last produced.
    pub precision: FormatSpec,
}

impl ComplexTensor {
    pub fn new(labels: Vec<BondId>, dims: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Network(format!(
                "label count {} != dim count {}",
                labels.len(),
                dims.len()
            )));
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(Error::Network(format!(
                "dims product {} != element count {}",
                count,
                data.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Network("duplicate labels within a tensor".into()));
        }
        Ok(ComplexTensor { labels, dims, data, precision: FormatSpec::FP64 })
    }

    pub fn scalar(value: Complex64) -> Self {
        ComplexTensor { labels: vec![], dims: vec![], data: vec![value], precision: FormatSpec::FP64 }
    }

    pub fn size(&self) -> usize {
        self.data.len()
    }

    pub fn dim_of(&self, label: BondId) -> Option<usize> {
        self.labels.iter().position(|&l| l == label).map(|i| self.dims[i])
    }

    fn strides(dims: &[usize]) -> Vec<usize> {
        let mut s = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * dims[i + 1];
        }
        s
    }

    /// Re-layout the data so the labels appear in `order`.
    pub fn permuted(&self, order: &[BondId]) -> Result<Self> {
        if order == self.labels.as_slice() {
            return Ok(self.clone());
        }
        if order.len() != self.labels.len() {
            return Err(Error::Network("permutation must cover all labels".into()));
        }
        let src_strides = Self::strides(&self.dims);
        let mut out_dims = Vec::with_capacity(order.len());
        let mut step = Vec::with_capacity(order.len());
        for &l in order {
            let pos = self
                .labels
                .iter()
                .position(|&x| x == l)
                .ok_or_else(|| Error::Network(format!("unknown label {l} in permutation")))?;
            out_dims.push(self.dims[pos]);
            step.push(src_strides[pos]);
        }
        let total = self.data.len();
        let mut out = Vec::with_capacity(total);
        let rank = out_dims.len();
        if rank == 0 {
            out.push(self.data[0]);
        } else {
            // Odometer over output axes, accumulating the source offset.
            let mut digits = vec![0usize; rank];
            let mut src = 0usize;
            loop {
                out.push(self.data[src]);
                let mut axis = rank;
                loop {
                    if axis == 0 {
                        break;
                    }
                    axis -= 1;
                    digits[axis] += 1;
                    src += step[axis];
                    if digits[axis] < out_dims[axis] {
                        break;
                    }
                    src -= step[axis] * out_dims[axis];
                    digits[axis] = 0;
                    if axis == 0 {
                        digits.clear();
                        break;
                    }
                }
                if digits.is_empty() || out.len() == total {
                    break;
                }
            }
        }
        Ok(ComplexTensor { labels: order.to_vec(), dims: out_dims, data: out, precision: self.precision })
    }

    /// Fix `label` to `value`, dropping that axis.
    pub fn select(&self, label: BondId, value: usize) -> Result<Self> {
        let axis = self
            .labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::Network(format!("label {label} not in tensor")))?;
        if value >= self.dims[axis] {
            return Err(Error::Network(format!("index {value} out of range for {label}")));
        }
        let strides = Self::strides(&self.dims);
        let mut labels = self.labels.clone();
        labels.remove(axis);
        let mut dims = self.dims.clone();
        dims.remove(axis);
        let count: usize = dims.iter().product();
        let mut data = Vec::with_capacity(count);
        let outer: usize = self.dims[..axis].iter().product();
        let inner: usize = strides[axis];
        let block = self.dims[axis] * inner;
        for o in 0..outer {
            let base = o * block + value * inner;
            data.extend_from_slice(&self.data[base..base + inner]);
        }
        Ok(ComplexTensor { labels, dims, data, precision: self.precision })
    }

    /// Element by per-axis indices (test and oracle helper).
    pub fn at(&self, indices: &[usize]) -> Complex64 {
        let strides = Self::strides(&self.dims);
        let off: usize = indices.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[off]
    }
}

/// A shared index between tensors. Closed bonds have exactly two
/// endpoints; open bonds one, tagged with their qubit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bond {
    pub id: BondId,
    pub dim: usize,
    pub endpoints: Vec<TensorId>,
    pub open: bool,
    pub qubit: Option<usize>,
    pub sliced: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TensorNetwork {
    pub tensors: BTreeMap<TensorId, ComplexTensor>,
    pub bonds: BTreeMap<BondId, Bond>,
    /// Open bonds sorted by qubit tag.
    pub open_order: Vec<BondId>,
    /// Sparse-state boundary condition, when the network came from a circuit.
    pub boundary: Option<SparseState>,
}

impl TensorNetwork {
    pub fn next_bond_id(&self) -> u32 {
        self.bonds.keys().map(|b| b.0 + 1).max().unwrap_or(0)
    }

    pub fn insert_tensor(&mut self, id: TensorId, t: ComplexTensor) {
        self.tensors.insert(id, t);
    }

    pub fn add_bond(&mut self, bond: Bond) {
        self.bonds.insert(bond.id, bond);
    }

    /// All invariant violations, as human-readable diagnostics.
    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        for (id, t) in &self.tensors {
            let count: usize = t.dims.iter().product();
            if count != t.data.len() {
                diags.push(format!("{id}: dims product {count} != element count {}", t.data.len()));
            }
            for (&l, &d) in t.labels.iter().zip(&t.dims) {
                match self.bonds.get(&l) {
                    None => diags.push(format!("{id}: refers to missing bond {l}")),
                    Some(b) => {
                        if b.dim != d {
                            diags.push(format!("{id}: bond {l} dim {} != tensor dim {d}", b.dim));
                        }
                        if !b.endpoints.contains(id) {
                            diags.push(format!("{id}: bond {l} does not list it as endpoint"));
                        }
                    }
                }
            }
        }
        for (id, b) in &self.bonds {
            if b.endpoints.len() > 2 {
                diags.push(format!("bond {id}: {} endpoints", b.endpoints.len()));
            }
            if b.open && b.endpoints.len() != 1 {
                diags.push(format!("open bond {id}: expected 1 endpoint, got {}", b.endpoints.len()));
            }
            if !b.open && b.endpoints.len() != 2 {
                diags.push(format!("closed bond {id}: expected 2 endpoints, got {}", b.endpoints.len()));
            }
            for e in &b.endpoints {
                match self.tensors.get(e) {
                    None => diags.push(format!("bond {id}: dangling endpoint {e}")),
                    Some(t) => {
                        if !t.labels.contains(id) {
                            diags.push(format!("bond {id}: endpoint {e} does not carry the label"));
                        }
                    }
                }
            }
        }
        if let Some(state) = &self.boundary {
            let opens = self.bonds.values().filter(|b| b.open).count();
            if opens != state.n_qubits {
                diags.push(format!("open-bond count {opens} != n_qubits {}", state.n_qubits));
            }
        }
        diags
    }

    pub fn debug_dump(&self) -> NetworkDump {
        NetworkDump {
            tensors: self
                .tensors
                .iter()
                .map(|(id, t)| TensorDump { id: *id, labels: t.labels.clone(), dims: t.dims.clone() })
                .collect(),
            bonds: self
                .bonds
                .values()
                .map(|b| BondDump {
                    id: b.id,
                    dim: b.dim,
                    endpoints: b.endpoints.clone(),
                    open: b.open,
                    qubit: b.qubit,
                    sliced: b.sliced,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkDump {
    pub tensors: Vec<TensorDump>,
    pub bonds: Vec<BondDump>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorDump {
    pub id: TensorId,
    pub labels: Vec<BondId>,
    pub dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BondDump {
    pub id: BondId,
    pub dim: usize,
    pub endpoints: Vec<TensorId>,
    pub open: bool,
    pub qubit: Option<usize>,
    pub sliced: bool,
}

/// A length-`n` bitstring. Qubit 0 is the most significant bit of the
/// packed index, so lexicographic string order equals numeric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitString {
    pub n: usize,
    pub idx: u64,
}

impl BitString {
    pub fn new(n: usize, idx: u64) -> Self {
        debug_assert!(n <= 63);
        BitString { n, idx }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.len() > 63 {
            return Err(Error::InvalidState(format!("bad bitstring length {}", s.len())));
        }
        let mut idx = 0u64;
        for c in s.chars() {
            idx <<= 1;
            match c {
                '0' => {}
                '1' => idx |= 1,
                other => return Err(Error::InvalidState(format!("bad bitstring character `{other}`"))),
            }
        }
        Ok(BitString { n: s.len(), idx })
    }

    pub fn bit(&self, qubit: usize) -> u8 {
        ((self.idx >> (self.n - 1 - qubit)) & 1) as u8
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.bit(q))?;
        }
        Ok(())
    }
}

/// Restriction of a bitstring index onto an ordered qubit list. Bit j of
/// the result (counted from the most significant of `qubits.len()` bits)
/// is the value of `qubits[j]`.
pub fn project_bits(idx: u64, n: usize, qubits: &[usize]) -> u64 {
    let k = qubits.len();
    let mut out = 0u64;
    for (j, &q) in qubits.iter().enumerate() {
        let bit = (idx >> (n - 1 - q)) & 1;
        out |= bit << (k - 1 - j);
    }
    out
}

/// Boundary-condition flavor of the final state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateMode {
    /// Exactly one bitstring.
    Single,
    /// The whole Hilbert space, stored implicitly.
    Full,
    /// Open qubits vary, the rest are fixed.
    Subspace { open: Vec<usize>, fixed: Vec<(usize, u8)> },
    /// An explicit sample list.
    Sparse,
}

/// The set of target output bitstrings driving sparse einsum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseState {
    pub n_qubits: usize,
    pub mode: StateMode,
    /// Sorted, deduplicated packed bitstrings. Empty for Full/Subspace,
    /// which enumerate lazily.
    bitstrings: Vec<u64>,
}

impl SparseState {
    pub fn single(n_qubits: usize, bits: BitString) -> Result<Self> {
        if bits.n != n_qubits {
            return Err(Error::InvalidState(format!(
                "bitstring length {} != n_qubits {n_qubits}",
                bits.n
            )));
        }
        Ok(SparseState { n_qubits, mode: StateMode::Single, bitstrings: vec![bits.idx] })
    }

    pub fn full(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 63 {
            return Err(Error::InvalidState(format!("n_qubits {n_qubits} out of range")));
        }
        Ok(SparseState { n_qubits, mode: StateMode::Full, bitstrings: vec![] })
    }

    pub fn sparse(n_qubits: usize, samples: &[BitString]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidState("empty bitstring set for Sparse mode".into()));
        }
        let mut idxs = Vec::with_capacity(samples.len());
        for b in samples {
            if b.n != n_qubits {
                return Err(Error::InvalidState(format!(
                    "bitstring length {} != n_qubits {n_qubits}",
                    b.n
                )));
            }
            idxs.push(b.idx);
        }
        idxs.sort_unstable();
        idxs.dedup();
        Ok(SparseState { n_qubits, mode: StateMode::Sparse, bitstrings: idxs })
    }

    pub fn subspace(n_qubits: usize, open: Vec<usize>, fixed: Vec<(usize, u8)>) -> Result<Self> {
        let mut seen = vec![false; n_qubits];
        for &q in &open {
            if q >= n_qubits || seen[q] {
                return Err(Error::InvalidState(format!("bad open qubit {q}")));
            }
            seen[q] = true;
        }
        for &(q, v) in &fixed {
            if q >= n_qubits || seen[q] || v > 1 {
                return Err(Error::InvalidState(format!("bad fixed qubit {q}={v}")));
            }
            seen[q] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidState("subspace must cover every qubit".into()));
        }
        let mut open = open;
        open.sort_unstable();
        let mut fixed = fixed;
        fixed.sort_unstable();
        Ok(SparseState { n_qubits, mode: StateMode::Subspace { open, fixed }, bitstrings: vec![] })
    }

    /// Number of distinct target bitstrings.
    pub fn count(&self) -> u64 {
        match &self.mode {
            StateMode::Full => 1u64 << self.n_qubits,
            StateMode::Subspace { open, .. } => 1u64 << open.len(),
            _ => self.bitstrings.len() as u64,
        }
    }

    /// Explicit sample list for Single/Sparse modes.
    pub fn samples(&self) -> &[u64] {
        &self.bitstrings
    }

    /// Materialize all target bitstrings in sorted order. Refused for
    /// Full/Subspace states too large to hold.
    pub fn enumerate(&self) -> Result<Vec<u64>> {
        match &self.mode {
            StateMode::Full => {
                if self.n_qubits > 30 {
                    return Err(Error::InvalidState(format!(
                        "refusing to materialize full state over {} qubits",
                        self.n_qubits
                    )));
                }
                Ok((0..(1u64 << self.n_qubits)).collect())
            }
            StateMode::Subspace { open, fixed } => {
                if open.len() > 30 {
                    return Err(Error::InvalidState(format!(
                        "refusing to materialize subspace over {} open qubits",
                        open.len()
                    )));
                }
                let mut base = 0u64;
                for &(q, v) in fixed {
                    base |= (v as u64) << (self.n_qubits - 1 - q);
                }
                let mut out: Vec<u64> = (0..(1u64 << open.len()))
                    .map(|v| {
                        let mut idx = base;
                        for (j, &q) in open.iter().enumerate() {
                            let bit = (v >> (open.len() - 1 - j)) & 1;
                            idx |= bit << (self.n_qubits - 1 - q);
                        }
                        idx
                    })
                    .collect();
                out.sort_unstable();
                Ok(out)
            }
            _ => Ok(self.bitstrings.clone()),
        }
    }

    /// Unique restrictions of the target set onto `qubits` (sorted qubit
    /// list), in first-occurrence order over the sorted bitstring scan.
    /// Full mode yields all combinations in lexicographic order.
    pub fn projections(&self, qubits: &[usize]) -> Vec<u64> {
        debug_assert!(qubits.windows(2).all(|w| w[0] < w[1]));
        match &self.mode {
            StateMode::Full => (0..(1u64 << qubits.len())).collect(),
            StateMode::Subspace { open, fixed } => {
                // First occurrence over the sorted implied set equals
                // lexicographic enumeration of the open members with the
                // fixed bits constant.
                let in_open: Vec<usize> = qubits.iter().cloned().filter(|q| open.contains(q)).collect();
                let fixed_map: HashMap<usize, u8> = fixed.iter().cloned().collect();
                let k = qubits.len();
                let mut out = Vec::with_capacity(1usize << in_open.len());
                for v in 0..(1u64 << in_open.len()) {
                    let mut cfg = 0u64;
                    let mut oi = 0;
                    for (j, &q) in qubits.iter().enumerate() {
                        let bit = if let Some(&fv) = fixed_map.get(&q) {
                            fv as u64
                        } else {
                            let b = (v >> (in_open.len() - 1 - oi)) & 1;
                            oi += 1;
                            b
                        };
                        cfg |= bit << (k - 1 - j);
                    }
                    out.push(cfg);
                }
                out
            }
            _ => {
                let mut seen = HashMap::new();
                let mut out = Vec::new();
                for &b in &self.bitstrings {
                    let p = project_bits(b, self.n_qubits, qubits);
                    if seen.insert(p, ()).is_none() {
                        out.push(p);
                    }
                }
                out
            }
        }
    }

    /// Count of unique restrictions onto `qubits` without materializing
    /// the table.
    pub fn projection_count(&self, qubits: &[usize]) -> u64 {
        match &self.mode {
            StateMode::Single => 1,
            StateMode::Full => 1u64 << qubits.len(),
            StateMode::Subspace { open, .. } => {
                1u64 << qubits.iter().filter(|q| open.contains(q)).count()
            }
            StateMode::Sparse => {
                let mut seen: HashMap<u64, ()> = HashMap::new();
                for &b in &self.bitstrings {
                    seen.insert(project_bits(b, self.n_qubits, qubits), ());
                }
                seen.len() as u64
            }
        }
    }
}

/// An ordered table of configurations over a list of covered qubits.
/// Config j assigns `qubits[i]` the bit at position `qubits.len()-1-i`
/// of `configs[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTable {
    pub qubits: Vec<usize>,
    pub configs: Vec<u64>,
}

impl GroupTable {
    /// The unrestricted table of one raw open bond.
    pub fn single_qubit(q: usize) -> Self {
        GroupTable { qubits: vec![q], configs: vec![0, 1] }
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    /// Row-major product: `self` varies slowest. Qubit lists concatenate
    /// in operand order so flat indices match the physical axis layout.
    pub fn product(&self, other: &GroupTable) -> GroupTable {
        let mut qubits = self.qubits.clone();
        qubits.extend_from_slice(&other.qubits);
        let kb = other.qubits.len();
        let mut configs = Vec::with_capacity(self.configs.len() * other.configs.len());
        for &a in &self.configs {
            for &b in &other.configs {
                configs.push((a << kb) | b);
            }
        }
        GroupTable { qubits, configs }
    }

    fn lookup(&self) -> HashMap<u64, usize> {
        self.configs.iter().enumerate().map(|(i, &c)| (c, i)).collect()
    }

    /// Restrict a config over `from_qubits` onto this table's qubit list.
    fn restrict(cfg: u64, from_qubits: &[usize], to_qubits: &[usize]) -> u64 {
        let k = from_qubits.len();
        let m = to_qubits.len();
        let mut out = 0u64;
        for (j, q) in to_qubits.iter().enumerate() {
            let pos = from_qubits.iter().position(|x| x == q).expect("restriction qubit present");
            let bit = (cfg >> (k - 1 - pos)) & 1;
            out |= bit << (m - 1 - j);
        }
        out
    }
}

/// The result of planning a sparse merge of two open-bond groups: the
/// joint configurations retained and, per configuration, which slab of
/// each operand's group table contributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    pub group_a: GroupTable,
    pub group_b: GroupTable,
    /// Per joint configuration: (index into group_a.configs, index into
    /// group_b.configs).
    pub pairs: Vec<(u32, u32)>,
    /// The merged group covering the sorted union of qubits.
    pub merged: GroupTable,
}

impl MergePlan {
    pub fn merged_dim(&self) -> usize {
        self.merged.configs.len()
    }
}

/// Plan the merge of two disjoint open-bond groups under a sparse state.
///
/// Joint configurations are the unique restrictions of the target set
/// onto the union of covered qubits, in first-occurrence order over the
/// sorted bitstring scan. Full mode degenerates to the complete tensor
/// product with group A varying slowest.
pub fn merge_open_groups(
    state: &SparseState,
    table_a: &GroupTable,
    table_b: &GroupTable,
) -> Result<MergePlan> {
    for q in &table_a.qubits {
        if table_b.qubits.contains(q) {
            return Err(Error::InvalidState(format!("overlapping qubit groups at qubit {q}")));
        }
    }
    let mut union: Vec<usize> = table_a.qubits.iter().chain(&table_b.qubits).cloned().collect();
    union.sort_unstable();

    if state.mode == StateMode::Full {
        let mut pairs = Vec::with_capacity(table_a.dim() * table_b.dim());
        let mut configs = Vec::with_capacity(table_a.dim() * table_b.dim());
        let ka = table_a.qubits.len();
        let kb = table_b.qubits.len();
        let concat: Vec<usize> = table_a.qubits.iter().chain(&table_b.qubits).cloned().collect();
        for (ia, &ca) in table_a.configs.iter().enumerate() {
            for (ib, &cb) in table_b.configs.iter().enumerate() {
                pairs.push((ia as u32, ib as u32));
                let joint = (ca << kb) | cb;
                let _ = ka;
                configs.push(GroupTable::restrict(joint, &concat, &union));
            }
        }
        return Ok(MergePlan {
            group_a: table_a.clone(),
            group_b: table_b.clone(),
            pairs,
            merged: GroupTable { qubits: union, configs },
        });
    }

    let lookup_a = table_a.lookup();
    let lookup_b = table_b.lookup();
    let joint = state.projections(&union);
    let mut pairs = Vec::with_capacity(joint.len());
    for &cfg in &joint {
        let ra = GroupTable::restrict(cfg, &union, &table_a.qubits);
        let rb = GroupTable::restrict(cfg, &union, &table_b.qubits);
        let ia = *lookup_a.get(&ra).ok_or_else(|| {
            Error::InvalidState(format!("group A table missing configuration {ra:b}"))
        })?;
        let ib = *lookup_b.get(&rb).ok_or_else(|| {
            Error::InvalidState(format!("group B table missing configuration {rb:b}"))
        })?;
        pairs.push((ia as u32, ib as u32));
    }
    Ok(MergePlan {
        group_a: table_a.clone(),
        group_b: table_b.clone(),
        pairs,
        merged: GroupTable { qubits: union, configs: joint },
    })
}

/// Restrict a single group's table to the target set's local
/// configurations (a one-sided merge). Used when a tensor's raw open
/// bonds first join the contraction.
pub fn restrict_group(state: &SparseState, table: &GroupTable) -> Result<MergePlan> {
    let empty = GroupTable { qubits: vec![], configs: vec![0] };
    let mut plan = merge_open_groups(state, table, &empty)?;
    plan.group_b = empty;
    Ok(plan)
}

/// Random closed network for tests and synthetic benchmarks: a spanning
/// tree over `n_tensors` plus a few extra edges, bond dimensions in
/// 2..=4, tensor entries uniform complex in the unit square. Tensor rank
/// is capped at `max_rank`. Deterministic per seed.
pub fn random_test_network(n_tensors: usize, max_rank: usize, seed: u64) -> TensorNetwork {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x746e_6574);
    let mut net = TensorNetwork::default();
    let mut labels: Vec<Vec<(BondId, usize)>> = vec![Vec::new(); n_tensors];
    let mut next_bond = 0u32;
    let mut connect = |net: &mut TensorNetwork,
                       labels: &mut Vec<Vec<(BondId, usize)>>,
                       a: usize,
                       b: usize,
                       dim: usize| {
        let id = BondId(next_bond);
        next_bond += 1;
        net.add_bond(Bond {
            id,
            dim,
            endpoints: vec![TensorId(a as u32), TensorId(b as u32)],
            open: false,
            qubit: None,
            sliced: false,
        });
        labels[a].push((id, dim));
        labels[b].push((id, dim));
    };
    for t in 1..n_tensors {
        let other = rng.gen_range(0..t);
        let dim = rng.gen_range(2..=4usize);
        connect(&mut net, &mut labels, t, other, dim);
    }
    let extra = if n_tensors > 2 { rng.gen_range(0..n_tensors) } else { 0 };
    for _ in 0..extra {
        let a = rng.gen_range(0..n_tensors);
        let b = rng.gen_range(0..n_tensors);
        if a == b || labels[a].len() >= max_rank || labels[b].len() >= max_rank {
            continue;
        }
        let dim = rng.gen_range(2..=4usize);
        connect(&mut net, &mut labels, a, b, dim);
    }
    for (t, lab) in labels.iter().enumerate() {
        let dims: Vec<usize> = lab.iter().map(|(_, d)| *d).collect();
        let count: usize = dims.iter().product();
        let data: Vec<Complex64> = (0..count)
            .map(|_| Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let ids: Vec<BondId> = lab.iter().map(|(b, _)| *b).collect();
        net.insert_tensor(
            TensorId(t as u32),
            ComplexTensor::new(ids, dims, data).expect("random network tensor"),
        );
    }
    net
}

/// Read a bitstring file: one 0/1 string per line, `#` comments and
/// blank lines ignored.
pub fn parse_bitstring_file(text: &str) -> Result<Vec<BitString>> {
    let mut out = Vec::new();
    let mut len: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let b = BitString::parse(line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if let Some(l) = len {
            if b.n != l {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("bitstring length {} differs from {}", b.n, l),
                });
            }
        } else {
            len = Some(b.n);
        }
        out.push(b);
    }
    if out.is_empty() {
        return Err(Error::InvalidState("bitstring file contains no samples".into()));
    }
    Ok(out)
}

pub fn format_bitstring_file(bits: &[BitString]) -> String {
    let mut s = String::new();
    for b in bits {
        s.push_str(&b.to_string());
        s.push('\n');
    }
    s
}
