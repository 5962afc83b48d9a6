//! Quantum circuits: parsing, random generation, gate tensors, and the
//! conversion of a circuit into a tensor network.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Bond, BondId, ComplexTensor, SparseState, TensorId, TensorNetwork};

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    SqrtX,
    SqrtY,
    SqrtW,
    Fsim { theta: f64, phi: f64 },
    /// Arbitrary unitary, row-major over (out, in) for one qubit or
    /// (out0 out1, in0 in1) for two.
    Custom { matrix: Vec<Complex64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

const UNITARITY_TOL: f64 = 1e-12;

fn is_unitary(m: &[Complex64], dim: usize) -> bool {
    // max element deviation of U * U^dagger from I
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                s += m[i * dim + k] * m[j * dim + k].conj();
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - Complex64::new(expect, 0.0)).norm());
        }
    }
    worst <= UNITARITY_TOL
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>) -> Result<Self> {
        let arity = match &kind {
            GateKind::SqrtX | GateKind::SqrtY | GateKind::SqrtW => 1,
            GateKind::Fsim { .. } => 2,
            GateKind::Custom { matrix } => match matrix.len() {
                4 => 1,
                16 => 2,
                n => {
                    return Err(Error::InvalidCircuit(format!(
                        "custom matrix must have 4 or 16 entries, got {n}"
                    )))
                }
            },
        };
        if qubits.len() != arity {
            return Err(Error::InvalidCircuit(format!(
                "gate arity {arity} does not match {} qubit(s)",
                qubits.len()
            )));
        }
        if arity == 2 && qubits[0] == qubits[1] {
            return Err(Error::InvalidCircuit(format!("duplicate qubit {} in gate", qubits[0])));
        }
        if let GateKind::Custom { matrix } = &kind {
            let dim = 1 << arity;
            if !is_unitary(matrix, dim) {
                return Err(Error::InvalidCircuit("custom matrix is not unitary".into()));
            }
        }
        Ok(Gate { kind, qubits })
    }

    pub fn arity(&self) -> usize {
        self.qubits.len()
    }

    /// Row-major unitary matrix, 2x2 or 4x4.
    pub fn matrix(&self) -> Vec<Complex64> {
        match &self.kind {
            GateKind::SqrtX => sqrt_of_involutory(&pauli_x()),
            GateKind::SqrtY => sqrt_of_involutory(&pauli_y()),
            GateKind::SqrtW => sqrt_of_involutory(&pauli_w()),
            GateKind::Fsim { theta, phi } => fsim_matrix(*theta, *phi),
            GateKind::Custom { matrix } => matrix.clone(),
        }
    }

    pub fn kind_token(&self) -> &'static str {
        match self.kind {
            GateKind::SqrtX => "sx",
            GateKind::SqrtY => "sy",
            GateKind::SqrtW => "sw",
            GateKind::Fsim { .. } => "fsim",
            GateKind::Custom { .. } => "u",
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli_x() -> Vec<Complex64> {
    vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]
}

fn pauli_y() -> Vec<Complex64> {
    vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]
}

/// W = (X + Y)/sqrt(2).
fn pauli_w() -> Vec<Complex64> {
    let s = 1.0 / 2f64.sqrt();
    vec![c(0., 0.), c(s, -s), c(s, s), c(0., 0.)]
}

/// Principal square root of an involutory 2x2 matrix M (M^2 = I):
/// ((1+i)I + (1-i)M)/2, which squares back to M exactly.
fn sqrt_of_involutory(m: &[Complex64]) -> Vec<Complex64> {
    let a = c(0.5, 0.5);
    let b = c(0.5, -0.5);
    vec![
        a + b * m[0],
        b * m[1],
        b * m[2],
        a + b * m[3],
    ]
}

/// fsim(theta, phi):
/// [[1,0,0,0],
///  [0, cos t, -i sin t, 0],
///  [0, -i sin t, cos t, 0],
///  [0,0,0, e^{-i phi}]]
fn fsim_matrix(theta: f64, phi: f64) -> Vec<Complex64> {
    let ct = c(theta.cos(), 0.0);
    let st = c(0.0, -theta.sin());
    let ph = c(phi.cos(), -phi.sin());
    let z = c(0., 0.);
    let one = c(1., 0.);
    vec![
        one, z, z, z,
        z, ct, st, z,
        z, st, ct, z,
        z, z, z, ph,
    ]
}

/// A circuit: ordered layers of non-overlapping gates.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub layers: Vec<Vec<Gate>>,
}

impl Circuit {
    pub fn new(n_qubits: usize, layers: Vec<Vec<Gate>>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidCircuit("n_qubits must be positive".into()));
        }
        let circuit = Circuit { n_qubits, layers };
        circuit.validate()?;
        Ok(circuit)
    }

    pub fn validate(&self) -> Result<()> {
        for (li, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.n_qubits];
            for gate in layer {
                for &q in &gate.qubits {
                    if q >= self.n_qubits {
                        return Err(Error::InvalidCircuit(format!(
                            "qubit {q} out of range in layer {li}"
                        )));
                    }
                    if used[q] {
                        return Err(Error::InvalidCircuit(format!(
                            "qubit {q} used twice in layer {li}"
                        )));
                    }
                    used[q] = true;
                }
            }
        }
        Ok(())
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Text format
//
// Line 1: n_qubits. Each following line:
//   <layer:int> <gate:sx|sy|sw|fsim|u> <qubit> [<qubit2>] [<params...>]
// fsim takes <theta> <phi>; u takes the row-major matrix as re/im pairs
// (8 numbers for one qubit, 32 for two). `#` starts a comment.
// ---------------------------------------------------------------------------

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut n_qubits: Option<usize> = None;
    // layer key -> (first appearance order, gates)
    let mut layer_order: Vec<i64> = Vec::new();
    let mut layers: std::collections::HashMap<i64, Vec<Gate>> = Default::default();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno + 1, msg };
        if n_qubits.is_none() {
            let n: usize = line.parse().map_err(|_| err(format!("expected qubit count, got `{line}`")))?;
            if n == 0 {
                return Err(err("n_qubits must be positive".into()));
            }
            n_qubits = Some(n);
            continue;
        }
        let mut tok = line.split_whitespace();
        let layer: i64 = tok
            .next()
            .ok_or_else(|| err("missing layer index".into()))?
            .parse()
            .map_err(|_| err("layer index must be an integer".into()))?;
        let kind_tok = tok.next().ok_or_else(|| err("missing gate name".into()))?;
        let arity = match kind_tok {
            "sx" | "sy" | "sw" => 1,
            "fsim" => 2,
            "u" => 0, // decided by qubit tokens below
            other => return Err(err(format!("unknown gate `{other}`"))),
        };
        let rest: Vec<&str> = tok.collect();
        let (qubits, params): (Vec<usize>, Vec<f64>) = if kind_tok == "u" {
            // one qubit + 8 floats, or two qubits + 32 floats
            let (nq, np) = match rest.len() {
                9 => (1, 8),
                34 => (2, 32),
                n => return Err(err(format!("`u` expects 9 or 34 fields after the name, got {n}"))),
            };
            let qubits = rest[..nq]
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| err(format!("bad qubit `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            let params = rest[nq..nq + np]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            (qubits, params)
        } else {
            let want_params = if kind_tok == "fsim" { 2 } else { 0 };
            if rest.len() != arity + want_params {
                return Err(err(format!(
                    "`{kind_tok}` expects {} qubit(s) and {} parameter(s)",
                    arity, want_params
                )));
            }
            let qubits = rest[..arity]
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| err(format!("bad qubit `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            let params = rest[arity..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            (qubits, params)
        };
        let kind = match kind_tok {
            "sx" => GateKind::SqrtX,
            "sy" => GateKind::SqrtY,
            "sw" => GateKind::SqrtW,
            "fsim" => GateKind::Fsim { theta: params[0], phi: params[1] },
            "u" => GateKind::Custom {
                matrix: params.chunks(2).map(|p| c(p[0], p[1])).collect(),
            },
            _ => unreachable!(),
        };
        let gate = Gate::new(kind, qubits).map_err(|e| err(e.to_string()))?;
        if !layers.contains_key(&layer) {
            layer_order.push(layer);
        }
        layers.entry(layer).or_default().push(gate);
    }

    let n_qubits = n_qubits.ok_or(Error::Parse { line: 1, msg: "empty circuit file".into() })?;
    let layers: Vec<Vec<Gate>> = layer_order.into_iter().map(|k| layers.remove(&k).unwrap()).collect();
    Circuit::new(n_qubits, layers)
}

pub fn format_circuit(circuit: &Circuit) -> String {
    let mut out = format!("{}\n", circuit.n_qubits);
    for (li, layer) in circuit.layers.iter().enumerate() {
        for gate in layer {
            out.push_str(&li.to_string());
            out.push(' ');
            out.push_str(gate.kind_token());
            for q in &gate.qubits {
                out.push(' ');
                out.push_str(&q.to_string());
            }
            match &gate.kind {
                GateKind::Fsim { theta, phi } => {
                    out.push_str(&format!(" {theta} {phi}"));
                }
                GateKind::Custom { matrix } => {
                    for z in matrix {
                        out.push_str(&format!(" {} {}", z.re, z.im));
                    }
                }
                _ => {}
            }
            out.push('\n');
        }
    }
    out
}

// JSON mirror: {n_qubits, layers:[[{kind,qubits,params}]]}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    n_qubits: usize,
    layers: Vec<Vec<GateJson>>,
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    kind: String,
    qubits: Vec<usize>,
    #[serde(default)]
    params: Vec<f64>,
}

pub fn circuit_to_json(circuit: &Circuit) -> String {
    let mirror = CircuitJson {
        n_qubits: circuit.n_qubits,
        layers: circuit
            .layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|g| GateJson {
                        kind: g.kind_token().to_string(),
                        qubits: g.qubits.clone(),
                        params: match &g.kind {
                            GateKind::Fsim { theta, phi } => vec![*theta, *phi],
                            GateKind::Custom { matrix } => {
                                matrix.iter().flat_map(|z| [z.re, z.im]).collect()
                            }
                            _ => vec![],
                        },
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&mirror).expect("circuit serialization")
}

pub fn circuit_from_json(text: &str) -> Result<Circuit> {
    let mirror: CircuitJson = serde_json::from_str(text)?;
    let mut layers = Vec::with_capacity(mirror.layers.len());
    for layer in mirror.layers {
        let mut gates = Vec::with_capacity(layer.len());
        for g in layer {
            let kind = match g.kind.as_str() {
                "sx" => GateKind::SqrtX,
                "sy" => GateKind::SqrtY,
                "sw" => GateKind::SqrtW,
                "fsim" => {
                    if g.params.len() != 2 {
                        return Err(Error::InvalidCircuit("fsim needs [theta, phi]".into()));
                    }
                    GateKind::Fsim { theta: g.params[0], phi: g.params[1] }
                }
                "u" => GateKind::Custom {
                    matrix: g.params.chunks(2).map(|p| c(p[0], *p.get(1).unwrap_or(&0.0))).collect(),
                },
                other => return Err(Error::InvalidCircuit(format!("unknown gate kind `{other}`"))),
            };
            gates.push(Gate::new(kind, g.qubits)?);
        }
        layers.push(gates);
    }
    Circuit::new(mirror.n_qubits, layers)
}

// ---------------------------------------------------------------------------
// Random circuit generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RandomCircuitOptions {
    /// Forbid repeating the previous cycle's single-qubit gate on the
    /// same qubit (the convention used by the Sycamore experiments).
    pub forbid_repeat: bool,
    pub fsim_theta: f64,
    pub fsim_phi: f64,
}

impl Default for RandomCircuitOptions {
    fn default() -> Self {
        RandomCircuitOptions {
            forbid_repeat: true,
            fsim_theta: std::f64::consts::FRAC_PI_2,
            fsim_phi: std::f64::consts::FRAC_PI_6,
        }
    }
}

/// Generate `n_cycles` cycles, each one layer of single-qubit gates
/// drawn uniformly from {sqrtX, sqrtY, sqrtW} followed by one layer of
/// fsim gates on `coupler_pattern[i mod len]`. Deterministic per seed.
pub fn generate_random_circuit(
    n_qubits: usize,
    n_cycles: usize,
    coupler_pattern: &[Vec<(usize, usize)>],
    seed: u64,
    opts: &RandomCircuitOptions,
) -> Result<Circuit> {
    if coupler_pattern.is_empty() {
        return Err(Error::InvalidCircuit("empty coupler pattern".into()));
    }
    for (pi, edges) in coupler_pattern.iter().enumerate() {
        let mut used = vec![false; n_qubits];
        for &(a, b) in edges {
            if a >= n_qubits || b >= n_qubits || a == b {
                return Err(Error::InvalidCircuit(format!("bad coupler ({a},{b}) in pattern {pi}")));
            }
            if used[a] || used[b] {
                return Err(Error::InvalidCircuit(format!(
                    "coupler pattern {pi} reuses a qubit at ({a},{b})"
                )));
            }
            used[a] = true;
            used[b] = true;
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    const SINGLES: [GateKind; 3] = [GateKind::SqrtX, GateKind::SqrtY, GateKind::SqrtW];
    let mut prev: Vec<Option<usize>> = vec![None; n_qubits];
    let mut layers = Vec::with_capacity(2 * n_cycles);
    for cycle in 0..n_cycles {
        let mut ones = Vec::with_capacity(n_qubits);
        for q in 0..n_qubits {
            let choice = match (opts.forbid_repeat, prev[q]) {
                (true, Some(p)) => {
                    let pool: Vec<usize> = (0..3).filter(|&i| i != p).collect();
                    pool[rng.gen_range(0..pool.len())]
                }
                _ => rng.gen_range(0..3),
            };
            prev[q] = Some(choice);
            ones.push(Gate::new(SINGLES[choice].clone(), vec![q])?);
        }
        layers.push(ones);
        let edges = &coupler_pattern[cycle % coupler_pattern.len()];
        let twos = edges
            .iter()
            .map(|&(a, b)| {
                Gate::new(GateKind::Fsim { theta: opts.fsim_theta, phi: opts.fsim_phi }, vec![a, b])
            })
            .collect::<Result<Vec<_>>>()?;
        layers.push(twos);
    }
    Circuit::new(n_qubits, layers)
}

/// A simple default coupler pattern for a line of qubits: alternating
/// even and odd nearest-neighbor pairs.
pub fn linear_coupler_pattern(n_qubits: usize) -> Vec<Vec<(usize, usize)>> {
    let even: Vec<(usize, usize)> = (0..n_qubits.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    let odd: Vec<(usize, usize)> = (1..n_qubits.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    if odd.is_empty() {
        vec![even]
    } else {
        vec![even, odd]
    }
}

// ---------------------------------------------------------------------------
// Gate tensors and the circuit -> network mapping
// ---------------------------------------------------------------------------

/// Gate tensor with explicit labels: (out, in) for one qubit, laid out
/// as (out0, out1, in0, in1) for two. Element [o...][i...] is the matrix
/// entry M[o][i].
pub fn gate_tensor_with_labels(gate: &Gate, labels: Vec<BondId>) -> Result<ComplexTensor> {
    let m = gate.matrix();
    let rank = 2 * gate.arity();
    if labels.len() != rank {
        return Err(Error::InvalidCircuit(format!("gate tensor needs {rank} labels")));
    }
    // Row-major (out..., in...) equals the row-major matrix itself.
    ComplexTensor::new(labels, vec![2; rank], m)
}

/// Gate tensor with placeholder labels 0..rank.
pub fn gate_tensor(gate: &Gate) -> Result<ComplexTensor> {
    let rank = 2 * gate.arity();
    gate_tensor_with_labels(gate, (0..rank as u32).map(BondId).collect())
}

/// Convert a circuit plus a final-state boundary condition into a
/// tensor network: one rank-1 |0> tensor per qubit, one tensor per gate,
/// bonds along each qubit worldline, and the final-timestep bonds open
/// and tagged with their qubit.
pub fn circuit_to_network(circuit: &Circuit, state: &SparseState) -> Result<TensorNetwork> {
    if state.n_qubits != circuit.n_qubits {
        return Err(Error::InvalidCircuit(format!(
            "state covers {} qubits but circuit has {}",
            state.n_qubits, circuit.n_qubits
        )));
    }
    circuit.validate()?;
    let n = circuit.n_qubits;
    let mut net = TensorNetwork::default();
    let mut next_bond = 0u32;
    let mut alloc = |net: &mut TensorNetwork, endpoint: TensorId| -> BondId {
        let id = BondId(next_bond);
        next_bond += 1;
        net.add_bond(Bond { id, dim: 2, endpoints: vec![endpoint], open: false, qubit: None, sliced: false });
        id
    };

    // Input |0> vectors.
    let mut frontier: Vec<BondId> = Vec::with_capacity(n);
    for q in 0..n {
        let tid = TensorId(q as u32);
        let b = alloc(&mut net, tid);
        net.insert_tensor(
            tid,
            ComplexTensor::new(vec![b], vec![2], vec![c(1., 0.), c(0., 0.)])?,
        );
        frontier.push(b);
    }

    let mut next_tensor = n as u32;
    for layer in &circuit.layers {
        for gate in layer {
            let tid = TensorId(next_tensor);
            next_tensor += 1;
            let mut labels = Vec::with_capacity(2 * gate.arity());
            let mut outs = Vec::with_capacity(gate.arity());
            for _ in 0..gate.arity() {
                let b = alloc(&mut net, tid);
                outs.push(b);
                labels.push(b);
            }
            for &q in &gate.qubits {
                let inb = frontier[q];
                net.bonds.get_mut(&inb).unwrap().endpoints.push(tid);
                labels.push(inb);
            }
            for (&q, &b) in gate.qubits.iter().zip(&outs) {
                frontier[q] = b;
            }
            net.insert_tensor(tid, gate_tensor_with_labels(gate, labels)?);
        }
    }

    for (q, &b) in frontier.iter().enumerate() {
        let bond = net.bonds.get_mut(&b).unwrap();
        bond.open = true;
        bond.qubit = Some(q);
    }
    net.open_order = frontier;
    net.boundary = Some(state.clone());

    debug_assert!(net.validate().is_empty(), "network invariants: {:?}", net.validate());
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BitString;

    #[test]
    fn sqrt_gates_square_to_their_pauli() {
        let checks = [
            (GateKind::SqrtX, pauli_x()),
            (GateKind::SqrtY, pauli_y()),
            (GateKind::SqrtW, pauli_w()),
        ];
        for (kind, base) in checks {
            let g = Gate::new(kind, vec![0]).unwrap();
            let u = g.matrix();
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = c(0., 0.);
                    for k in 0..2 {
                        s += u[i * 2 + k] * u[k * 2 + j];
                    }
                    assert!((s - base[i * 2 + j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sqrt_x_has_expected_entries() {
        let u = Gate::new(GateKind::SqrtX, vec![0]).unwrap().matrix();
        let want = [c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)];
        for (a, b) in u.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn fsim_special_values() {
        // theta = phi = 0 is the identity.
        let id = fsim_matrix(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * 4 + j] - c(want, 0.)).norm() < 1e-15);
            }
        }
        // theta = pi/2: middle block [[0,-i],[-i,0]], corners 1.
        let m = fsim_matrix(std::f64::consts::FRAC_PI_2, 0.0);
        assert!((m[0] - c(1., 0.)).norm() < 1e-15);
        assert!((m[15] - c(1., 0.)).norm() < 1e-15);
        assert!((m[5]).norm() < 1e-15);
        assert!((m[6] - c(0., -1.)).norm() < 1e-15);
        assert!((m[9] - c(0., -1.)).norm() < 1e-15);
        assert!((m[10]).norm() < 1e-15);
    }

    #[test]
    fn gates_are_unitary_over_parameter_grid() {
        for kind in [GateKind::SqrtX, GateKind::SqrtY, GateKind::SqrtW] {
            let g = Gate::new(kind, vec![0]).unwrap();
            assert!(is_unitary(&g.matrix(), 2));
        }
        for i in 0..10 {
            for j in 0..10 {
                let theta = i as f64 * 0.7 - 3.0;
                let phi = j as f64 * 0.9 - 4.0;
                let g = Gate::new(GateKind::Fsim { theta, phi }, vec![0, 1]).unwrap();
                assert!(is_unitary(&g.matrix(), 4), "theta={theta} phi={phi}");
            }
        }
    }

    #[test]
    fn parse_minimal_files() {
        let circ = parse_circuit("1\n0 sx 0\n").unwrap();
        assert_eq!(circ.n_qubits, 1);
        assert_eq!(circ.layers.len(), 1);
        assert_eq!(circ.layers[0][0].kind, GateKind::SqrtX);

        let circ = parse_circuit("2\n0 fsim 0 1 1.5708 0.5236\n").unwrap();
        match &circ.layers[0][0].kind {
            GateKind::Fsim { theta, phi } => {
                assert!((theta - 1.5708).abs() < 1e-12);
                assert!((phi - 0.5236).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_layer_overlap_and_garbage() {
        let err = parse_circuit("2\n0 sx 0\n0 sy 0\n").unwrap_err();
        assert!(err.to_string().contains("qubit 0 used twice in layer 0"), "{err}");
        let err = parse_circuit("2\n0 zz 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn text_roundtrip_is_stable() {
        let circ = generate_random_circuit(
            4,
            3,
            &linear_coupler_pattern(4),
            42,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let text = format_circuit(&circ);
        let reparsed = parse_circuit(&text).unwrap();
        assert_eq!(circ, reparsed);
        assert_eq!(format_circuit(&reparsed), text);

        let json = circuit_to_json(&circ);
        assert_eq!(circuit_from_json(&json).unwrap(), circ);
    }

    #[test]
    fn custom_gate_text_roundtrip() {
        let h = 1.0 / 2f64.sqrt();
        let gate = Gate::new(
            GateKind::Custom { matrix: vec![c(h, 0.), c(h, 0.), c(h, 0.), c(-h, 0.)] },
            vec![0],
        )
        .unwrap();
        let circ = Circuit::new(1, vec![vec![gate]]).unwrap();
        let text = format_circuit(&circ);
        assert_eq!(parse_circuit(&text).unwrap(), circ);
    }

    #[test]
    fn generator_is_deterministic_and_seed_sensitive() {
        let pattern = vec![vec![(0, 1), (2, 3)], vec![(1, 2)]];
        let a = generate_random_circuit(4, 4, &pattern, 1, &RandomCircuitOptions::default()).unwrap();
        let b = generate_random_circuit(4, 4, &pattern, 1, &RandomCircuitOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_random_circuit(4, 4, &pattern, 2, &RandomCircuitOptions::default()).unwrap();
        assert_ne!(format_circuit(&a), format_circuit(&c));
    }

    #[test]
    fn generator_structure_and_no_repeat() {
        let circ = generate_random_circuit(
            2,
            1,
            &[vec![(0, 1)]],
            7,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        assert_eq!(circ.layers.len(), 2);
        assert_eq!(circ.layers[0].len(), 2);
        assert_eq!(circ.layers[1].len(), 1);
        assert!(matches!(circ.layers[1][0].kind, GateKind::Fsim { .. }));

        let deep = generate_random_circuit(
            3,
            20,
            &[vec![(0, 1)]],
            3,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        for q in 0..3 {
            let singles: Vec<&GateKind> = deep
                .layers
                .iter()
                .step_by(2)
                .map(|l| &l.iter().find(|g| g.qubits == [q]).unwrap().kind)
                .collect();
            for w in singles.windows(2) {
                assert_ne!(w[0], w[1], "repeated single-qubit gate on qubit {q}");
            }
        }

        assert!(generate_random_circuit(2, 1, &[], 7, &RandomCircuitOptions::default()).is_err());
    }

    #[test]
    fn network_structure_matches_circuit() {
        let circ = parse_circuit("1\n0 sx 0\n").unwrap();
        let state = SparseState::single(1, BitString::parse("0").unwrap()).unwrap();
        let net = circuit_to_network(&circ, &state).unwrap();
        assert_eq!(net.tensors.len(), 2);
        let opens: Vec<_> = net.bonds.values().filter(|b| b.open).collect();
        assert_eq!(opens.len(), 1);
        assert_eq!(net.bonds.len(), 2);
        assert!(net.validate().is_empty());

        // Empty circuit over 3 qubits: 3 disconnected rank-1 tensors.
        let circ = Circuit::new(3, vec![]).unwrap();
        let net = circuit_to_network(&circ, &SparseState::full(3).unwrap()).unwrap();
        assert_eq!(net.tensors.len(), 3);
        assert_eq!(net.bonds.values().filter(|b| b.open).count(), 3);

        // Tensor count = n_qubits + gate count.
        let circ = generate_random_circuit(
            4,
            3,
            &linear_coupler_pattern(4),
            11,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let net = circuit_to_network(&circ, &SparseState::full(4).unwrap()).unwrap();
        assert_eq!(net.tensors.len(), 4 + circ.gate_count());

        let bad = SparseState::full(5).unwrap();
        assert!(circuit_to_network(&circ, &bad).is_err());
    }
}
