//! Brute-force state-vector simulator and fidelity-controlled sampler.
//!
//! Ground truth for everything else: applies each gate matrix to the
//! full 2^N vector in layer order at FP64. Qubit 0 is the most
//! significant bit of the state index — the single bit-ordering
//! convention enforced repo-wide.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::network::BitString;
use crate::verify::AmplitudeSet;

pub const MAX_ORACLE_QUBITS: usize = 24;

fn check_size(circuit: &Circuit) -> Result<()> {
    if circuit.n_qubits > MAX_ORACLE_QUBITS {
        return Err(Error::Oracle(format!(
            "state-vector oracle refuses {} qubits (limit {MAX_ORACLE_QUBITS})",
            circuit.n_qubits
        )));
    }
    Ok(())
}

/// Full amplitude vector of the circuit applied to |0...0>.
pub fn statevector(circuit: &Circuit) -> Result<Vec<Complex64>> {
    check_size(circuit)?;
    circuit.validate()?;
    let n = circuit.n_qubits;
    let mut psi = vec![Complex64::new(0.0, 0.0); 1 << n];
    psi[0] = Complex64::new(1.0, 0.0);
    for layer in &circuit.layers {
        for gate in layer {
            let m = gate.matrix();
            match gate.qubits.len() {
                1 => apply_1q(&mut psi, n, gate.qubits[0], &m),
                2 => apply_2q(&mut psi, n, gate.qubits[0], gate.qubits[1], &m),
                _ => unreachable!(),
            }
        }
    }
    Ok(psi)
}

fn apply_1q(psi: &mut [Complex64], n: usize, q: usize, m: &[Complex64]) {
    let p = n - 1 - q;
    let mask = 1usize << p;
    for i in 0..psi.len() {
        if i & mask == 0 {
            let j = i | mask;
            let a = psi[i];
            let b = psi[j];
            psi[i] = m[0] * a + m[1] * b;
            psi[j] = m[2] * a + m[3] * b;
        }
    }
}

fn apply_2q(psi: &mut [Complex64], n: usize, qa: usize, qb: usize, m: &[Complex64]) {
    let pa = n - 1 - qa;
    let pb = n - 1 - qb;
    let (ma, mb) = (1usize << pa, 1usize << pb);
    for i in 0..psi.len() {
        if i & ma == 0 && i & mb == 0 {
            // Basis order within the 4x4: (bit of qa, bit of qb).
            let idx = [i, i | mb, i | ma, i | ma | mb];
            let v = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
            for r in 0..4 {
                let mut s = Complex64::new(0.0, 0.0);
                for cc in 0..4 {
                    s += m[r * 4 + cc] * v[cc];
                }
                psi[idx[r]] = s;
            }
        }
    }
}

/// Exact amplitudes of the given bitstrings, multiplicity preserved.
pub fn amplitudes_for(circuit: &Circuit, bitstrings: &[BitString]) -> Result<AmplitudeSet> {
    let psi = statevector(circuit)?;
    let entries = bitstrings
        .iter()
        .map(|b| {
            if b.n != circuit.n_qubits {
                return Err(Error::Oracle(format!(
                    "bitstring length {} != n_qubits {}",
                    b.n, circuit.n_qubits
                )));
            }
            Ok((*b, psi[b.idx as usize]))
        })
        .collect::<Result<Vec<_>>>()?;
    AmplitudeSet::new(circuit.n_qubits, entries)
}

/// Draw `m` bitstrings: each from |psi|^2 with probability `fidelity`,
/// uniformly otherwise. For deep random circuits the measured LXEB of
/// the sample approaches `fidelity`.
pub fn sample(circuit: &Circuit, m: usize, fidelity: f64, seed: u64) -> Result<Vec<BitString>> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::Oracle(format!("fidelity {fidelity} outside [0, 1]")));
    }
    let psi = statevector(circuit)?;
    let n = circuit.n_qubits;
    let mut cdf = Vec::with_capacity(psi.len());
    let mut acc = 0.0f64;
    for a in &psi {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let from_state = rng.gen::<f64>() < fidelity;
        let idx = if from_state {
            let u = rng.gen::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(psi.len() - 1) as u64
        } else {
            rng.gen_range(0..psi.len() as u64)
        };
        out.push(BitString::new(n, idx));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{
        generate_random_circuit, linear_coupler_pattern, parse_circuit, Circuit, Gate, GateKind,
        RandomCircuitOptions,
    };
    use crate::verify::lxeb;

    #[test]
    fn empty_circuit_is_ground_state() {
        let circ = Circuit::new(2, vec![]).unwrap();
        let psi = statevector(&circ).unwrap();
        assert_eq!(psi[0], Complex64::new(1.0, 0.0));
        assert!(psi[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn sqrt_x_on_ground_state() {
        let circ = parse_circuit("1\n0 sx 0\n").unwrap();
        let psi = statevector(&circ).unwrap();
        assert!((psi[0] - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert!((psi[1] - Complex64::new(0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn fsim_swaps_with_phase() {
        // fsim(pi/2, 0) on |01> gives -i |10>.
        let x_on_1 = Gate::new(
            GateKind::Custom {
                matrix: vec![
                    Complex64::new(0., 0.),
                    Complex64::new(1., 0.),
                    Complex64::new(1., 0.),
                    Complex64::new(0., 0.),
                ],
            },
            vec![1],
        )
        .unwrap();
        let fsim = Gate::new(
            GateKind::Fsim { theta: std::f64::consts::FRAC_PI_2, phi: 0.0 },
            vec![0, 1],
        )
        .unwrap();
        let circ = Circuit::new(2, vec![vec![x_on_1], vec![fsim]]).unwrap();
        let psi = statevector(&circ).unwrap();
        assert!(psi[0b01].norm() < 1e-15);
        assert!((psi[0b10] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn norm_preserved_layer_by_layer() {
        let circ = generate_random_circuit(
            5,
            8,
            &linear_coupler_pattern(5),
            21,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        // Apply layers one at a time through growing prefixes.
        for upto in 0..=circ.layers.len() {
            let prefix = Circuit::new(5, circ.layers[..upto].to_vec()).unwrap();
            let psi = statevector(&prefix).unwrap();
            let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12, "layer {upto}: norm {norm}");
        }
    }

    #[test]
    fn amplitudes_for_indexes_statevector() {
        let circ = generate_random_circuit(
            4,
            4,
            &linear_coupler_pattern(4),
            5,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let psi = statevector(&circ).unwrap();
        let all: Vec<BitString> = (0..16).map(|i| BitString::new(4, i)).collect();
        let amps = amplitudes_for(&circ, &all).unwrap();
        for (b, a) in &amps.entries {
            assert_eq!(*a, psi[b.idx as usize]);
        }
        let zero = amplitudes_for(&Circuit::new(2, vec![]).unwrap(), &[BitString::new(2, 0)]).unwrap();
        assert_eq!(zero.entries[0].1, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn oracle_refuses_large_circuits() {
        let circ = Circuit::new(25, vec![]).unwrap();
        assert!(statevector(&circ).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_unbiased() {
        let circ = generate_random_circuit(
            4,
            8,
            &linear_coupler_pattern(4),
            17,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        let a = sample(&circ, 100, 0.7, 3).unwrap();
        let b = sample(&circ, 100, 0.7, 3).unwrap();
        assert_eq!(a, b);

        // Empirical frequencies at f=1 match |psi|^2 within 4 sigma
        // multinomial bounds.
        let m = 1_000_000usize;
        let samples = sample(&circ, m, 1.0, 11).unwrap();
        let psi = statevector(&circ).unwrap();
        let mut counts = vec![0u64; 16];
        for s in &samples {
            counts[s.idx as usize] += 1;
        }
        for (i, &cnt) in counts.iter().enumerate() {
            let p = psi[i].norm_sqr();
            let sigma = (p * (1.0 - p) * m as f64).sqrt().max(1.0);
            assert!(
                ((cnt as f64) - p * m as f64).abs() <= 4.0 * sigma,
                "index {i}: count {cnt} expected {}",
                p * m as f64
            );
        }
    }

    #[test]
    fn sampler_lxeb_tracks_fidelity() {
        let circ = generate_random_circuit(
            6,
            10,
            &linear_coupler_pattern(6),
            29,
            &RandomCircuitOptions::default(),
        )
        .unwrap();
        // E[F_l] under the mixture is exactly f * (D * sum p^2 - 1); for
        // deep circuits that bracket approaches 1 (Porter-Thomas).
        let psi = statevector(&circ).unwrap();
        let d = psi.len() as f64;
        let collision: f64 = psi.iter().map(|a| a.norm_sqr().powi(2)).sum();
        let ideal = d * collision - 1.0;
        assert!((ideal - 1.0).abs() < 0.3, "circuit not deep enough: {ideal}");
        let m = 20_000usize;
        for f in [0.0, 1.0] {
            let bits = sample(&circ, m, f, 7).unwrap();
            let amps = amplitudes_for(&circ, &bits).unwrap();
            let measured = lxeb(&amps);
            let expected = f * ideal;
            // Empirical standard error of the mean of 2^N p.
            let mean = (expected + 1.0) / d;
            let var: f64 = amps
                .entries
                .iter()
                .map(|(_, a)| (a.norm_sqr() - mean).powi(2))
                .sum::<f64>()
                / (m as f64 - 1.0);
            let se = d * (var / m as f64).sqrt();
            assert!(
                (measured - expected).abs() < 4.0 * se,
                "f={f} measured={measured} expected={expected} se={se}"
            );
        }
    }
}
