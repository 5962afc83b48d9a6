//! Linear cross-entropy benchmarking, precision-error metrics, and
//! Porter-Thomas distribution checks over amplitude sets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::BitString;

/// Bitstring -> amplitude entries. Repeated sample bitstrings are kept
/// with multiplicity; `m` counts samples, not unique strings.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    pub n_qubits: usize,
    pub entries: Vec<(BitString, Complex64)>,
}

impl AmplitudeSet {
    pub fn new(n_qubits: usize, entries: Vec<(BitString, Complex64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Verify("amplitude set must not be empty".into()));
        }
        for (b, _) in &entries {
            if b.n != n_qubits {
                return Err(Error::Verify(format!(
                    "bitstring length {} != n_qubits {n_qubits}",
                    b.n
                )));
            }
        }
        Ok(AmplitudeSet { n_qubits, entries })
    }

    pub fn m(&self) -> usize {
        self.entries.len()
    }

    /// Sum of |amplitude|^2 over all entries (squared L2 norm).
    pub fn squared_l2(&self) -> f64 {
        self.entries.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Text format: `<bitstring> <re> <im>` per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (b, a) in &self.entries {
            s.push_str(&format!("{b} {:.16e} {:.16e}\n", a.re, a.im));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut n = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let mut tok = line.split_whitespace();
            let b = BitString::parse(tok.next().ok_or_else(|| err("missing bitstring".into()))?)
                .map_err(|e| err(e.to_string()))?;
            let re: f64 = tok
                .next()
                .ok_or_else(|| err("missing real part".into()))?
                .parse()
                .map_err(|_| err("bad real part".into()))?;
            let im: f64 = tok
                .next()
                .ok_or_else(|| err("missing imaginary part".into()))?
                .parse()
                .map_err(|_| err("bad imaginary part".into()))?;
            if let Some(nq) = n {
                if b.n != nq {
                    return Err(err(format!("bitstring length {} differs from {nq}", b.n)));
                }
            } else {
                n = Some(b.n);
            }
            entries.push((b, Complex64::new(re, im)));
        }
        let n = n.ok_or(Error::Verify("empty amplitude file".into()))?;
        AmplitudeSet::new(n, entries)
    }
}

/// Linear cross-entropy benchmark: F_l = 2^N * sum p_U(x_i) / m - 1.
pub fn lxeb(amps: &AmplitudeSet) -> f64 {
    let d = 2f64.powi(amps.n_qubits as i32);
    let mean_p: f64 = amps.squared_l2() / amps.m() as f64;
    d * mean_p - 1.0
}

/// Relative error of the squared L2 norm: |L2^2 - L2^2'| / L2^2.
///
/// Both sets must cover the same multiset of bitstrings.
pub fn squared_l2_error(reference: &AmplitudeSet, test: &AmplitudeSet) -> Result<f64> {
    let mut a: Vec<u64> = reference.entries.iter().map(|(b, _)| b.idx).collect();
    let mut b: Vec<u64> = test.entries.iter().map(|(b, _)| b.idx).collect();
    a.sort_unstable();
    b.sort_unstable();
    if reference.n_qubits != test.n_qubits || a != b {
        return Err(Error::Verify("amplitude sets cover different bitstrings".into()));
    }
    let l2_ref = reference.squared_l2();
    let l2_test = test.squared_l2();
    Ok((l2_ref - l2_test).abs() / l2_ref)
}

/// Propagate the L2^2 error to F_l: eps_Fl = eps_L2^2 * (1 + F_l) / F_l.
/// Undefined (None) for F_l <= 0.
pub fn fl_error(eps_l2sq: f64, f_l: f64) -> Option<f64> {
    if f_l <= 0.0 {
        return None;
    }
    Some(eps_l2sq * (1.0 + f_l) / f_l)
}

/// Theoretical density of x = log(D p) under fidelity F_l:
/// P(x|F_l) = (1 + F_l (e^x - 1)) e^{x - e^x}.
pub fn porter_thomas_pdf(x: f64, f_l: f64) -> f64 {
    (1.0 + f_l * (x.exp() - 1.0)) * (x - x.exp()).exp()
}

/// Closed-form CDF of the density above: 1 - e^{-u}(1 + F_l u), u = e^x.
pub fn porter_thomas_cdf(x: f64, f_l: f64) -> f64 {
    let u = x.exp();
    1.0 - (-u).exp() * (1.0 + f_l * u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramBin {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Fraction of included samples in the bin.
    pub mass: f64,
    /// Theory mass in the bin at the measured F_l.
    pub theory: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub f_l: f64,
    pub eps_l2sq: Option<f64>,
    pub eps_fl: Option<f64>,
    /// Entries with zero probability, excluded from the histogram.
    pub excluded_zero_prob: usize,
    pub histogram: Vec<HistogramBin>,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;
pub const DEFAULT_HISTOGRAM_RANGE: (f64, f64) = (-8.0, 4.0);

/// Normalized histogram of x = log(2^N p) with the theory curve at the
/// measured F_l. Out-of-range values clamp into the edge bins so the
/// mass always sums to 1; zero-probability entries are excluded and
/// counted.
pub fn histogram_logdp(amps: &AmplitudeSet, bins: usize, range: (f64, f64)) -> VerificationReport {
    let d = 2f64.powi(amps.n_qubits as i32);
    let f_l = lxeb(amps);
    let (lo, hi) = range;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins.max(1)];
    let mut excluded = 0usize;
    let mut included = 0u64;
    for (_, a) in &amps.entries {
        let p = a.norm_sqr();
        if p <= 0.0 {
            excluded += 1;
            continue;
        }
        let x = (d * p).ln();
        let bin = (((x - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[bin] += 1;
        included += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &cnt)| {
            let x_lo = lo + i as f64 * width;
            let x_hi = x_lo + width;
            HistogramBin {
                x_lo,
                x_hi,
                mass: if included == 0 { 0.0 } else { cnt as f64 / included as f64 },
                theory: porter_thomas_cdf(x_hi, f_l) - porter_thomas_cdf(x_lo, f_l),
            }
        })
        .collect();
    VerificationReport { f_l, eps_l2sq: None, eps_fl: None, excluded_zero_prob: excluded, histogram }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// x = log(2^N p) and the theory CDF at fidelity `f_l`.
pub fn ks_distance_logdp(amps: &AmplitudeSet, f_l: f64) -> f64 {
    let d = 2f64.powi(amps.n_qubits as i32);
    let mut xs: Vec<f64> = amps
        .entries
        .iter()
        .filter_map(|(_, a)| {
            let p = a.norm_sqr();
            (p > 0.0).then(|| (d * p).ln())
        })
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = porter_thomas_cdf(x, f_l);
        let emp_hi = (i + 1) as f64 / n;
        let emp_lo = i as f64 / n;
        worst = worst.max((cdf - emp_hi).abs()).max((cdf - emp_lo).abs());
    }
    worst
}

pub fn report_to_csv(report: &VerificationReport) -> String {
    let mut s = String::from("x_lo,x_hi,mass,theory\n");
    for b in &report.histogram {
        s.push_str(&format!("{},{},{},{}\n", b.x_lo, b.x_hi, b.mass, b.theory));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amp(n: usize, idx: u64, re: f64, im: f64) -> (BitString, Complex64) {
        (BitString::new(n, idx), Complex64::new(re, im))
    }

    #[test]
    fn lxeb_uniform_and_peaked() {
        let s = 0.5f64.sqrt();
        let uniform = AmplitudeSet::new(1, vec![amp(1, 0, s, 0.0), amp(1, 1, s, 0.0)]).unwrap();
        assert!(lxeb(&uniform).abs() < 1e-12);

        let peaked = AmplitudeSet::new(1, vec![amp(1, 0, 1.0, 0.0)]).unwrap();
        assert!((lxeb(&peaked) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lxeb_matches_l2_route_exactly() {
        // F_l computed directly equals L2^2 * 2^N / m - 1.
        let amps = AmplitudeSet::new(
            2,
            vec![amp(2, 0, 0.3, 0.1), amp(2, 3, -0.2, 0.4), amp(2, 3, -0.2, 0.4)],
        )
        .unwrap();
        let direct = lxeb(&amps);
        let via_l2 = amps.squared_l2() * 4.0 / amps.m() as f64 - 1.0;
        assert_eq!(direct, via_l2);
    }

    #[test]
    fn l2_error_and_propagation() {
        let a = AmplitudeSet::new(1, vec![amp(1, 0, 2.0, 0.0)]).unwrap();
        let b = AmplitudeSet::new(1, vec![amp(1, 0, 4.4f64.sqrt(), 0.0)]).unwrap();
        assert!((squared_l2_error(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(squared_l2_error(&a, &a).unwrap(), 0.0);

        let c = AmplitudeSet::new(1, vec![amp(1, 1, 1.0, 0.0)]).unwrap();
        assert!(squared_l2_error(&a, &c).is_err());

        assert!((fl_error(1e-4, 0.01).unwrap() - 1.01e-2).abs() < 1e-15);
        assert_eq!(fl_error(0.0, 0.5), Some(0.0));
        assert_eq!(fl_error(1e-4, 0.0), None);
        // (1+F)/F -> 1 as F grows.
        assert!((fl_error(1e-4, 1e9).unwrap() / 1e-4 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn porter_thomas_point_values() {
        assert!((porter_thomas_pdf(0.0, 0.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((porter_thomas_pdf(0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((porter_thomas_pdf(1.0, 1.0) - (2.0 - std::f64::consts::E).exp()).abs() < 1e-12);
        assert!((porter_thomas_pdf(1.0, 1.0) - 0.4876).abs() < 1e-4);
    }

    #[test]
    fn porter_thomas_normalizes() {
        // Simpson quadrature over a wide window; tails decay at least
        // exponentially on both sides.
        for f_l in [0.0, 0.5, 1.0] {
            let (a, b) = (-30.0f64, 8.0f64);
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = porter_thomas_pdf(a, f_l) + porter_thomas_pdf(b, f_l);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += porter_thomas_pdf(x, f_l) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-8, "F_l={f_l}: {integral}");
            // CDF agrees with the quadrature at the right edge.
            assert!((porter_thomas_cdf(b, f_l) - integral).abs() < 1e-6);
        }
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let s = 0.5f64.sqrt();
        let amps = AmplitudeSet::new(
            1,
            vec![amp(1, 0, s, 0.0), amp(1, 1, s, 0.0), amp(1, 0, 0.0, 0.0)],
        )
        .unwrap();
        let report = histogram_logdp(&amps, 50, DEFAULT_HISTOGRAM_RANGE);
        let total: f64 = report.histogram.iter().map(|b| b.mass).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(report.excluded_zero_prob, 1);

        // A single sample concentrates in one bin.
        let one = AmplitudeSet::new(1, vec![amp(1, 0, 1.0, 0.0)]).unwrap();
        let report = histogram_logdp(&one, 50, DEFAULT_HISTOGRAM_RANGE);
        let nonzero: Vec<&HistogramBin> = report.histogram.iter().filter(|b| b.mass > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_file_roundtrip() {
        let amps = AmplitudeSet::new(
            2,
            vec![amp(2, 0, 0.25, -0.5), amp(2, 3, 1.0 / 3.0, 2e-17)],
        )
        .unwrap();
        let text = amps.to_text();
        let back = AmplitudeSet::from_text(&text).unwrap();
        assert_eq!(amps, back);
    }
}
