//! Software emulation of reduced and extended floating-point precision.
//!
//! All arithmetic is carried in FP64 and rounded at the contract points:
//! operand quantization, per-product rounding, and per-add rounding into
//! the accumulation format. This reproduces rounding behavior, not speed.
//!
//! The 3x-split scheme represents each operand as a (big, small) pair in
//! the reduced format and accumulates three cross products — big*small,
//! small*big, big*big — into one chained accumulator; the small*small
//! term is dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An emulated binary floating-point format: sign + exponent + mantissa.
///
/// `mantissa_bits` counts explicit fraction bits (the leading 1 is
/// implicit for normal values). Gradual underflow is emulated: values
/// below the minimum normal round on the fixed subnormal grid and flush
/// to zero only below half the minimum subnormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub exp_bits: u32,
    pub mantissa_bits: u32,
}

impl FormatSpec {
    pub const FP64: FormatSpec = FormatSpec { exp_bits: 11, mantissa_bits: 52 };
    pub const FP32: FormatSpec = FormatSpec { exp_bits: 8, mantissa_bits: 23 };
    pub const TF32: FormatSpec = FormatSpec { exp_bits: 8, mantissa_bits: 10 };
    pub const FP16: FormatSpec = FormatSpec { exp_bits: 5, mantissa_bits: 10 };
    pub const BF16: FormatSpec = FormatSpec { exp_bits: 8, mantissa_bits: 7 };

    /// Largest representable exponent (biased-symmetric convention).
    pub fn emax(&self) -> i32 {
        (1i32 << (self.exp_bits - 1)) - 1
    }

    /// Exponent of the smallest normal value.
    pub fn emin(&self) -> i32 {
        1 - self.emax()
    }

    pub fn max_finite(&self) -> f64 {
        (2.0 - exp2i(-(self.mantissa_bits as i32))) * exp2i(self.emax())
    }

    pub fn min_normal(&self) -> f64 {
        exp2i(self.emin())
    }

    pub fn is_fp64(&self) -> bool {
        *self == Self::FP64
    }

    pub fn name(&self) -> &'static str {
        match *self {
            Self::FP64 => "fp64",
            Self::FP32 => "fp32",
            Self::TF32 => "tf32",
            Self::FP16 => "fp16",
            Self::BF16 => "bf16",
            _ => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "fp64" => Ok(Self::FP64),
            "fp32" => Ok(Self::FP32),
            "tf32" => Ok(Self::TF32),
            "fp16" => Ok(Self::FP16),
            "bf16" => Ok(Self::BF16),
            other => Err(Error::Config(format!("unknown precision format `{other}`"))),
        }
    }
}

/// How many reduced-format multiplies emulate one multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Direct lossy conversion, one multiply per element pair.
    Single,
    /// Big/small split with three cross-product passes.
    Triple,
}

impl SplitMode {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            1 => Ok(SplitMode::Single),
            3 => Ok(SplitMode::Triple),
            other => Err(Error::Config(format!("split count must be 1 or 3, got {other}"))),
        }
    }

    pub fn count(&self) -> u32 {
        match self {
            SplitMode::Single => 1,
            SplitMode::Triple => 3,
        }
    }
}

/// Exact power of two as f64; `k` must lie in the normal f64 range.
fn exp2i(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Round `x` to the grid of `fmt` with round-to-nearest-even.
///
/// Overflow saturates to signed infinity; values below half the minimum
/// subnormal round to signed zero. NaN and infinity pass through.
pub fn quantize(x: f64, fmt: FormatSpec) -> f64 {
    if fmt.is_fp64() {
        return x;
    }
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    if raw_exp == 0 {
        // f64 subnormal input: far below any emulated format's grid.
        return if x.is_sign_negative() { -0.0 } else { 0.0 };
    }
    let e = raw_exp - 1023;
    let ulp_exp = e.max(fmt.emin()) - fmt.mantissa_bits as i32;
    // x * 2^-ulp_exp is exact: x is a normal f64 and the relevant
    // magnitudes stay inside the normal f64 range (overflow to inf is
    // caught by the max_finite check below).
    let scaled = x * exp2i((-ulp_exp).clamp(-1022, 1023));
    let q = if scaled.is_infinite() {
        scaled
    } else {
        scaled.round_ties_even() * exp2i(ulp_exp.clamp(-1022, 1023))
    };
    if q.abs() > fmt.max_finite() {
        return f64::INFINITY.copysign(x);
    }
    if q == 0.0 {
        return if x.is_sign_negative() { -0.0 } else { 0.0 };
    }
    q
}

/// Quantize real and imaginary parts independently.
pub fn quantize_complex(z: Complex64, fmt: FormatSpec) -> Complex64 {
    Complex64::new(quantize(z.re, fmt), quantize(z.im, fmt))
}

/// Split into (big, small): big is the lossy conversion, small the
/// quantized residual of the conversion.
pub fn split(x: f64, fmt: FormatSpec) -> (f64, f64) {
    let big = quantize(x, fmt);
    let small = if big.is_finite() { quantize(x - big, fmt) } else { 0.0 };
    (big, small)
}

pub fn split_complex(z: Complex64, fmt: FormatSpec) -> (Complex64, Complex64) {
    let (rb, rs) = split(z.re, fmt);
    let (ib, is) = split(z.im, fmt);
    (Complex64::new(rb, ib), Complex64::new(rs, is))
}

/// Per-step precision setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPrecision {
    pub fmt: FormatSpec,
    pub mode: SplitMode,
}

impl StepPrecision {
    pub const FP64: StepPrecision = StepPrecision { fmt: FormatSpec::FP64, mode: SplitMode::Single };
}

/// Assignment of a precision setting to every contraction step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionSchedule {
    pub default: StepPrecision,
    pub accum: FormatSpec,
    /// Step index (execution order) -> override.
    pub overrides: Vec<(usize, StepPrecision)>,
    /// Fraction of total T_cc covered by the overrides.
    pub replaced_tcc_ratio: f64,
}

impl PrecisionSchedule {
    pub fn uniform(fmt: FormatSpec, mode: SplitMode, accum: FormatSpec) -> Self {
        PrecisionSchedule {
            default: StepPrecision { fmt, mode },
            accum,
            overrides: Vec::new(),
            replaced_tcc_ratio: 0.0,
        }
    }

    pub fn fp64() -> Self {
        Self::uniform(FormatSpec::FP64, SplitMode::Single, FormatSpec::FP64)
    }

    pub fn resolve(&self, step: usize) -> StepPrecision {
        self.overrides
            .iter()
            .find(|(s, _)| *s == step)
            .map(|(_, p)| *p)
            .unwrap_or(self.default)
    }

    /// Override the k highest-cost steps with `low`, leaving the rest at
    /// `high`. `step_tccs[i]` is the cost of execution step i. Ties break
    /// by lower step index. The replaced T_cc fraction is recorded.
    pub fn from_topk(
        step_tccs: &[u64],
        k: usize,
        low: StepPrecision,
        high: StepPrecision,
        accum: FormatSpec,
    ) -> Self {
        let mut order: Vec<usize> = (0..step_tccs.len()).collect();
        order.sort_by(|&a, &b| step_tccs[b].cmp(&step_tccs[a]).then(a.cmp(&b)));
        let k = k.min(step_tccs.len());
        let total: u128 = step_tccs.iter().map(|&c| c as u128).sum();
        let replaced: u128 = order[..k].iter().map(|&i| step_tccs[i] as u128).sum();
        let mut overrides: Vec<(usize, StepPrecision)> =
            order[..k].iter().map(|&i| (i, low)).collect();
        overrides.sort_by_key(|(i, _)| *i);
        PrecisionSchedule {
            default: high,
            accum,
            overrides,
            replaced_tcc_ratio: if total == 0 { 0.0 } else { replaced as f64 / total as f64 },
        }
    }
}

/// Counts multiply-accumulate operations actually executed. One complex
/// MAC is 8 flops (ops_per_element for complex data).
#[derive(Debug, Default)]
pub struct MacCounter {
    pub macs: u64,
}

impl MacCounter {
    pub fn flops(&self, ops_per_element: u64) -> u64 {
        self.macs * ops_per_element
    }
}

#[inline]
fn round_to(x: f64, fmt: FormatSpec) -> f64 {
    quantize(x, fmt)
}

/// Real dot product under the emulated precision contract.
///
/// Strided access: element i of a is `a[a0 + i*astride]`.
pub fn mac_dot_real_strided(
    a: &[f64],
    a0: usize,
    astride: usize,
    b: &[f64],
    b0: usize,
    bstride: usize,
    len: usize,
    fmt: FormatSpec,
    mode: SplitMode,
    accum: FormatSpec,
) -> f64 {
    let mut acc = 0.0f64;
    match mode {
        SplitMode::Single => {
            for i in 0..len {
                let x = quantize(a[a0 + i * astride], fmt);
                let y = quantize(b[b0 + i * bstride], fmt);
                let p = round_to(x * y, accum);
                acc = round_to(acc + p, accum);
            }
        }
        SplitMode::Triple => {
            // Pass order: big*small, small*big, big*big; small*small dropped.
            for pass in 0..3 {
                for i in 0..len {
                    let (xb, xs) = split(a[a0 + i * astride], fmt);
                    let (yb, ys) = split(b[b0 + i * bstride], fmt);
                    let p = match pass {
                        0 => xb * ys,
                        1 => xs * yb,
                        _ => xb * yb,
                    };
                    let p = round_to(p, accum);
                    acc = round_to(acc + p, accum);
                }
            }
        }
    }
    acc
}

pub fn mac_dot_real(a: &[f64], b: &[f64], fmt: FormatSpec, mode: SplitMode, accum: FormatSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Engine(format!("dot length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(mac_dot_real_strided(a, 0, 1, b, 0, 1, a.len(), fmt, mode, accum))
}

#[inline]
fn complex_mac_chain_single(
    a: &[Complex64],
    a0: usize,
    astride: usize,
    b: &[Complex64],
    b0: usize,
    bstride: usize,
    len: usize,
    fmt: FormatSpec,
    accum: FormatSpec,
) -> Complex64 {
    let mut re = 0.0f64;
    let mut im = 0.0f64;
    for i in 0..len {
        let x = quantize_complex(a[a0 + i * astride], fmt);
        let y = quantize_complex(b[b0 + i * bstride], fmt);
        // 4 real MACs per element pair, each product and add rounded.
        re = round_to(re + round_to(x.re * y.re, accum), accum);
        re = round_to(re - round_to(x.im * y.im, accum), accum);
        im = round_to(im + round_to(x.re * y.im, accum), accum);
        im = round_to(im + round_to(x.im * y.re, accum), accum);
    }
    Complex64::new(re, im)
}

#[inline]
fn complex_mac_chain_triple(
    a: &[Complex64],
    a0: usize,
    astride: usize,
    b: &[Complex64],
    b0: usize,
    bstride: usize,
    len: usize,
    fmt: FormatSpec,
    accum: FormatSpec,
) -> Complex64 {
    let mut re = 0.0f64;
    let mut im = 0.0f64;
    for pass in 0..3 {
        for i in 0..len {
            let (xb, xs) = split_complex(a[a0 + i * astride], fmt);
            let (yb, ys) = split_complex(b[b0 + i * bstride], fmt);
            let (x, y) = match pass {
                0 => (xb, ys),
                1 => (xs, yb),
                _ => (xb, yb),
            };
            re = round_to(re + round_to(x.re * y.re, accum), accum);
            re = round_to(re - round_to(x.im * y.im, accum), accum);
            im = round_to(im + round_to(x.re * y.im, accum), accum);
            im = round_to(im + round_to(x.im * y.re, accum), accum);
        }
    }
    Complex64::new(re, im)
}

/// Complex dot product under the emulated precision contract. Counts
/// `len` MACs into the counter (one complex MAC = 8 flops).
#[allow(clippy::too_many_arguments)]
pub fn mac_dot_complex_strided(
    a: &[Complex64],
    a0: usize,
    astride: usize,
    b: &[Complex64],
    b0: usize,
    bstride: usize,
    len: usize,
    prec: StepPrecision,
    accum: FormatSpec,
    counter: &mut MacCounter,
) -> Complex64 {
    counter.macs += len as u64;
    // Exact fast path: every rounding contract point is the identity.
    if prec.fmt.is_fp64() && accum.is_fp64() {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..len {
            s += a[a0 + i * astride] * b[b0 + i * bstride];
        }
        return s;
    }
    match prec.mode {
        SplitMode::Single => complex_mac_chain_single(a, a0, astride, b, b0, bstride, len, prec.fmt, accum),
        SplitMode::Triple => complex_mac_chain_triple(a, a0, astride, b, b0, bstride, len, prec.fmt, accum),
    }
}

pub fn mac_dot_complex(
    a: &[Complex64],
    b: &[Complex64],
    prec: StepPrecision,
    accum: FormatSpec,
) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::Engine(format!("dot length mismatch: {} vs {}", a.len(), b.len())));
    }
    let mut counter = MacCounter::default();
    Ok(mac_dot_complex_strided(a, 0, 1, b, 0, 1, a.len(), prec, accum, &mut counter))
}
