//! Sparse-state tensor network simulation of random quantum circuits.
//!
//! The crate covers the full desk-scale pipeline for verifying random
//! circuit sampling experiments by tensor network contraction:
//!
//! 1. [`circuit`] — circuit generation, parsing, and gate tensors.
//! 2. [`network`] — the tensor network data model, sparse-state boundary
//!    conditions, and open-bond merge planning.
//! 3. [`pathopt`] — contraction order search: greedy seeding plus
//!    simulated annealing over contraction trees.
//! 4. [`slicer`] — dynamic slicing of bonds until the contraction fits a
//!    memory budget.
//! 5. [`engine`] — execution: TTGT einsum, GEMM classification, top-k
//!    index reordering, and sparse einsum as indexed batched GEMM.
//! 6. [`precision`] — software emulation of reduced floating formats
//!    (TF32/FP16/BF16), the 3x-split extended precision scheme, and
//!    per-step mixed precision schedules.
//! 7. [`verify`] — linear cross-entropy benchmarking and error metrics.
//! 8. [`oracle`] — brute-force state-vector simulator used as ground
//!    truth in tests and for sampling with controlled fidelity.
//!
//! Everything is deterministic for a fixed seed: path search, circuit
//! generation, sampling, and the subtask reduction order.

pub mod circuit;
pub mod cli;
pub mod engine;
pub mod error;
pub mod network;
pub mod oracle;
pub mod pathopt;
pub mod precision;
pub mod slicer;
pub mod verify;

pub use error::{Error, Result};
