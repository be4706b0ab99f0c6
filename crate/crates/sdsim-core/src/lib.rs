//! Analytical model of a weight-stationary systolic-array accelerator for
//! Stable-Diffusion U-Nets, plus the planning layers that exploit diffusion
//! structure.
//!
//! The crate is split along the pipeline:
//!
//! - [`workload`] — parametric U-Net graphs (v1.4 / v2.1-base / XL shipped as
//!   data files), MAC/parameter/footprint accounting, and the cumulative
//!   depth-cost curve `f(l)`.
//! - [`uniconv`] — address-centric convolution: 3×3 kernels decomposed into
//!   nine 1×1 slices whose partial sums are scatter-added through a fixed
//!   address offset with edge masking; verified against a direct oracle.
//! - [`nonlinear`] — streaming softmax / layernorm split into numerical
//!   characteristic acquisition (NCA) and normalization stages, plus
//!   sigmoid-GELU; all with naive oracles.
//! - [`phase`] — shift-score traces, transition-point detection, depth
//!   schedules, and constrained sampling-plan search.
//! - [`scheduler`] — per-layer reuse-mode selection and fusion grouping
//!   that minimize modeled off-chip traffic under a buffer budget.
//! - [`simcore`] — cycle/traffic/energy/roofline simulation with ablation
//!   switches for the three hardware optimizations.
//!
//! `no_std` + `alloc`: everything here is pure computation over owned
//! buffers; file IO and CLI live in the companion `sdsim-cli` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod nonlinear;
pub mod phase;
pub mod rng;
pub mod scheduler;
pub mod simcore;
pub mod uniconv;
pub mod workload;
