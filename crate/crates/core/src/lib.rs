//! Multi-attribute network filtering.
//!
//! Each node of a network carries `K` measured attributes. The attributes of
//! all `p` nodes are stacked node by node into one `pK` vector whose joint law
//! is Gaussian with a block-structured precision matrix. This crate provides:
//!
//! * dense symmetric linear algebra and the chi-square distribution ([`linalg`], [`special`]);
//! * ground-truth networks, precision matrices and samplers ([`netmodel`]);
//! * block-sparse precision estimation with EBIC tuning ([`estimate`]);
//! * network filtering and node/group likelihood ratio tests ([`filtertest`]);
//! * sequential detection of several perturbation sites ([`seqtest`]);
//! * diagnostics for a misspecified precision matrix ([`accuracy`]);
//! * the simulation and evaluation protocol ([`evaluate`]).
//!
//! The crate is `no_std` and only needs `alloc`. Node and attribute indices
//! are zero-based throughout the API.

#![no_std]

extern crate alloc;

pub mod accuracy;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod filtertest;
pub mod linalg;
pub mod netmodel;
pub mod rng;
pub mod seqtest;
pub mod special;

pub use error::{Error, Result};
pub use linalg::{Matrix, NodeLayout, SymMatrix};
