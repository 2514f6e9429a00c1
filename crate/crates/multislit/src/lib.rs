//! Constant-coefficient driving functions for multi-slit radial Loewner
//! evolution in the unit disk.
//!
//! Given m disjoint polyline slits, the crate computes the constant weights
//! λ₁,…,λₘ (summing to 1) and the reparametrizations and driving functions
//! that grow exactly those slits under the radial Loewner equation, and
//! verifies the answer by solving the equation forward and comparing the
//! regenerated traces with the input.
//!
//! Module layout:
//! - [`geometry`]: slits, slit systems, validation, prefixes, extension, JSON.
//! - [`zipper`]: the conformal mapping engine and the disk kernel.
//! - `lmr`: the cached logarithmic-mapping-radius oracle and partition sums.
//! - `bangbang`: the alternating-advance construction of λ and the tables.
//! - `loewner`: forward ODE solver and trace regeneration.
//! - `fixtures`: built-in example systems.

pub mod bangbang;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod lmr;
pub mod loewner;
pub mod roots;
pub mod zipper;

pub use error::Error;
