//! Tail asymptotics for sums of conditionally independent heavy-tailed
//! variables: distributions, boundary classes, dependence-condition checks,
//! quadrature oracles and rare-event Monte Carlo.

// `!(x > 0.0)` rejects NaN along with the rest
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod conditions;
pub mod dist;
pub mod error;
pub mod expint;
pub mod integrate;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod verdict;

pub use error::{Error, Result};
