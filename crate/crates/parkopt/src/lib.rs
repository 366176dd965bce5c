//! Online two-timescale dual scheduling for multi-energy industrial parks.

// Index loops mirror the notation of the models; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod incentive;
pub mod oracle;
pub mod park_model;
pub mod scheduler;
pub mod sim;

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod chapter1 {}
#[doc = include_str!("../../../book/src/park-model.md")]
pub mod chapter2 {}
#[doc = include_str!("../../../book/src/incentive.md")]
pub mod chapter3 {}
#[doc = include_str!("../../../book/src/scheduler.md")]
pub mod chapter4 {}
#[doc = include_str!("../../../book/src/oracles.md")]
pub mod chapter5 {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod chapter6 {}
