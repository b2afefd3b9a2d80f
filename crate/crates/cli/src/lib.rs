//! Configuration, initial states and the experiment runner behind the
//! `chebmps` binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod initial;
pub mod run;
