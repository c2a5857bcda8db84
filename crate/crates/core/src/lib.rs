// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod config;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod par;
pub mod phantom;
pub mod pipeline;
pub mod solvers;
