#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

//! Interface-tracking method-of-lines solver for one-dimensional free-boundary
//! convection-diffusion-reaction problems.

pub mod benchmarks;
pub mod interface_law;
pub mod meshing;
pub mod metrics;
pub mod problem;
pub mod semidiscrete;
pub mod solve;
pub mod stiff_ode;
