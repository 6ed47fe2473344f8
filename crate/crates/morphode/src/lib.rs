//! morphode: learning ordinary differential equations by morphing a simple
//! base system through an invertible network.
//!
//! The target ODE is represented as the pushforward of a *base* vector field
//! (a linear system with a closed-form solution, or a small Euler-stepped
//! neural field) through a diffeomorphism modelled by coupling blocks.
//! Trained systems integrate in one shot: invert the initial condition, roll
//! the base system to every requested time, and push the whole trajectory
//! back through the network in a single batched pass.
//!
//! See the `examples/` directory for runnable entry points into each
//! capability, and the `morphode` binary for reproducible end-to-end runs.

pub mod autodiff;
pub mod base_ode;
pub mod ctx;
pub mod error;
pub mod eval;
pub mod inn;
pub mod integrators;
pub mod model;
pub mod nn;
pub mod systems;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
