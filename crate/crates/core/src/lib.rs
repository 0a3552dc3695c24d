//! Loop heat pipe modelling toolkit: saturated ammonia properties, a
//! four-state nonlinear model, operating-point identification of its lumped
//! parameters, explicit time integration and a Lyapunov-based control-heater
//! law.

pub mod error;
pub mod controller;
pub mod fluid_props;
pub mod model;
pub mod ode;
pub mod param_ident;
pub mod scenario;
pub mod solver;

pub use error::{LhpError, ModeBoundary, Result};
