//! Continuous-time flows: interpolation paths, the flow-matching objective,
//! ODE transport in both directions, conditional generation, likelihoods by
//! the instantaneous change of variables, and lifting particle trajectories
//! to a velocity field.

mod field;
mod lift;
mod model;
mod ode;

pub use field::{AffineField, ConstantField, FnField, VelocityField};
pub use lift::{lift_particles, LiftConfig, TrajectoryBundle};
pub use model::{
    fm_loss, train_fm, FlowModel, FmConfig, FmFit, Interpolant, Reference,
    FLOW_CHECKPOINT_HEADER,
};
pub(crate) use model::Regressor;
pub use ode::{
    integrate, integrate_interval, log_likelihood, push, trajectories, Direction, Integrator,
    OdeConfig,
};
