//! Construction, transformation and evaluation of probability distributions
//! on particle clouds.
//!
//! | module | contents |
//! |--------|----------|
//! | [`ndmath`] | matrices, seeded RNG, Gaussians, CSV |
//! | [`net`] | tanh MLP with exact backprop and Adam |
//! | [`transport`] | W2 in 1-d, by assignment, Sinkhorn, Bures; Gaussian OT maps |
//! | [`flowmatch`] | flow matching, ODE transport, likelihoods, particle lift |
//! | [`diffusion`] | VP chain, scores, denoising score matching, SDE/ODE samplers |
//! | [`wgf`] | JKO steps on diagonal Gaussians |
//! | [`dro`] | Wasserstein-penalized worst-case generation by descent–ascent |
//! | [`posterior`] | latent Langevin sampling through invertible generators |
//! | [`metrics`] | MMD, KS, correlation comparison, ECDF export |
//!
//! Every stochastic routine takes an explicit [`RngState`]; equal seeds give
//! bit-identical results.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ndmath;
pub mod net;
pub mod flowmatch;
pub mod transport;
pub mod diffusion;
pub mod wgf;
pub mod dro;
pub mod posterior;
pub mod metrics;

pub use error::{Error, Result};
pub use flowmatch::{FlowModel, VelocityField};
pub use ndmath::{AffineMap, FullGaussian, Matrix, RngState};
pub use net::Mlp;
