//! Variance-preserving diffusion: the forward noising chain, analytic
//! Gaussian-mixture scores, denoising score matching and the two samplers
//! (reverse SDE and probability-flow ODE).

mod mixture;
mod sampler;
mod schedule;
mod score;

pub use mixture::{analytic_score, GaussianMixture};
pub use sampler::{pf_ode_drift, pf_ode_map, pf_ode_sample, reverse_sde_sample, PfOdeField};
pub use schedule::{forward_chain, ou_marginal, VpSchedule};
pub use score::{
    train_dsm, AnalyticScore, DsmConfig, DsmFit, ScoreModel, TimeScore, SCORE_CHECKPOINT_HEADER,
};

#[cfg(test)]
mod tests;
