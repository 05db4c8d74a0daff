use shiftgen_core::diffusion::{pf_ode_sample, reverse_sde_sample, AnalyticScore, GaussianMixture, VpSchedule};
use shiftgen_core::transport::w2_assignment;
use shiftgen_core::{FullGaussian, Matrix, RngState};

use super::{save, start};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::report::Report;

/// Probability-flow ODE against reverse SDE on a two-component mixture with
/// its exact score.
pub fn cmd_flow_demo(cfg: &RunConfig) -> CliResult<Report> {
    let f = &cfg.flow_demo;
    let (out, mut r, started) = start(cfg, "flow-demo")?;
    r.params("flow_demo", &RunConfig::section(f));
    let schedule = VpSchedule::constant(f.beta, f.schedule_steps)?;
    r.num("final_alpha_bar", schedule.final_alpha_bar());
    r.text("reaches_reference", schedule.reaches_reference(1e-3));
    let comp = |x: f64| FullGaussian::isotropic(vec![x, 0.0], f.component_var);
    let target = GaussianMixture::new(vec![0.5, 0.5], vec![comp(-f.separation)?, comp(f.separation)?])?;
    let score = AnalyticScore::new(target.clone(), &schedule);

    let ode = pf_ode_sample(&score, f.samples, f.ode_steps, &mut RngState::with_stream(cfg.seed, 0))?;
    let sde = reverse_sde_sample(&score, &schedule, f.samples, &mut RngState::with_stream(cfg.seed, 1))?;
    let mut rng = RngState::with_stream(cfg.seed, 2);
    let t1 = target.sample(&mut rng, f.samples)?;
    let t2 = target.sample(&mut rng, f.samples)?;

    let k = f.w2_points;
    let w2 = |a: &Matrix, b: &Matrix| -> CliResult<f64> { Ok(w2_assignment(&a.slice_rows(0, k), &b.slice_rows(0, k))?.0) };
    let ode_sde = w2(&ode, &sde)?;
    let target_target = w2(&t1, &t2)?;
    r.num("w2_ode_sde", ode_sde);
    r.num("w2_target_target", target_target);
    r.num("w2_ode_target", w2(&ode, &t1)?);
    r.num("w2_sde_target", w2(&sde, &t1)?);
    r.num("w2_ratio", ode_sde / target_target);

    let header = vec!["x1".to_string(), "x2".to_string()];
    save(&out, &mut r, "ode_file", "ode.csv", &header, &ode)?;
    save(&out, &mut r, "sde_file", "sde.csv", &header, &sde)?;
    save(&out, &mut r, "target_file", "target.csv", &header, &t1)?;
    r.finish(&out, started)
}
