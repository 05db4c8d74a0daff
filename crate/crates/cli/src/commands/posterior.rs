use std::fs::File;
use std::io::BufReader;

use shiftgen_core::flowmatch::FlowModel;
use shiftgen_core::ndmath::{column_means, mean_cov};
use shiftgen_core::posterior::{
    gaussian_discrepancy, latent_langevin, oracle_posterior, AffineGenerator, FlowGenerator, Generator,
    IdentityGenerator, LangevinConfig, LinearGaussianLikelihood,
};
use shiftgen_core::{FullGaussian, Matrix, RngState};

use super::{save, start};
use crate::config::{PosteriorConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{fmt_sig, Report};

/// Round-trip tolerance and probe count for checkpoint generators.
const FLOW_TOL: f64 = 1e-4;
const FLOW_PROBES: usize = 4;

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<Matrix> {
    Matrix::from_rows(rows).map_err(|e| CliError::config(format!("posterior.{what}: {e}")))
}

fn list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| fmt_sig(*x)).collect::<Vec<_>>().join(","))
}

/// The generator, plus its affine form when the posterior has a closed form.
fn generator(p: &PosteriorConfig, rng: &mut RngState) -> CliResult<(Box<dyn Generator>, Option<AffineGenerator>)> {
    let invalid = |e: shiftgen_core::Error| CliError::config(format!("invalid generator: {e}"));
    match p.generator.as_str() {
        "identity" => {
            if p.dim == 0 {
                return Err(CliError::config("posterior.dim must be >= 1"));
            }
            let affine = AffineGenerator::new(Matrix::identity(p.dim), vec![0.0; p.dim]).map_err(invalid)?;
            Ok((Box::new(IdentityGenerator { dim: p.dim }), Some(affine)))
        }
        "affine" => {
            let (Some(a), Some(b)) = (&p.a, &p.b) else {
                return Err(CliError::config("affine generator needs posterior.a and posterior.b"));
            };
            let g = AffineGenerator::new(matrix(a, "a")?, b.clone()).map_err(invalid)?;
            Ok((Box::new(g.clone()), Some(g)))
        }
        "checkpoint" => {
            let path = p
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::config("checkpoint generator needs posterior.checkpoint"))?;
            let file = File::open(path)
                .map_err(|e| CliError::config(format!("cannot open checkpoint {}: {e}", path.display())))?;
            let model = FlowModel::read_checkpoint(&mut BufReader::new(file))?;
            let g = FlowGenerator::new(model, p.flow_steps, FLOW_TOL, FLOW_PROBES, rng)?;
            Ok((Box::new(g), None))
        }
        other => Err(CliError::config(format!(
            "posterior.generator must be identity, affine or checkpoint, got {other:?}"
        ))),
    }
}

/// Latent Langevin posterior sampling, with oracle moment errors when the
/// generator is affine.
pub fn cmd_posterior(cfg: &RunConfig) -> CliResult<Report> {
    let p = &cfg.posterior;
    let (out, mut r, started) = start(cfg, "posterior")?;
    r.params("posterior", &RunConfig::section(p));
    let mut rng = RngState::with_stream(cfg.seed, u64::MAX - 1);
    let (gen, affine) = generator(p, &mut rng)?;
    let d = gen.dim();

    let h = match &p.h {
        Some(h) => matrix(h, "h")?,
        None => Matrix::identity(d),
    };
    let y = p.y.clone().unwrap_or_else(|| vec![1.0; h.rows()]);
    let lik = LinearGaussianLikelihood::new(h, p.noise_var, y).map_err(|e| CliError::config(format!("likelihood: {e}")))?;
    if lik.dim() != d {
        return Err(CliError::config(format!("likelihood acts on dimension {}, generator has {d}", lik.dim())));
    }
    let langevin = LangevinConfig {
        step: p.step,
        steps: p.steps,
        burn_in: p.burn_in,
        thin: p.thin,
        seed: cfg.seed,
        chains: p.chains,
    };
    langevin.validate()?;
    r.text("burn_in_used", langevin.burn_in());

    let samples = latent_langevin(gen.as_ref(), &lik, &langevin)?;
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    save(&out, &mut r, "samples_file", "samples.csv", &header, &samples)?;
    r.text("n_samples", samples.rows());
    let (mean, cov) = mean_cov(&samples)?;
    r.text("sample_mean", list(&mean));
    r.text("sample_var", list(&cov.diag()));

    let oracle = affine.as_ref().map(|g| oracle_posterior(g, &lik)).transpose()?;
    let errs = oracle.as_ref().map(|o| {
        let mean_err = mean.iter().zip(o.mean()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let var_err = cov.sub(o.cov()).map(|m| m.max_abs()).unwrap_or(f64::NAN);
        (mean_err, var_err)
    });
    match &oracle {
        Some(o) => {
            r.text("oracle_mean", list(o.mean()));
            r.text("oracle_var", list(&o.cov().diag()));
        }
        None => {
            r.text("oracle_mean", "absent");
            r.text("oracle_var", "absent");
        }
    }
    r.opt_num("post_mean_err", errs.map(|e| e.0));
    r.opt_num("post_var_err", errs.map(|e| e.1));

    let truth = match (&p.true_prior_mean, &p.true_prior_cov) {
        (None, None) => FullGaussian::standard(d),
        (m, c) => FullGaussian::new(
            m.clone().unwrap_or_else(|| vec![0.0; d]),
            c.as_ref().map_or_else(|| Ok(Matrix::identity(d)), |c| matrix(c, "true_prior_cov"))?,
        )
        .map_err(|e| CliError::config(format!("true prior: {e}")))?,
    };
    if truth.dim() != d {
        return Err(CliError::config("true prior dimension differs from the generator"));
    }
    let latent = Matrix::from_fn(p.prior_samples, d, |_, _| rng.normal());
    let mut pushed = Vec::with_capacity(p.prior_samples * d);
    for z in latent.row_iter() {
        pushed.extend(gen.forward(z)?);
    }
    let model_prior = Matrix::new(p.prior_samples, d, pushed)?;
    r.text("model_prior_mean", list(&column_means(&model_prior)));
    r.num("prior_disc", gaussian_discrepancy(&model_prior, &truth, &mut rng)?);
    r.text("prior_disc_measure", if d == 1 { "tv_grid" } else { "w2_assignment" });
    r.finish(&out, started)
}
