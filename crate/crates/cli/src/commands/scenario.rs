use std::fs::File;
use std::io::BufWriter;

use shiftgen_core::dro::Standardizer;
use shiftgen_core::flowmatch::{push, train_fm, Direction, FmConfig, OdeConfig, Reference};
use shiftgen_core::metrics::{corr_diff, ks_per_coordinate, median_heuristic, mmd, write_ecdf_csv, MmdConfig, MmdEstimator};
use shiftgen_core::{FullGaussian, Matrix, RngState};

use super::{chronological_split, load_table, save, start};
use crate::config::RunConfig;
use crate::error::{name_zero_variance, CliError, CliResult};
use crate::report::Report;
use crate::synth;

/// Scenario generation: log(1+x), train-split standardization, flow
/// matching, generation, and comparison against the held-out rows.
pub fn cmd_scenario(cfg: &RunConfig) -> CliResult<Report> {
    let sc = &cfg.scenario;
    let (out, mut r, started) = start(cfg, "scenario")?;
    r.params("scenario", &RunConfig::section(sc));
    let estimator = MmdEstimator::parse(&sc.mmd_estimator)?;

    let (header, raw) = match &sc.input {
        Some(p) => load_table(p)?,
        None => {
            let (h, m) = synth::outage_counts(sc.synthetic_rows, cfg.seed);
            save(&out, &mut r, "input_file", "input.csv", &h, &m)?;
            (h, m)
        }
    };
    r.text("data_source", if sc.input.is_some() { "csv" } else { "synthetic" });
    if let Some((i, j)) = (0..raw.rows())
        .flat_map(|i| (0..raw.cols()).map(move |j| (i, j)))
        .find(|&(i, j)| !(raw[(i, j)] > -1.0))
    {
        return Err(CliError::data(format!(
            "column {:?} row {} has value {} outside the log(1+x) domain",
            header[j],
            i + 1,
            raw[(i, j)]
        )));
    }
    let logged = raw.map(f64::ln_1p);
    let (train, test) = chronological_split(&logged, sc.train_fraction)?;
    r.text("n_train", train.rows());
    r.text("n_test", test.rows());
    let scaler = Standardizer::fit(&train).map_err(|e| name_zero_variance(e, &header))?;
    let z_train = scaler.apply(&train)?;

    let d = train.cols();
    let mut rng = RngState::new(cfg.seed);
    let fm = FmConfig {
        epochs: sc.epochs,
        batch: sc.batch,
        lr: sc.lr,
        lr_min: sc.lr_min,
        hidden: sc.hidden.clone(),
    };
    let fit = train_fm(&z_train, None, &Reference::Gaussian(FullGaussian::standard(d)), &fm, &mut rng)?;
    r.text("train_steps", fit.losses.len());
    r.opt_num("final_loss", fit.losses.last().copied());
    let losses = Matrix::from_fn(fit.losses.len(), 2, |i, j| if j == 0 { i as f64 } else { fit.losses[i] });
    save(&out, &mut r, "loss_file", "train_loss.csv", &["step".into(), "loss".into()], &losses)?;
    let ckpt = "flow.ckpt";
    fit.model.write_checkpoint(&mut BufWriter::new(File::create(out.join(ckpt))?))?;
    r.file("checkpoint_file", ckpt);

    let noise = Matrix::from_fn(sc.samples, d, |_, _| rng.normal());
    let generated = scaler.invert(&push(&fit.model, &noise, &OdeConfig::rk4(sc.ode_steps, Direction::Reverse), None)?)?;
    save(&out, &mut r, "samples_file", "samples.csv", &header, &generated)?;

    let bandwidth = median_heuristic(&generated, &test)?;
    let m2 = mmd(&generated, &test, &MmdConfig::new(bandwidth, estimator)?)?;
    r.num("mmd_bandwidth", bandwidth);
    r.text("mmd_estimator", estimator.name());
    r.num("mmd2", m2);
    r.opt_num("mmd", (m2 >= 0.0).then(|| m2.sqrt()));

    let ks = ks_per_coordinate(&generated, &test)?;
    r.num("ks_max", ks.iter().cloned().fold(0.0, f64::max));
    for (name, k) in header.iter().zip(&ks) {
        r.num(format!("ks.{name}"), *k);
    }
    let corr = corr_diff(&test, &generated).map_err(|e| name_zero_variance(e, &header))?;
    r.num("corr_fro", corr.fro);
    save(&out, &mut r, "corr_test_file", "corr_test.csv", &header, &corr.corr_x)?;
    save(&out, &mut r, "corr_generated_file", "corr_generated.csv", &header, &corr.corr_y)?;
    for (key, name, m) in [("ecdf_test_file", "ecdf_test.csv", &test), ("ecdf_generated_file", "ecdf_generated.csv", &generated)] {
        write_ecdf_csv(BufWriter::new(File::create(out.join(name))?), m, &header)?;
        r.file(key, name);
    }
    r.finish(&out, started)
}
