use shiftgen_core::dro::{
    backtest, empirical_risk, fit_nominal, gda_run, softmax_weights, DecisionLoss, GdaConfig, LinearLoss,
    PortfolioShortfall, Standardizer, TransportResult,
};
use shiftgen_core::{Matrix, RngState};

use super::{chronological_split, load_table, save, start};
use crate::config::{RunConfig, StressConfig};
use crate::error::{name_zero_variance, CliError, CliResult};
use crate::report::{fmt_sig, Report};
use crate::synth;

pub const MIN_ROWS: usize = 10;

fn gda_cfg(s: &StressConfig, lambda: f64) -> GdaConfig {
    GdaConfig {
        lambda,
        tau: s.tau,
        eta: s.eta,
        iters: s.iters,
        inner_iters: s.inner_iters,
    }
}

fn list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| fmt_sig(*x)).collect::<Vec<_>>().join(","))
}

/// Lines shared by both modes for one λ.
fn summarize<L: DecisionLoss>(r: &mut Report, key: &str, loss: &L, run: &TransportResult) -> CliResult<()> {
    let moved = run.transported.sub(&run.base)?;
    let cost = moved.as_slice().iter().map(|v| v * v).sum::<f64>() / moved.rows() as f64;
    let (st, sm) = run.final_stationarity();
    r.num(format!("{key}.worst_case"), run.final_objective());
    r.num(format!("{key}.worst_case_risk"), empirical_risk(loss, &run.theta, &run.transported)?);
    r.num(format!("{key}.nominal_risk"), empirical_risk(loss, &run.theta, &run.base)?);
    r.num(format!("{key}.transport_cost"), cost);
    r.num(format!("{key}.stationarity_theta"), st);
    r.num(format!("{key}.stationarity_map"), sm);
    Ok(())
}

/// Distributional stress test: nominal fit, then one GDA run per λ.
pub fn cmd_stress(cfg: &RunConfig) -> CliResult<Report> {
    let s = &cfg.stress;
    let (out, mut r, started) = start(cfg, "stress")?;
    r.params("stress", &RunConfig::section(s));
    if s.mode == "linear" {
        linear(cfg, &out, &mut r)?;
    } else {
        portfolio(cfg, &out, &mut r)?;
    }
    r.finish(&out, started)
}

/// Toy loss `ℓ(x) = x₁`, whose worst case is the shift `x + λ e₁`.
fn linear(cfg: &RunConfig, out: &std::path::Path, r: &mut Report) -> CliResult<()> {
    let s = &cfg.stress;
    if s.linear_dim == 0 || s.linear_particles < 2 {
        return Err(CliError::config("linear mode needs linear_dim >= 1 and linear_particles >= 2"));
    }
    let mut rng = RngState::new(cfg.seed);
    let base = Matrix::from_fn(s.linear_particles, s.linear_dim, |_, _| rng.normal());
    let loss = LinearLoss::axis(s.linear_dim, 0);
    let header: Vec<String> = (1..=s.linear_dim).map(|j| format!("x{j}")).collect();
    save(out, r, "base_file", "base.csv", &header, &base)?;
    for &lambda in &s.lambdas {
        let key = format!("lambda_{}", fmt_sig(lambda));
        let run = gda_run(&loss, &[], &base, &gda_cfg(s, lambda))?;
        summarize(r, &key, &loss, &run)?;
        let mut shift = vec![0.0; s.linear_dim];
        shift[0] = lambda;
        let exact = base.add_row_vector(&shift)?;
        r.num(format!("{key}.max_deviation"), run.transported.sub(&exact)?.max_abs());
        save(out, r, &format!("{key}.worst_case_file"), &format!("worst_case_{}.csv", fmt_sig(lambda)), &header, &run.transported)?;
    }
    Ok(())
}

fn portfolio(cfg: &RunConfig, out: &std::path::Path, r: &mut Report) -> CliResult<()> {
    let s = &cfg.stress;
    let (header, returns) = match &s.input {
        Some(p) => load_table(p)?,
        None => {
            let (h, m) = synth::factor_returns(s.synthetic_rows, s.assets, cfg.seed);
            save(out, r, "input_file", "input.csv", &h, &m)?;
            (h, m)
        }
    };
    r.text("data_source", if s.input.is_some() { "csv" } else { "synthetic" });
    if returns.rows() < MIN_ROWS {
        return Err(CliError::data(format!("need at least {MIN_ROWS} return rows, got {}", returns.rows())));
    }
    let (raw_train, test) = chronological_split(&returns, s.train_fraction)?;
    // Optimization runs on training-standardized returns; backtests use raw
    // returns and worst-case particles are mapped back to raw units.
    let scaler = Standardizer::fit(&raw_train).map_err(|e| name_zero_variance(e, &header))?;
    let train = scaler.apply(&raw_train)?;
    r.text("n_train", train.rows());
    r.text("n_test", test.rows());

    let d = train.cols();
    let loss = PortfolioShortfall::new(d, s.threshold, s.beta)?;
    let nominal = fit_nominal(&loss, &vec![0.0; d], &train, s.tau, s.nominal_iters)?;
    let nominal_w = softmax_weights(&nominal);
    r.num("nominal.risk", empirical_risk(&loss, &nominal, &train)?);
    r.text("nominal.weights", list(&nominal_w));
    let mut paths = vec![("nominal".to_string(), backtest(&nominal_w, &test)?)];
    r.num("nominal.final_wealth", *paths[0].1.wealth.last().unwrap());

    for &lambda in &s.lambdas {
        let key = format!("lambda_{}", fmt_sig(lambda));
        let run = gda_run(&loss, &nominal, &train, &gda_cfg(s, lambda))?;
        summarize(r, &key, &loss, &run)?;
        let w = softmax_weights(&run.theta);
        r.text(format!("{key}.weights"), list(&w));
        let bt = backtest(&w, &test)?;
        r.num(format!("{key}.final_wealth"), *bt.wealth.last().unwrap());
        r.text(format!("{key}.bankrupt"), bt.bankrupt);
        save(out, r, &format!("{key}.worst_case_file"), &format!("worst_case_{}.csv", fmt_sig(lambda)), &header, &scaler.invert(&run.transported)?)?;
        paths.push((format!("robust_{}", fmt_sig(lambda)), bt));
    }

    // Paths stop at bankruptcy; later periods are recorded as zero wealth.
    let mut wealth_header = vec!["period".to_string()];
    wealth_header.extend(paths.iter().map(|(n, _)| n.clone()));
    let wealth = Matrix::from_fn(test.rows(), paths.len() + 1, |t, j| match j {
        0 => (t + 1) as f64,
        j => paths[j - 1].1.wealth.get(t).copied().unwrap_or(0.0),
    });
    save(out, r, "wealth_file", "wealth.csv", &wealth_header, &wealth)
}
