use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use shiftgen_cli::{cmd_flow_demo, cmd_posterior, cmd_scenario, cmd_stress, Override, RunConfig};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shiftgen-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(out: &Path, overrides: &[(&str, &str)]) -> RunConfig {
    let mut o: Vec<Override> = overrides
        .iter()
        .map(|(k, v)| Override::parse(&format!("{k}={v}")).unwrap())
        .collect();
    o.push(Override::new("out_dir", out.to_string_lossy().into_owned()));
    RunConfig::load(None, &o).unwrap()
}

fn shiftgen(args: &[&str], out: &Path) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_shiftgen"))
        .args(args)
        .env("SHIFTGEN_OUT_DIR", out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8(o.stdout).unwrap(),
        String::from_utf8(o.stderr).unwrap(),
    )
}

#[test]
fn scenario_untrained_model_still_reports() {
    let out = scratch("scenario0");
    let cfg = config(&out, &[("scenario.epochs", "0"), ("scenario.synthetic_rows", "400"), ("scenario.samples", "300")]);
    let r = cmd_scenario(&cfg).unwrap();
    for key in ["mmd2", "ks_max", "corr_fro", "samples_file"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r.get("final_loss"), Some("absent"));
    assert_eq!(r.get("scenario.epochs"), Some("0"));
    for f in r.files() {
        assert!(out.join(f).is_file(), "{f} not written");
    }
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 301);
    assert!(samples.starts_with("county_01,"));
}

#[test]
fn scenario_rejects_non_numeric_column() {
    let out = scratch("scenario-bad");
    let csv = out.join("bad.csv");
    fs::write(&csv, "a,region\n1,2\n3,north\n").unwrap();
    let (code, _, err) = shiftgen(&["scenario", "--input", csv.to_str().unwrap()], &out);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("region"), "{err}");
}

#[test]
fn stress_linear_mode_recovers_shift() {
    let out = scratch("stress-linear");
    let cfg = config(&out, &[("stress.mode", "linear"), ("stress.lambdas", "[0.05, 0.1, 0.2, 0.5]")]);
    let r = cmd_stress(&cfg).unwrap();
    assert!(r.get_f64("lambda_0.5.max_deviation").unwrap() < 1e-3);
    let worst: Vec<f64> = ["0.05", "0.1", "0.2", "0.5"]
        .iter()
        .map(|l| r.get_f64(&format!("lambda_{l}.worst_case")).unwrap())
        .collect();
    assert!(worst.windows(2).all(|w| w[1] >= w[0]), "{worst:?}");
}

#[test]
fn stress_portfolio_sweep_and_guards() {
    let out = scratch("stress-portfolio");
    let cfg = config(&out, &[("stress.lambdas", "[0.05, 0.1, 0.2]"), ("stress.iters", "100")]);
    let r = cmd_stress(&cfg).unwrap();
    let mut last = f64::NEG_INFINITY;
    for l in ["0.05", "0.1", "0.2"] {
        let w = r.get_f64(&format!("lambda_{l}.worst_case")).unwrap();
        assert!(w >= last);
        assert!(r.get_f64(&format!("lambda_{l}.worst_case_risk")).unwrap() >= r.get_f64(&format!("lambda_{l}.nominal_risk")).unwrap());
        last = w;
    }
    let wealth = fs::read_to_string(out.join("wealth.csv")).unwrap();
    assert!(wealth.starts_with("period,nominal,robust_0.05,robust_0.1,robust_0.2\n"));

    let csv = out.join("flat.csv");
    let rows: String = (0..20).map(|i| format!("{},0.01,{}\n", 0.001 * i as f64, 0.02 - 0.001 * (i % 3) as f64)).collect();
    fs::write(&csv, format!("spy,cash,tlt\n{rows}")).unwrap();
    let (code, _, err) = shiftgen(&["stress", "--input", csv.to_str().unwrap()], &out);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("\"cash\""), "{err}");

    fs::write(&csv, "a,b\n0.1,0.2\n0.2,0.1\n").unwrap();
    let (code, _, err) = shiftgen(&["stress", "--input", csv.to_str().unwrap()], &out);
    assert_eq!(code, 3);
    assert!(err.contains("at least 10"), "{err}");
}

#[test]
fn posterior_identity_matches_oracle() {
    let out = scratch("posterior");
    let r = cmd_posterior(&config(&out, &[])).unwrap();
    assert!(r.get_f64("post_mean_err").unwrap() < 0.05);
    assert_eq!(r.get("oracle_mean"), Some("[0.5]"));

    let cfg = config(
        &out,
        &[("posterior.generator", "\"affine\""), ("posterior.a", "[[2.0]]"), ("posterior.b", "[0.0]"), ("posterior.steps", "50000")],
    );
    let r = cmd_posterior(&cfg).unwrap();
    assert_eq!(r.get("oracle_mean"), Some("[0.8]"));
    assert!(r.get_f64("prior_disc").unwrap() > 0.1);
}

#[test]
fn posterior_checkpoint_generator_has_no_oracle() {
    let out = scratch("posterior-ckpt");
    let flow = out.join("flow");
    let sc = config(&flow, &[("scenario.epochs", "1"), ("scenario.synthetic_rows", "300"), ("scenario.samples", "50"), ("scenario.hidden", "[8]")]);
    cmd_scenario(&sc).unwrap();
    // The scenario flow lives in 10 dimensions; observe the first coordinate.
    let h: Vec<String> = (0..10).map(|j| if j == 0 { "1.0" } else { "0.0" }.to_string()).collect();
    let cfg = config(
        &out,
        &[
            ("posterior.generator", "\"checkpoint\""),
            ("posterior.checkpoint", &format!("{:?}", flow.join("flow.ckpt").to_string_lossy())),
            ("posterior.flow_steps", "16"),
            ("posterior.h", &format!("[[{}]]", h.join(","))),
            ("posterior.y", "[0.5]"),
            ("posterior.step", "0.01"),
            ("posterior.steps", "60"),
            ("posterior.thin", "5"),
            ("posterior.chains", "2"),
            ("posterior.prior_samples", "40"),
        ],
    );
    let r = cmd_posterior(&cfg).unwrap();
    assert_eq!(r.get("post_mean_err"), Some("absent"));
    assert_eq!(r.get("oracle_mean"), Some("absent"));
    assert_eq!(r.get("prior_disc_measure"), Some("w2_assignment"));
}

#[test]
fn config_errors_exit_2() {
    let out = scratch("config-errors");
    let (code, _, err) = shiftgen(&["posterior", "--steps", "100", "--burn-in", "100"], &out);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = shiftgen(&["flow-demo", "--set", "flow_demo.nosuch=1"], &out);
    assert_eq!(code, 2);
    let (code, _, _) = shiftgen(&["posterior", "--generator", "magic"], &out);
    assert_eq!(code, 2);
    let toml = out.join("run.toml");
    fs::write(&toml, "seed = 5\n[flow_demo]\nsamples = 300\nw2_points = 200\n").unwrap();
    let (code, stdout, err) = shiftgen(&["--config", toml.to_str().unwrap(), "flow-demo", "--steps", "1"], &out);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("seed=5\n") && stdout.contains("flow_demo.ode_steps=1\n"));
    // Output lands in SHIFTGEN_OUT_DIR when nothing else is configured.
    assert!(out.join("report.txt").is_file() && out.join("ode.csv").is_file());
}

#[test]
fn flow_demo_samplers_agree() {
    let out = scratch("flow-demo");
    let r = cmd_flow_demo(&config(&out, &[])).unwrap();
    assert!(r.get_f64("w2_ode_sde").unwrap() < 2.0 * r.get_f64("w2_target_target").unwrap());
    let r = cmd_flow_demo(&config(&out, &[("flow_demo.ode_steps", "1")])).unwrap();
    assert!(r.get_f64("w2_ode_target").unwrap().is_finite());
}
