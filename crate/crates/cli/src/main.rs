use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftgen_cli::{cmd_flow_demo, cmd_posterior, cmd_scenario, cmd_stress, CliResult, Override, Report, RunConfig};

#[derive(Parser)]
#[command(name = "shiftgen", version, about = "Distribution-shift generation pipelines")]
struct Cli {
    /// TOML config file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config, then $SHIFTGEN_OUT_DIR, then ./shiftgen-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override such as `stress.lambdas=[0.1,0.2]`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a flow on count data and score generated scenarios.
    Scenario {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Worst-case distributions and robust decisions over a λ sweep.
    Stress {
        #[arg(long)]
        input: Option<PathBuf>,
        /// portfolio or linear
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Latent Langevin posterior sampling.
    Posterior {
        /// identity, affine or checkpoint
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Compare ODE and SDE samplers on a Gaussian mixture.
    FlowDemo {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn path(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

fn run(cli: Cli) -> CliResult<Report> {
    let mut o = cli.set.iter().map(|s| Override::parse(s)).collect::<CliResult<Vec<_>>>()?;
    if let Some(s) = cli.seed {
        o.push(Override::new("seed", s as i64));
    }
    if let Some(p) = cli.out {
        o.push(Override::new("out_dir", path(p)));
    }
    let mut flag = |key: &str, v: Option<toml::Value>| {
        if let Some(v) = v {
            o.push(Override::new(key, v));
        }
    };
    let int = |v: Option<usize>| v.map(|v| toml::Value::Integer(v as i64));
    let text = |v: Option<PathBuf>| v.map(|p| toml::Value::String(path(p)));
    let cmd: fn(&RunConfig) -> CliResult<Report> = match cli.command {
        Command::Scenario { input, epochs, samples } => {
            flag("scenario.input", text(input));
            flag("scenario.epochs", int(epochs));
            flag("scenario.samples", int(samples));
            cmd_scenario
        }
        Command::Stress { input, mode, lambdas } => {
            flag("stress.input", text(input));
            flag("stress.mode", mode.map(toml::Value::String));
            flag("stress.lambdas", lambdas.map(|l| toml::Value::Array(l.into_iter().map(toml::Value::Float).collect())));
            cmd_stress
        }
        Command::Posterior { generator, checkpoint, steps, burn_in } => {
            flag("posterior.generator", generator.map(toml::Value::String));
            flag("posterior.checkpoint", text(checkpoint));
            flag("posterior.steps", int(steps));
            flag("posterior.burn_in", int(burn_in));
            cmd_posterior
        }
        Command::FlowDemo { steps, samples } => {
            flag("flow_demo.ode_steps", int(steps));
            flag("flow_demo.samples", int(samples));
            cmd_flow_demo
        }
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &o)?;
    cmd(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("shiftgen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
