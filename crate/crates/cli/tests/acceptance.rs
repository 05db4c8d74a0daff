//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria with a runtime budget fail when they overrun it. Everything
//! runs sequentially so the timings are not skewed by sibling tests.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use shiftgen_cli::synth::factor_returns;
use shiftgen_cli::{cmd_flow_demo, cmd_posterior, cmd_scenario, cmd_stress, Override, Report, RunConfig};
use shiftgen_core::diffusion::{pf_ode_sample, reverse_sde_sample, AnalyticScore, GaussianMixture, VpSchedule};
use shiftgen_core::dro::{
    check_loss_gradients, empirical_risk, gda_run, grad_map, penalized_objective, DecisionLoss, GdaConfig,
    LinearLoss, PortfolioShortfall, Standardizer,
};
use shiftgen_core::flowmatch::{
    lift_particles, log_likelihood, push, train_fm, AffineField, Direction, FmConfig, FnField, LiftConfig,
    OdeConfig, Reference, TrajectoryBundle,
};
use shiftgen_core::metrics::permutation_test;
use shiftgen_core::net::{NetInput, TIME_FEATURES};
use shiftgen_core::posterior::{
    latent_langevin, oracle_posterior, AffineGenerator, IdentityGenerator, LangevinConfig,
    LinearGaussianLikelihood,
};
use shiftgen_core::transport::{assignment_total, cost_matrix, w2_assignment, w2_gaussian};
use shiftgen_core::wgf::{kl_transfer_check, kl_to_standard, run_jko, DiagGaussianState};
use shiftgen_core::{AffineMap, FullGaussian, Matrix, Mlp, RngState};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c01_toy_worst_case() -> Check {
    let mut rng = RngState::new(101);
    let base = Matrix::from_fn(200, 2, |_, _| rng.normal());
    let cfg = GdaConfig {
        lambda: 0.5,
        eta: 0.05,
        iters: 100,
        inner_iters: 5,
        ..GdaConfig::default()
    };
    let run = e(gda_run(&LinearLoss::axis(2, 0), &[], &base, &cfg))?;
    let exact = e(base.add_row_vector(&[0.5, 0.0]))?;
    let dev = e(run.transported.sub(&exact))?.max_abs();
    ensure(dev < 1e-4, || format!("max deviation {dev:e}"))?;
    Ok(format!("max deviation {dev:.1e} after {} ascent sweeps", cfg.iters * cfg.inner_iters))
}

fn central(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut p = at.to_vec();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max)
}

fn c02_gradients() -> Check {
    let mut max = 0.0f64;
    for k in 0..50u64 {
        let mut rng = RngState::new(2000 + k);
        let d = 2 + rng.index(7);
        let theta: Vec<f64> = rng.normal_vec(d);
        let x: Vec<f64> = rng.normal_vec(d).iter().map(|v| 0.05 * v).collect();
        let port = e(PortfolioShortfall::new(d, 0.1 * (rng.uniform() - 0.5), 1.0 + 19.0 * rng.uniform()))?;
        max = max.max(check_loss_gradients(&port, &theta, &x, 1e-6).max());
        let lin = LinearLoss::new(rng.normal_vec(d));
        max = max.max(check_loss_gradients(&lin, &[], &x, 1e-6).max());

        // grad_map row i is n times the gradient of the averaged objective in x′ᵢ
        let n = 4;
        let lambda = 0.05 + rng.uniform();
        let base = Matrix::from_fn(n, d, |_, _| 0.05 * rng.normal());
        let moved = Matrix::from_fn(n, d, |i, j| base[(i, j)] + 0.02 * rng.normal());
        let gm = e(grad_map(&port, &theta, &base, &moved, lambda))?;
        let obj = |flat: &[f64]| {
            let m = Matrix::new(n, d, flat.to_vec()).unwrap();
            n as f64 * penalized_objective(&port, &theta, &base, &m, lambda).unwrap()
        };
        max = max.max(worst(gm.as_slice(), &central(obj, moved.as_slice(), 1e-6)));

        let width = 2 + rng.index(8);
        let din = 1 + rng.index(4);
        let net = e(Mlp::new(&[din + TIME_FEATURES, width, width, 2], &mut rng))?;
        let z = rng.normal_vec(din);
        let input = NetInput::timed(&z, rng.uniform());
        let up = rng.normal_vec(2);
        let (gp, gi) = e(net.backward(&input, &up))?;
        let assembled = input.assemble();
        let value = |n: &Mlp, inp: &[f64]| n.eval(inp).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum::<f64>();
        let fd_params = central(
            |p| {
                let mut m = net.clone();
                m.params_mut().copy_from_slice(p);
                value(&m, &assembled)
            },
            net.params(),
            1e-6,
        );
        max = max.max(worst(&gp, &fd_params));
        max = max.max(worst(&gi, &central(|i| value(&net, i), &assembled, 1e-6)));
    }
    ensure(max < 1e-5, || format!("worst relative error {max:e}"))?;
    Ok(format!("worst relative error {max:.1e} over 50 configurations"))
}

/// Minimum of `Σ cost[i][perm i]` by Heap's algorithm.
fn brute_force(cost: &Matrix) -> f64 {
    let n = cost.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = assignment_total(cost, &perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(assignment_total(cost, &perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn c03_transport_oracles() -> Check {
    let mut rng = RngState::new(303);
    let mut gap = 0.0f64;
    for _ in 0..200 {
        let n = 1 + rng.index(8);
        let d = 1 + rng.index(3);
        let x = Matrix::from_fn(n, d, |_, _| rng.normal());
        let y = Matrix::from_fn(n, d, |_, _| 2.0 * rng.normal());
        let cost = e(cost_matrix(&x, &y))?;
        let (_, a) = e(w2_assignment(&x, &y))?;
        gap = gap.max((assignment_total(&cost, &a.permutation) - brute_force(&cost)).abs());
    }
    ensure(gap <= 1e-12, || format!("assignment vs brute force gap {gap:e}"))?;
    let mut tgap = 0.0f64;
    for _ in 0..50 {
        let d = 1 + rng.index(4);
        let l = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 + rng.uniform() } else if j < i { 0.5 * rng.normal() } else { 0.0 });
        let cov = e(l.matmul(&l.transpose()))?;
        let mean = rng.normal_vec(d);
        let tau: Vec<f64> = rng.normal_vec(d).iter().map(|v| v + 1.0).collect();
        let shifted: Vec<f64> = mean.iter().zip(&tau).map(|(m, t)| m + t).collect();
        let w = e(w2_gaussian(&e(FullGaussian::new(mean, cov.clone()))?, &e(FullGaussian::new(shifted, cov))?))?;
        tgap = tgap.max((w - tau.iter().map(|t| t * t).sum::<f64>().sqrt()).abs());
    }
    ensure(tgap <= 1e-12, || format!("translation gap {tgap:e}"))?;
    Ok(format!("assignment gap {gap:.1e} on 200 instances, translation gap {tgap:.1e}"))
}

fn c04_jko() -> Check {
    let s0 = e(DiagGaussianState::new(vec![1.0], vec![1.0]))?;
    let run = e(run_jko(&s0, 1.0, 1e-15, 200))?;
    for (n, s) in run.iterates.iter().enumerate() {
        ensure(s.mean()[0] == 0.5f64.powi(n as i32), || format!("mean at step {n} is {}", s.mean()[0]))?;
    }
    ensure(run.kls.windows(2).all(|w| w[1] < w[0]), || "KL not strictly decreasing".into())?;
    let eps: Vec<f64> = (1..=15).map(|k| 10f64.powi(-k)).collect();
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = eps
        .iter()
        .map(|&ep| run_jko(&s0, 1.0, ep, 200).map(|r| r.iterations as f64))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    ensure(r2 > 0.999, || format!("R² {r2}"))?;
    Ok(format!("means exact for {} steps, R² {r2:.5}, final KL {:.1e}", run.iterations, kl_to_standard(run.iterates.last().unwrap())))
}

fn c05_kl_invariance() -> Check {
    let mut rng = RngState::new(505);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = 1 + rng.index(4);
        let state = |rng: &mut RngState| {
            DiagGaussianState::new(rng.normal_vec(d), (0..d).map(|_| 0.5 + rng.uniform()).collect())
        };
        let p = e(state(&mut rng))?;
        let q = e(state(&mut rng))?;
        let lin = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 + rng.uniform() } else { 0.3 * rng.normal() });
        let map = e(AffineMap::new(lin, rng.normal_vec(d)))?;
        let (a, b) = e(kl_transfer_check(&p, &q, &map))?;
        worst = worst.max((a - b).abs());
    }
    ensure(worst < 1e-10, || format!("worst difference {worst:e}"))?;
    Ok(format!("worst difference {worst:.1e} over 100 maps"))
}

fn c06_diffusion_sampler() -> Check {
    let target = e(FullGaussian::new(vec![1.0, -1.0], e(Matrix::from_rows(&[[1.0, 0.5], [0.5, 0.8]]))?))?;
    let schedule = VpSchedule::default();
    let score = AnalyticScore::new(GaussianMixture::single(target.clone()), &schedule);
    let mut rng = RngState::new(606);
    let ode = e(pf_ode_sample(&score, 4000, 100, &mut rng))?;
    let bures = e(w2_gaussian(&e(FullGaussian::fit(&ode))?, &target))?;
    ensure(bures < 0.05, || format!("Bures {bures}"))?;
    let sde = e(reverse_sde_sample(&score, &schedule, 4000, &mut rng))?;
    let k = 200;
    let stat = |a: &Matrix, b: &Matrix| w2_assignment(a, b).map(|r| r.0);
    let test = e(permutation_test(&ode.slice_rows(0, k), &sde.slice_rows(0, k), stat, 99, &mut rng))?;
    ensure(test.p_value > 0.05, || format!("permutation p = {}", test.p_value))?;
    Ok(format!("Bures {bures:.4}, permutation p = {:.2}", test.p_value))
}

fn c07_flow_matching() -> Check {
    let target = e(FullGaussian::isotropic(vec![2.0, 0.0], 1.0))?;
    let mut rng = RngState::new(707);
    let data = e(target.sample(&mut rng, 2000))?;
    let cfg = FmConfig {
        epochs: 150,
        batch: 100,
        lr: 3e-3,
        lr_min: 1e-5,
        hidden: vec![64, 64],
    };
    let fit = e(train_fm(&data, None, &Reference::Gaussian(FullGaussian::standard(2)), &cfg, &mut rng))?;
    ensure(fit.losses.len() <= 3000, || format!("{} gradient steps", fit.losses.len()))?;
    let z = e(FullGaussian::standard(2).sample(&mut rng, 2000))?;
    let ode = OdeConfig::rk4(64, Direction::Reverse);
    let generated = e(push(&fit.model, &z, &ode, None))?;
    let bures = e(w2_gaussian(&e(FullGaussian::fit(&generated))?, &target))?;
    let back = e(push(&fit.model, &generated, &ode.reversed(), None))?;
    let trip = median(
        (0..z.rows())
            .map(|i| z.row(i).iter().zip(back.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect(),
    );
    ensure(bures < 0.15 && trip < 1e-3, || format!("Bures {bures}, round trip {trip:e}"))?;
    Ok(format!("Bures {bures:.4} after {} steps, median round trip {trip:.1e}", fit.losses.len()))
}

fn c08_likelihood() -> Check {
    // dx/dt = a x + b per coordinate sends x to e^a x + (b/a)(e^a − 1) at t = 1
    let a = [-1.0, 0.4];
    let b = [0.5, -0.3];
    let field = AffineField::new(Matrix::from_diag(&a), b.to_vec());
    let reference = FullGaussian::standard(2);
    let mean: Vec<f64> = (0..2).map(|i| -(b[i] / a[i]) * (a[i].exp() - 1.0) / a[i].exp()).collect();
    let vars: Vec<f64> = a.iter().map(|a| (-2.0 * a).exp()).collect();
    let data = e(FullGaussian::diagonal(mean, &vars))?;
    let cfg = OdeConfig::rk4(32, Direction::Forward);
    let mut rng = RngState::new(808);
    let mut gap = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = rng.normal_vec(2).iter().map(|v| 2.0 * v).collect();
        let ll = e(log_likelihood(&field, &x, &cfg, &reference, None))?;
        gap = gap.max((ll - data.log_density(&x)).abs());
    }
    ensure(gap < 1e-4, || format!("log-density gap {gap:e}"))?;
    let f = FnField::new(1, |x: &[f64], t, out: &mut [f64]| out[0] = -0.5 * x[0] + 0.3 * (x[0] + t).sin());
    let one = FullGaussian::standard(1);
    let (lo, hi, n) = (-12.0, 12.0, 1200);
    let h = (hi - lo) / n as f64;
    let dens: Vec<f64> = (0..=n)
        .map(|i| log_likelihood(&f, &[lo + i as f64 * h], &cfg, &one, None).map(f64::exp))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mass = h * (dens.iter().sum::<f64>() - 0.5 * (dens[0] + dens[n]));
    ensure((mass - 1.0).abs() < 1e-2, || format!("1-d mass {mass}"))?;
    Ok(format!("log-density gap {gap:.1e} at 100 points, 1-d mass {mass:.5}"))
}

fn c09_conjugacy() -> Check {
    let lik = e(LinearGaussianLikelihood::new(e(Matrix::from_rows(&[[1.0]]))?, 1.0, vec![1.0]))?;
    let affine = e(AffineGenerator::new(e(Matrix::from_rows(&[[2.0]]))?, vec![0.0]))?;
    let oracle = e(oracle_posterior(&affine, &lik))?;
    let moments = |gen: &dyn shiftgen_core::posterior::Generator| -> Result<(f64, f64), String> {
        let (mut means, mut vars) = (Vec::new(), Vec::new());
        for seed in 0..5 {
            let cfg = LangevinConfig {
                step: 1e-3,
                steps: 200_000,
                seed,
                chains: 8,
                ..LangevinConfig::default()
            };
            let g = e(FullGaussian::fit(&e(latent_langevin(gen, &lik, &cfg))?))?;
            means.push(g.mean()[0]);
            vars.push(g.cov()[(0, 0)]);
        }
        Ok((median(means), median(vars)))
    };
    let (m1, v1) = moments(&IdentityGenerator { dim: 1 })?;
    ensure((m1 - 0.5).abs() < 0.03 && (v1 - 0.5).abs() < 0.03, || format!("identity mean {m1}, var {v1}"))?;
    let (m2, v2) = moments(&affine)?;
    let (om, ov) = (oracle.mean()[0], oracle.cov()[(0, 0)]);
    ensure((om - 0.8).abs() < 1e-12 && (ov - 0.8).abs() < 1e-12, || format!("oracle {om}, {ov}"))?;
    ensure((m2 - 0.8).abs() < 0.05 && (v2 - 0.8).abs() < 0.05, || format!("affine mean {m2}, var {v2}"))?;
    Ok(format!("identity {m1:.3}/{v1:.3}, affine {m2:.3}/{v2:.3}"))
}

fn sweep<L: DecisionLoss>(loss: &L, theta0: &[f64], base: &Matrix, tau: f64) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for lambda in [0.05, 0.1, 0.2, 0.5] {
        let cfg = GdaConfig {
            lambda,
            tau,
            ..GdaConfig::default()
        };
        let run = e(gda_run(loss, theta0, base, &cfg))?;
        let nominal = e(empirical_risk(loss, &run.theta, base))?;
        let risk = e(empirical_risk(loss, &run.theta, &run.transported))?;
        ensure(run.final_objective() >= nominal && risk >= nominal, || {
            format!("λ={lambda}: worst case {} / risk {risk} below nominal {nominal}", run.final_objective())
        })?;
        values.push(run.final_objective());
    }
    ensure(values.windows(2).all(|w| w[1] >= w[0]), || format!("not monotone: {values:?}"))?;
    Ok(values)
}

fn c10_dro_monotonicity() -> Check {
    let mut rng = RngState::new(1010);
    let base = Matrix::from_fn(200, 2, |_, _| rng.normal());
    let lin = sweep(&LinearLoss::axis(2, 0), &[], &base, 0.05)?;
    let (_, raw) = factor_returns(400, 6, 1010);
    let returns = e(e(Standardizer::fit(&raw))?.apply(&raw))?;
    let port = sweep(&PortfolioShortfall::with_defaults(6), &[0.0; 6], &returns, 1.0)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ≤ ");
    Ok(format!("linear {}; portfolio {}", fmt(&lin), fmt(&port)))
}

fn c11_particle_lift() -> Check {
    let mut rng = RngState::new(1111);
    let base = Matrix::from_fn(200, 2, |_, _| rng.normal());
    let lambda = 0.5;
    let cfg = GdaConfig {
        lambda,
        eta: 0.01,
        iters: 100,
        inner_iters: 5,
        ..GdaConfig::default()
    };
    let run = e(gda_run(&LinearLoss::axis(2, 0), &[], &base, &cfg))?;
    let k = run.snapshots.len() - 1;
    let times: Vec<f64> = (0..=k).step_by(5).map(|i| i as f64 / k as f64).collect();
    let clouds: Vec<Matrix> = (0..=k).step_by(5).map(|i| run.snapshots[i].clone()).collect();
    let bundle = e(TrajectoryBundle::new(times, clouds))?;
    let lift = LiftConfig {
        epochs: 200,
        ..LiftConfig::default()
    };
    let (model, _) = e(lift_particles(&bundle, &lift, &mut rng))?;
    let pushed = e(push(&model, &base, &OdeConfig::rk4(64, Direction::Forward), None))?;
    let (w, _) = e(w2_assignment(&pushed, &run.transported))?;
    let bound = 0.05 * lambda * 1.0;
    ensure(w <= bound, || format!("W2 {w} > {bound}"))?;
    Ok(format!("W2 {w:.4} ≤ {bound}"))
}

type Criterion<'a> = (&'a str, Option<Duration>, Box<dyn Fn() -> Check + 'a>);

fn c12_determinism(scratch: &Path) -> Check {
    type Cmd = fn(&RunConfig) -> shiftgen_cli::CliResult<Report>;
    let cmds: [(&str, Cmd); 4] = [
        ("scenario", cmd_scenario),
        ("stress", cmd_stress),
        ("posterior", cmd_posterior),
        ("flow-demo", cmd_flow_demo),
    ];
    let mut checked = 0;
    for (name, cmd) in cmds {
        let mut reports = Vec::new();
        for run in 0..2 {
            let out = scratch.join(format!("{name}-{run}"));
            let cfg = e(RunConfig::load(
                None,
                &[Override::new("seed", 12), Override::new("out_dir", out.to_string_lossy().into_owned())],
            ))?;
            let r = e(cmd(&cfg))?;
            let files: Vec<Vec<u8>> = r
                .files()
                .iter()
                .filter(|f| f.as_str() != shiftgen_cli::report::META_FILE)
                .map(|f| fs::read(out.join(f)))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            reports.push((e(fs::read(out.join(shiftgen_cli::report::REPORT_FILE)))?, files));
        }
        ensure(reports[0].0 == reports[1].0, || format!("{name}: reports differ"))?;
        ensure(reports[0].1 == reports[1].1, || format!("{name}: output files differ"))?;
        checked += reports[0].1.len();
    }
    Ok(format!("4 reports and {checked} output files byte-identical"))
}

fn main() {
    let scratch = std::env::temp_dir().join(format!("shiftgen-acceptance-{}", std::process::id()));
    let criteria: Vec<Criterion> = vec![
        ("toy worst-case oracle", Some(Duration::from_secs(5)), Box::new(c01_toy_worst_case)),
        ("gradient correctness", Some(Duration::from_secs(30)), Box::new(c02_gradients)),
        ("exact transport oracles", None, Box::new(c03_transport_oracles)),
        ("JKO geometric convergence", Some(Duration::from_secs(1)), Box::new(c04_jko)),
        ("KL invariance under affine maps", None, Box::new(c05_kl_invariance)),
        ("diffusion sampler fidelity", Some(Duration::from_secs(60)), Box::new(c06_diffusion_sampler)),
        ("flow-matching transport", Some(Duration::from_secs(180)), Box::new(c07_flow_matching)),
        ("likelihood consistency", None, Box::new(c08_likelihood)),
        ("posterior conjugacy", Some(Duration::from_secs(120)), Box::new(c09_conjugacy)),
        ("DRO monotonicity and dominance", None, Box::new(c10_dro_monotonicity)),
        ("particle lift", None, Box::new(c11_particle_lift)),
        ("pipeline determinism", Some(Duration::from_secs(600)), Box::new(|| c12_determinism(&scratch))),
    ];
    let mut failed = 0;
    println!("acceptance: {} criteria", criteria.len());
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let took = start.elapsed();
        if let (Ok(_), Some(b)) = (&outcome, budget) {
            if took > *b {
                outcome = Err(format!("took {:.2}s, budget {}s", took.as_secs_f64(), b.as_secs()));
            }
        }
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} C{:02} {name}: {detail} [{:.2}s]", i + 1, took.as_secs_f64());
    }
    let _ = fs::remove_dir_all(&scratch);
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
