use super::*;
use crate::ndmath::{FullGaussian, Matrix, RngState};
use crate::transport::w2_gaussian;

fn col_stats(m: &Matrix, j: usize) -> (f64, f64) {
    let n = m.rows() as f64;
    let mean = m.column(j).iter().sum::<f64>() / n;
    let var = m.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn schedule_validation_and_products() {
    assert!(VpSchedule::constant(0.0, 3).is_err());
    assert!(VpSchedule::from_betas(vec![0.1, 1.0]).is_err());
    let s = VpSchedule::from_betas(vec![0.1, 0.2]).unwrap();
    assert_eq!(s.alpha_bar(0), 1.0);
    assert!((s.alpha_bar(2) - 0.9 * 0.8).abs() < 1e-15);
    assert!(VpSchedule::from_betas(vec![]).unwrap().is_empty());
    let d = VpSchedule::default();
    for n in 1..=d.len() {
        assert!(d.alpha_bar(n) < d.alpha_bar(n - 1));
    }
    assert!(d.reaches_reference(1e-3));
    assert_eq!(d.net_time(0), 0.0);
    assert!((d.net_time(d.len()) - 1.0).abs() < 1e-15);
}

#[test]
fn forward_chain_preserves_standard_normal() {
    let mut rng = RngState::new(1);
    let n = 4000;
    let x0 = Matrix::from_fn(n, 2, |_, _| rng.normal());
    let chain = forward_chain(&x0, &VpSchedule::constant(0.05, 30).unwrap(), &mut rng);
    assert_eq!(chain.len(), 31);
    for x in &chain {
        for j in 0..2 {
            let (_, var) = col_stats(x, j);
            assert!((var - 1.0).abs() < 3.0 / (n as f64).sqrt() * 2.0);
        }
    }
}

#[test]
fn forward_chain_tiny_betas_is_identity() {
    let mut rng = RngState::new(2);
    let x0 = Matrix::from_fn(50, 3, |_, _| rng.normal());
    let chain = forward_chain(&x0, &VpSchedule::constant(1e-14, 10).unwrap(), &mut rng);
    assert!(chain[10].sub(&x0).unwrap().max_abs() < 1e-5);
}

#[test]
fn forward_chain_point_mass_moments() {
    let mut rng = RngState::new(3);
    let n = 20_000;
    let c = 2.0;
    let sched = VpSchedule::constant(0.05, 20).unwrap();
    let x0 = Matrix::from_fn(n, 1, |_, _| c);
    let chain = forward_chain(&x0, &sched, &mut rng);
    let (mean, var) = col_stats(&chain[20], 0);
    let ab = sched.alpha_bar(20);
    assert!((mean - ab.sqrt() * c).abs() < 0.03);
    assert!((var - (1.0 - ab)).abs() < 0.03);
}

#[test]
fn ou_marginal_cases() {
    let g = FullGaussian::new(vec![1.0, -2.0], Matrix::from_rows(&[[2.0, 0.3], [0.3, 0.5]]).unwrap()).unwrap();
    assert_eq!(ou_marginal(&g, 0.0).unwrap(), g);
    let far = ou_marginal(&g, 20.0).unwrap();
    assert!(far.mean().iter().all(|m| m.abs() < 1e-8));
    assert!(far.cov().sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-8);
    let point = FullGaussian::isotropic(vec![3.0], 1e-12).unwrap();
    let m = ou_marginal(&point, 1.0).unwrap();
    assert!((m.mean()[0] - 3.0 * (-1.0f64).exp()).abs() < 1e-12);
    assert!((m.cov()[(0, 0)] - 0.8647).abs() < 1e-4);
    assert!(ou_marginal(&g, -1.0).is_err());
}

#[test]
fn ou_marginal_agrees_with_chain_clock() {
    // the chain law at step n from N(m, v) equals the OU marginal at s_n
    let sched = VpSchedule::constant(0.03, 25).unwrap();
    let g = FullGaussian::isotropic(vec![1.5], 0.4).unwrap();
    let n = 25;
    let ab = sched.alpha_bar(n);
    let m = ou_marginal(&g, sched.ou_time(n)).unwrap();
    assert!((m.mean()[0] - ab.sqrt() * 1.5).abs() < 1e-12);
    assert!((m.cov()[(0, 0)] - (ab * 0.4 + 1.0 - ab)).abs() < 1e-12);
}

fn two_modes(d: usize, sep: f64, var: f64) -> GaussianMixture {
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    a[0] = -sep;
    b[0] = sep;
    GaussianMixture::new(
        vec![0.5, 0.5],
        vec![
            FullGaussian::isotropic(a, var).unwrap(),
            FullGaussian::isotropic(b, var).unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn mixture_validation() {
    let g = FullGaussian::standard(1);
    assert!(GaussianMixture::new(vec![0.5, 0.4], vec![g.clone(), g.clone()]).is_err());
    assert!(GaussianMixture::new(vec![1.0], vec![g.clone(), g.clone()]).is_err());
    assert!(GaussianMixture::new(vec![0.5, 0.5], vec![g, FullGaussian::standard(2)]).is_err());
}

#[test]
fn analytic_score_simple_cases() {
    let g = GaussianMixture::single(FullGaussian::isotropic(vec![1.0, -1.0], 0.5).unwrap());
    let s = analytic_score(&g, &[2.0, 0.0]).unwrap();
    assert!((s[0] + 2.0).abs() < 1e-12 && (s[1] + 2.0).abs() < 1e-12);
    let mix = two_modes(2, 3.0, 1.0);
    let s = analytic_score(&mix, &[0.0, 0.0]).unwrap();
    assert!(s.iter().all(|v| v.abs() < 1e-12));
    assert!(analytic_score(&mix, &[0.0]).is_err());
    // far in the tail: responsibilities still well defined
    let s = analytic_score(&two_modes(1, 3.0, 0.01), &[200.0]).unwrap();
    assert!(s[0].is_finite() && s[0] < 0.0);
}

#[test]
fn analytic_score_matches_finite_differences() {
    let mut rng = RngState::new(4);
    for _ in 0..10 {
        let k = 3;
        let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let comps = (0..k)
            .map(|_| {
                let a = Matrix::from_fn(2, 2, |_, _| 0.5 * rng.normal());
                let cov = a.matmul(&a.transpose()).unwrap().add(&Matrix::identity(2).scale(0.3)).unwrap();
                FullGaussian::new(rng.normal_vec(2), cov).unwrap()
            })
            .collect();
        let mix = GaussianMixture::new(raw.iter().map(|w| w / total).collect(), comps).unwrap();
        let x = rng.normal_vec(2);
        let s = analytic_score(&mix, &x).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            let mut p = x.clone();
            let mut m = x.clone();
            p[j] += h;
            m[j] -= h;
            let fd = (mix.log_density(&p) - mix.log_density(&m)) / (2.0 * h);
            assert!((fd - s[j]).abs() < 1e-6, "{fd} vs {}", s[j]);
        }
    }
}

#[test]
fn reverse_sde_zero_steps_returns_reference_draws() {
    let sched = VpSchedule::from_betas(vec![]).unwrap();
    let score = AnalyticScore::new(two_modes(2, 2.0, 1.0), &sched);
    let out = reverse_sde_sample(&score, &sched, 10, &mut RngState::new(5)).unwrap();
    let mut rng = RngState::new(5);
    let expected = Matrix::from_fn(10, 2, |_, _| rng.normal());
    assert_eq!(out, expected);
}

#[test]
fn reverse_sde_standard_target_stays_standard() {
    let sched = VpSchedule::constant(0.05, 60).unwrap();
    let score = AnalyticScore::new(GaussianMixture::single(FullGaussian::standard(1)), &sched);
    let n = 4000;
    let out = reverse_sde_sample(&score, &sched, n, &mut RngState::new(6)).unwrap();
    let (mean, var) = col_stats(&out, 0);
    let tol = 3.0 / (n as f64).sqrt();
    assert!(mean.abs() < tol && (var - 1.0).abs() < 2.0 * tol, "{mean} {var}");
}

#[test]
fn reverse_sde_gaussian_target_moments() {
    let sched = VpSchedule::default();
    let target = GaussianMixture::single(FullGaussian::isotropic(vec![2.0], 0.25).unwrap());
    let score = AnalyticScore::new(target, &sched);
    let out = reverse_sde_sample(&score, &sched, 4000, &mut RngState::new(7)).unwrap();
    let (mean, var) = col_stats(&out, 0);
    assert!((mean - 2.0).abs() < 0.1, "mean {mean}");
    assert!((var - 0.25).abs() < 0.1, "var {var}");
}

#[test]
fn pf_ode_standard_target_has_no_drift() {
    let sched = VpSchedule::default();
    let score = AnalyticScore::new(GaussianMixture::single(FullGaussian::standard(2)), &sched);
    let mut rng = RngState::new(8);
    for _ in 0..20 {
        let x = rng.normal_vec(2);
        let s = rng.uniform() * sched.horizon();
        let drift = pf_ode_drift(&score, &x, s);
        assert!(drift.iter().all(|v| v.abs() < 1e-6));
    }
}

#[test]
fn pf_ode_gaussian_target_and_determinism() {
    let sched = VpSchedule::default();
    let target = FullGaussian::new(
        vec![1.0, -0.5],
        Matrix::from_rows(&[[0.6, 0.2], [0.2, 0.3]]).unwrap(),
    )
    .unwrap();
    let score = AnalyticScore::new(GaussianMixture::single(target.clone()), &sched);
    let a = pf_ode_sample(&score, 4000, 100, &mut RngState::new(9)).unwrap();
    let b = pf_ode_sample(&score, 4000, 100, &mut RngState::new(9)).unwrap();
    assert_eq!(a, b);
    let fit = FullGaussian::fit(&a).unwrap();
    assert!(w2_gaussian(&fit, &target).unwrap() < 0.05);
}

#[test]
fn score_checkpoint_roundtrip() {
    let sched = VpSchedule::from_betas(vec![0.01, 0.02, 0.125]).unwrap();
    let model = ScoreModel::new(2, &[5], sched, &mut RngState::new(10)).unwrap();
    let mut buf = Vec::new();
    model.write_checkpoint(&mut buf).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("SHIFTGEN-SCORE-1\ndim 2\nschedule 3\n"));
    let back = ScoreModel::read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(back, model);
    assert!(ScoreModel::read_checkpoint(&mut &b"SHIFTGEN-FLOW-1\n"[..]).is_err());
}

#[test]
fn train_dsm_zero_epochs_returns_initialization() {
    let mut rng = RngState::new(11);
    let data = Matrix::from_fn(32, 2, |_, _| rng.normal());
    let sched = VpSchedule::constant(0.05, 50).unwrap();
    let cfg = DsmConfig {
        epochs: 0,
        batch: 8,
        hidden: vec![6],
        ..DsmConfig::default()
    };
    let fit = train_dsm(&data, &sched, &cfg, &mut RngState::new(1)).unwrap();
    let init = ScoreModel::new(2, &[6], sched.clone(), &mut RngState::new(1)).unwrap();
    assert_eq!(fit.model, init);
    assert!(fit.losses.is_empty());
    assert!(train_dsm(&Matrix::zeros(0, 2), &sched, &cfg, &mut rng).is_err());
}
