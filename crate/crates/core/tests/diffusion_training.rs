use shiftgen_core::diffusion::{
    analytic_score, pf_ode_sample, reverse_sde_sample, train_dsm, AnalyticScore, DsmConfig,
    GaussianMixture, TimeScore, VpSchedule,
};
use shiftgen_core::metrics::permutation_test;
use shiftgen_core::transport::w2_assignment;
use shiftgen_core::{FullGaussian, Matrix, RngState};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn dsm_on_gaussian_data_learns_the_score() {
    let mut rng = RngState::new(21);
    let data = Matrix::from_fn(2000, 2, |_, _| rng.normal());
    let sched = VpSchedule::default();
    let cfg = DsmConfig {
        epochs: 60,
        batch: 100,
        hidden: vec![32, 32],
        ..DsmConfig::default()
    };
    let fit = train_dsm(&data, &sched, &cfg, &mut rng).unwrap();
    // the weighted loss has a floor near d·mean(ᾱ_n) and the first few
    // dozen steps already approach it, so the initial window is short
    let head = median(&fit.losses[..5]);
    let tail = median(&fit.losses[fit.losses.len() - 50..]);
    assert!(tail < 0.5 * head, "{head} -> {tail}");

    let exact = AnalyticScore::new(GaussianMixture::single(FullGaussian::standard(2)), &sched);
    let mut sims = Vec::new();
    for n in [sched.len() / 4, sched.len() / 2, 3 * sched.len() / 4] {
        let s = sched.ou_time(n);
        for _ in 0..100 {
            let x = rng.normal_vec(2);
            sims.push(cosine(&fit.model.score(&x, s), &exact.score(&x, s)));
        }
    }
    let mean_sim = sims.iter().sum::<f64>() / sims.len() as f64;
    assert!(mean_sim > 0.9, "cosine {mean_sim}");
}

#[test]
fn dsm_on_two_modes_gets_score_signs() {
    let mix = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![
            FullGaussian::isotropic(vec![-3.0], 0.25).unwrap(),
            FullGaussian::isotropic(vec![3.0], 0.25).unwrap(),
        ],
    )
    .unwrap();
    let mut rng = RngState::new(22);
    let data = mix.sample(&mut rng, 2000).unwrap();
    let sched = VpSchedule::default();
    let cfg = DsmConfig {
        epochs: 60,
        batch: 100,
        hidden: vec![32, 32],
        ..DsmConfig::default()
    };
    let fit = train_dsm(&data, &sched, &cfg, &mut rng).unwrap();
    // moderate noise: the marginal is still clearly bimodal
    let n = sched.len() / 8;
    let s = sched.ou_time(n);
    let marginal = mix.ou_marginal(s).unwrap();
    let grid: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).filter(|x| x.abs() > 0.05).collect();
    let agree = grid
        .iter()
        .filter(|&&x| {
            let a = analytic_score(&marginal, &[x]).unwrap()[0];
            let b = fit.model.score(&[x], s)[0];
            a.signum() == b.signum()
        })
        .count();
    assert!(agree as f64 >= 0.9 * grid.len() as f64, "{agree}/{}", grid.len());
}

#[test]
fn sde_and_ode_samplers_share_marginals() {
    let target = FullGaussian::new(
        vec![1.0, -1.0],
        Matrix::from_rows(&[[1.0, 0.6], [0.6, 0.8]]).unwrap(),
    )
    .unwrap();
    let sched = VpSchedule::default();
    let score = AnalyticScore::new(GaussianMixture::single(target.clone()), &sched);
    let mut rng = RngState::new(23);
    let ode = pf_ode_sample(&score, 4000, 100, &mut rng).unwrap();
    let sde = reverse_sde_sample(&score, &sched, 4000, &mut rng).unwrap();
    let k = 200;
    let idx: Vec<usize> = (0..k).collect();
    let (a, b) = (ode.select_rows(&idx), sde.select_rows(&idx));
    let stat = |x: &Matrix, y: &Matrix| w2_assignment(x, y).map(|r| r.0);
    let test = permutation_test(&a, &b, stat, 99, &mut rng).unwrap();
    assert!(test.p_value > 0.05, "p = {}", test.p_value);

    // and the mutual distance is on the scale of two independent target draws
    let t1 = target.sample(&mut rng, k).unwrap();
    let t2 = target.sample(&mut rng, k).unwrap();
    let baseline = stat(&t1, &t2).unwrap();
    assert!(test.statistic < 2.0 * baseline, "{} vs {baseline}", test.statistic);
}
