use rayon::prelude::*;

use super::field::VelocityField;
use crate::error::{Error, Result};
use crate::ndmath::{FullGaussian, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown integrator {other:?}"))),
        }
    }
}

/// `Forward` integrates `t: 0 → 1`, `Reverse` integrates `t: 1 → 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OdeConfig {
    pub integrator: Integrator,
    pub steps: usize,
    pub direction: Direction,
}

impl OdeConfig {
    pub fn new(integrator: Integrator, steps: usize, direction: Direction) -> Self {
        Self {
            integrator,
            steps,
            direction,
        }
    }

    pub fn rk4(steps: usize, direction: Direction) -> Self {
        Self::new(Integrator::Rk4, steps, direction)
    }

    pub fn reversed(self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        };
        Self { direction, ..self }
    }

    fn interval(&self) -> (f64, f64) {
        match self.direction {
            Direction::Forward => (0.0, 1.0),
            Direction::Reverse => (1.0, 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("ODE steps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self::rk4(64, Direction::Forward)
    }
}

fn check_dims<F: VelocityField + ?Sized>(field: &F, x: &[f64], context: &[f64]) -> Result<()> {
    if x.len() != field.dim() {
        return Err(Error::shape("integrate state", field.dim(), x.len()));
    }
    if context.len() != field.context_dim() {
        return Err(Error::shape("integrate context", field.context_dim(), context.len()));
    }
    Ok(())
}

/// One explicit step of size `h` from `(x, t)`, in place.
fn step<F: VelocityField + ?Sized>(
    field: &F,
    integrator: Integrator,
    x: &mut [f64],
    t: f64,
    h: f64,
    context: &[f64],
    scratch: &mut [Vec<f64>; 5],
) {
    let d = x.len();
    match integrator {
        Integrator::Euler => {
            let k1 = &mut scratch[0];
            field.velocity_into(x, t, context, k1);
            for i in 0..d {
                x[i] += h * k1[i];
            }
        }
        Integrator::Rk4 => {
            let [k1, k2, k3, k4, tmp] = scratch;
            field.velocity_into(x, t, context, k1);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            field.velocity_into(tmp, t + 0.5 * h, context, k2);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            field.velocity_into(tmp, t + 0.5 * h, context, k3);
            for i in 0..d {
                tmp[i] = x[i] + h * k3[i];
            }
            field.velocity_into(tmp, t + h, context, k4);
            for i in 0..d {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

fn scratch(d: usize) -> [Vec<f64>; 5] {
    std::array::from_fn(|_| vec![0.0; d])
}

/// Integrates `ẋ = v(x, t)` from `t0` to `t1` (either order) in `steps`
/// uniform steps.
pub fn integrate_interval<F: VelocityField + ?Sized>(
    field: &F,
    x: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    integrator: Integrator,
    context: &[f64],
) -> Result<Vec<f64>> {
    check_dims(field, x, context)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("ODE steps must be at least 1".into()));
    }
    let h = (t1 - t0) / steps as f64;
    let mut state = x.to_vec();
    let mut s = scratch(x.len());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        step(field, integrator, &mut state, t, h, context, &mut s);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "integrate",
                step: k,
            });
        }
    }
    Ok(state)
}

/// Terminal state of the flow of `field` started at `x`, over the unit
/// interval in the configured direction.
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    x: &[f64],
    cfg: &OdeConfig,
    context: Option<&[f64]>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (t0, t1) = cfg.interval();
    integrate_interval(field, x, t0, t1, cfg.steps, cfg.integrator, context.unwrap_or(&[]))
}

/// Row-wise [`integrate`]: the pushforward of the empirical measure of
/// `cloud`. `contexts`, when given, supplies one context row per particle.
pub fn push<F: VelocityField + ?Sized>(
    field: &F,
    cloud: &Matrix,
    cfg: &OdeConfig,
    contexts: Option<&Matrix>,
) -> Result<Matrix> {
    cfg.validate()?;
    if let Some(c) = contexts {
        if c.rows() != cloud.rows() {
            return Err(Error::shape("push contexts", cloud.rows(), c.rows()));
        }
    }
    let rows: Vec<Vec<f64>> = (0..cloud.rows())
        .into_par_iter()
        .map(|i| integrate(field, cloud.row(i), cfg, contexts.map(|c| c.row(i))))
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

/// Positions of each particle on the uniform grid of the configured
/// integration: `steps + 1` clouds, the first being `cloud` itself.
pub fn trajectories<F: VelocityField + ?Sized>(
    field: &F,
    cloud: &Matrix,
    cfg: &OdeConfig,
) -> Result<(Vec<f64>, Vec<Matrix>)> {
    cfg.validate()?;
    let (t0, t1) = cfg.interval();
    let h = (t1 - t0) / cfg.steps as f64;
    let times: Vec<f64> = (0..=cfg.steps).map(|k| t0 + k as f64 * h).collect();
    let mut clouds = vec![cloud.clone()];
    let mut current = cloud.clone();
    let mut s = scratch(cloud.cols());
    for (k, &tk) in times[..cfg.steps].iter().enumerate() {
        for i in 0..current.rows() {
            step(field, cfg.integrator, current.row_mut(i), tk, h, &[], &mut s);
        }
        if !current.is_finite() {
            return Err(Error::NonFinite {
                context: "trajectories",
                step: k,
            });
        }
        clouds.push(current.clone());
    }
    Ok((times, clouds))
}

/// Log-density of `x` under the model that transports `reference` (at
/// `t = 1`) to data (at `t = 0`).
///
/// The state is integrated forward from the data side, `t: 0 → 1`, jointly
/// with `∫ ∇·v dt` (instantaneous change of variables); the result is
/// `log q(x(1)) + ∫₀¹ ∇·v(x(t), t) dt`. Only the integrator and step count
/// of `cfg` are used.
pub fn log_likelihood<F: VelocityField + ?Sized>(
    field: &F,
    x: &[f64],
    cfg: &OdeConfig,
    reference: &FullGaussian,
    context: Option<&[f64]>,
) -> Result<f64> {
    cfg.validate()?;
    let context = context.unwrap_or(&[]);
    check_dims(field, x, context)?;
    if reference.dim() != x.len() {
        return Err(Error::shape("log_likelihood reference", x.len(), reference.dim()));
    }
    let d = x.len();
    let h = 1.0 / cfg.steps as f64;
    let mut state = x.to_vec();
    let mut acc = 0.0;
    let mut s = scratch(d);
    for k in 0..cfg.steps {
        let t = k as f64 * h;
        match cfg.integrator {
            Integrator::Euler => {
                acc += h * field.divergence(&state, t, context);
                step(field, Integrator::Euler, &mut state, t, h, context, &mut s);
            }
            Integrator::Rk4 => {
                // RK4 on the augmented system (x, ℓ) with ℓ' = ∇·v(x, t).
                let [k1, k2, k3, k4, tmp] = &mut s;
                field.velocity_into(&state, t, context, k1);
                let l1 = field.divergence(&state, t, context);
                for i in 0..d {
                    tmp[i] = state[i] + 0.5 * h * k1[i];
                }
                field.velocity_into(tmp, t + 0.5 * h, context, k2);
                let l2 = field.divergence(tmp, t + 0.5 * h, context);
                for i in 0..d {
                    tmp[i] = state[i] + 0.5 * h * k2[i];
                }
                field.velocity_into(tmp, t + 0.5 * h, context, k3);
                let l3 = field.divergence(tmp, t + 0.5 * h, context);
                for i in 0..d {
                    tmp[i] = state[i] + h * k3[i];
                }
                field.velocity_into(tmp, t + h, context, k4);
                let l4 = field.divergence(tmp, t + h, context);
                for i in 0..d {
                    state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                acc += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            }
        }
        if !acc.is_finite() || state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "log_likelihood",
                step: k,
            });
        }
    }
    Ok(reference.log_density(&state) + acc)
}
