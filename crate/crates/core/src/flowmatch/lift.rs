use super::model::{FlowModel, Regressor};
use crate::error::{Error, Result};
use crate::ndmath::{Matrix, RngState};
use crate::net::cosine_lr;

/// Particle positions on a shared, strictly increasing time grid in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle {
    times: Vec<f64>,
    positions: Vec<Matrix>,
}

impl TrajectoryBundle {
    pub fn new(times: Vec<f64>, positions: Vec<Matrix>) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() {
            return Err(Error::shape("TrajectoryBundle", times.len(), positions.len()));
        }
        if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidArgument("bundle times must lie in [0, 1]".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("bundle times must be strictly increasing".into()));
        }
        let shape = positions[0].shape();
        if positions.iter().any(|p| p.shape() != shape) {
            return Err(Error::InvalidArgument("all bundle clouds must share a shape".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bundle position".into()));
        }
        Ok(Self { times, positions })
    }

    /// Straight-line bundle from `start` (t = 0) to `end` (t = 1).
    pub fn from_endpoints(start: &Matrix, end: &Matrix) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![start.clone(), end.clone()])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Matrix] {
        &self.positions
    }

    pub fn particles(&self) -> usize {
        self.positions[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].cols()
    }

    pub fn initial(&self) -> &Matrix {
        &self.positions[0]
    }

    pub fn terminal(&self) -> &Matrix {
        self.positions.last().expect("nonempty")
    }

    /// Finite-difference velocity at every grid node, in units of the
    /// normalized time `s = (t - t₀)/(t_K - t₀)`: central differences at
    /// interior nodes, one-sided at the two ends.
    pub fn node_velocities(&self) -> Result<Vec<Matrix>> {
        let k = self.times.len();
        if k < 2 {
            return Err(Error::InvalidArgument(
                "a bundle needs at least two times to define velocities".into(),
            ));
        }
        let span = self.times[k - 1] - self.times[0];
        let s: Vec<f64> = self.times.iter().map(|t| (t - self.times[0]) / span).collect();
        let diff = |a: usize, b: usize| -> Matrix {
            self.positions[b]
                .sub(&self.positions[a])
                .expect("shapes checked")
                .scale(1.0 / (s[b] - s[a]))
        };
        Ok((0..k)
            .map(|j| match j {
                0 => diff(0, 1),
                j if j == k - 1 => diff(k - 2, k - 1),
                j => diff(j - 1, j + 1),
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftConfig {
    /// Passes over the particles, `particles / batch` steps each.
    pub epochs: usize,
    pub batch: usize,
    /// Initial Adam step, decayed along a cosine to `lr_min`.
    pub lr: f64,
    pub lr_min: f64,
    pub hidden: Vec<usize>,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch: 64,
            lr: 2e-3,
            lr_min: 1e-5,
            hidden: vec![64, 64],
        }
    }
}

/// Fits a continuous velocity field to a particle bundle.
///
/// Training pairs are `(position, time) → velocity` with time drawn
/// uniformly over the grid span: positions interpolate the bundle linearly
/// between nodes, targets interpolate the finite-difference node velocities.
/// Time is normalized so the returned model carries the initial cloud
/// (`t = 0`) to the terminal cloud (`t = 1`) under forward integration.
pub fn lift_particles(
    bundle: &TrajectoryBundle,
    cfg: &LiftConfig,
    rng: &mut RngState,
) -> Result<(FlowModel, Vec<f64>)> {
    let velocities = bundle.node_velocities()?;
    let n = bundle.particles();
    let d = bundle.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty bundle".into()));
    }
    let batch = cfg.batch.clamp(1, n);
    let k = bundle.times.len();
    let span = bundle.times[k - 1] - bundle.times[0];
    let s: Vec<f64> = bundle.times.iter().map(|t| (t - bundle.times[0]) / span).collect();

    let mut model = FlowModel::new(d, 0, &cfg.hidden, rng)?;
    model.ode.direction = super::ode::Direction::Forward;
    let mut reg = Regressor::new(&model.net, cfg.lr);
    let total = cfg.epochs * (n / batch);
    let mut losses = Vec::with_capacity(total);
    let mut point = vec![0.0; d];
    let mut target = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(batch).filter(|c| c.len() == batch) {
            reg.begin();
            let mut loss = 0.0;
            for &i in chunk {
                let t = rng.uniform();
                let seg = s.partition_point(|&x| x <= t).clamp(1, k - 1) - 1;
                let w = (t - s[seg]) / (s[seg + 1] - s[seg]);
                let (p0, p1) = (bundle.positions[seg].row(i), bundle.positions[seg + 1].row(i));
                let (v0, v1) = (velocities[seg].row(i), velocities[seg + 1].row(i));
                for j in 0..d {
                    point[j] = (1.0 - w) * p0[j] + w * p1[j];
                    target[j] = (1.0 - w) * v0[j] + w * v1[j];
                }
                loss += reg.accumulate(&model.net, &point, t, &[], &target, 1.0 / batch as f64);
            }
            losses.push(loss);
            if !loss.is_finite() {
                let step = losses.len() - 1;
                return Err(Error::Diverged { step, trace: losses });
            }
            reg.set_lr(cosine_lr(cfg.lr, cfg.lr_min, losses.len() - 1, total));
            reg.apply(&mut model.net);
        }
    }
    Ok((model, losses))
}
