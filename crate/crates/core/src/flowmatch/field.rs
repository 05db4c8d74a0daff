use crate::ndmath::{Matrix, dot};

/// A time-dependent vector field `v(x, t; c)` on `R^d`.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    /// Length of the context vector the field expects (0 when unconditional).
    fn context_dim(&self) -> usize {
        0
    }

    fn velocity_into(&self, x: &[f64], t: f64, context: &[f64], out: &mut [f64]);

    fn velocity(&self, x: &[f64], t: f64, context: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.velocity_into(x, t, context, &mut out);
        out
    }

    /// `∇·v` at `(x, t)`. The default uses central differences with step
    /// `1e-5`; implementors with an exact Jacobian override it.
    fn divergence(&self, x: &[f64], t: f64, context: &[f64]) -> f64 {
        let h = 1e-5;
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        let mut div = 0.0;
        for k in 0..d {
            xp[k] = x[k] + h;
            self.velocity_into(&xp, t, context, &mut plus);
            xp[k] = x[k] - h;
            self.velocity_into(&xp, t, context, &mut minus);
            xp[k] = x[k];
            div += (plus[k] - minus[k]) / (2.0 * h);
        }
        div
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn context_dim(&self) -> usize {
        (**self).context_dim()
    }
    fn velocity_into(&self, x: &[f64], t: f64, context: &[f64], out: &mut [f64]) {
        (**self).velocity_into(x, t, context, out)
    }
    fn divergence(&self, x: &[f64], t: f64, context: &[f64]) -> f64 {
        (**self).divergence(x, t, context)
    }
}

/// `v ≡ c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField {
    pub value: Vec<f64>,
}

impl ConstantField {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }

    pub fn zero(d: usize) -> Self {
        Self { value: vec![0.0; d] }
    }
}

impl VelocityField for ConstantField {
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn velocity_into(&self, _x: &[f64], _t: f64, _c: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
    fn divergence(&self, _x: &[f64], _t: f64, _c: &[f64]) -> f64 {
        0.0
    }
}

/// Time-independent affine field `v(x) = A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineField {
    pub linear: Matrix,
    pub offset: Vec<f64>,
}

impl AffineField {
    pub fn new(linear: Matrix, offset: Vec<f64>) -> Self {
        assert!(linear.is_square() && linear.rows() == offset.len());
        Self { linear, offset }
    }
}

impl VelocityField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }
    fn velocity_into(&self, x: &[f64], _t: f64, _c: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.linear.row(i), x) + self.offset[i];
        }
    }
    fn divergence(&self, _x: &[f64], _t: f64, _c: &[f64]) -> f64 {
        self.linear.trace()
    }
}

/// Field given by a closure `f(x, t, out)`.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn velocity_into(&self, x: &[f64], t: f64, _c: &[f64], out: &mut [f64]) {
        (self.f)(x, t, out)
    }
}
