use std::fmt;
use std::sync::Arc;

use crate::measure::Law;

/// Declared regularity class of a model's coefficients. The tag is a claim;
/// [`check_lipschitz`](super::check_lipschitz) can falsify a `Lipschitz` tag
/// on sample grids but nothing proves it.
#[derive(Clone, Copy)]
pub enum Regularity {
    Lipschitz(f64),
    UniformlyContinuous,
    /// Osgood-type modulus `κ` bounding the drift's variation in `x`.
    Osgood(fn(f64) -> f64),
}

impl fmt::Debug for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularity::Lipschitz(l) => write!(f, "Lipschitz({l})"),
            Regularity::UniformlyContinuous => f.write_str("UniformlyContinuous"),
            Regularity::Osgood(_) => f.write_str("Osgood(κ)"),
        }
    }
}

/// Coefficients `(b, σ)` of a mean-field SDE on `R^d`.
///
/// `drift` writes `d` values into `out`; `diffusion` writes the `d × d`
/// matrix in row-major order. Implementations must be pure functions of
/// their arguments: the schemes evaluate them concurrently across particles.
pub trait Model: Send + Sync {
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn regularity(&self) -> Regularity;

    /// Constant `C` of the linear-growth bound `|b|, |σ| <= C(1 + |x| + W_2(μ, δ_0))`.
    fn growth_constant(&self) -> f64;

    fn drift(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]);

    fn diffusion(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]);
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn regularity(&self) -> Regularity {
        (**self).regularity()
    }
    fn growth_constant(&self) -> f64 {
        (**self).growth_constant()
    }
    fn drift(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (**self).drift(t, x, law, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (**self).diffusion(t, x, law, out)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn regularity(&self) -> Regularity {
        (**self).regularity()
    }
    fn growth_constant(&self) -> f64 {
        (**self).growth_constant()
    }
    fn drift(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (**self).drift(t, x, law, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (**self).diffusion(t, x, law, out)
    }
}

type CoefFn = dyn Fn(f64, &[f64], &Law<'_>, &mut [f64]) + Send + Sync;

/// A model assembled from closures, for ad-hoc coefficients in experiments
/// and tests.
pub struct FnModel {
    id: String,
    dim: usize,
    regularity: Regularity,
    growth_constant: f64,
    drift: Box<CoefFn>,
    diffusion: Box<CoefFn>,
}

impl FnModel {
    pub fn new<B, S>(id: impl Into<String>, dim: usize, drift: B, diffusion: S) -> Self
    where
        B: Fn(f64, &[f64], &Law<'_>, &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &Law<'_>, &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            dim,
            regularity: Regularity::UniformlyContinuous,
            growth_constant: 1.0,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        }
    }

    /// Scalar model with state-only coefficients `b(x)` and `σ(x)`.
    pub fn scalar(id: impl Into<String>, drift: impl Fn(f64) -> f64 + Send + Sync + 'static, diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(id, 1, move |_, x, _, out| out[0] = drift(x[0]), move |_, x, _, out| out[0] = diffusion(x[0]))
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn with_growth_constant(mut self, c: f64) -> Self {
        self.growth_constant = c;
        self
    }
}

impl Model for FnModel {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn regularity(&self) -> Regularity {
        self.regularity
    }
    fn growth_constant(&self) -> f64 {
        self.growth_constant
    }
    fn drift(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (self.drift)(t, x, law, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        (self.diffusion)(t, x, law, out)
    }
}

/// Wraps a model and overrides its declared regularity tag.
pub struct Relabeled<M> {
    pub inner: M,
    pub regularity: Regularity,
}

impl<M: Model> Model for Relabeled<M> {
    fn id(&self) -> String {
        self.inner.id()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn regularity(&self) -> Regularity {
        self.regularity
    }
    fn growth_constant(&self) -> f64 {
        self.inner.growth_constant()
    }
    fn drift(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        self.inner.drift(t, x, law, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        self.inner.diffusion(t, x, law, out)
    }
}
