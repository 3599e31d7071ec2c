//! Catalog of concrete coefficient sets, one per regularity regime, with the
//! closed-form moments of the mean-field Ornstein–Uhlenbeck model as an
//! absolute oracle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{invalid, Error, Result};
use crate::measure::{integrate_law, Law};
use crate::mvsde::{Model, Regularity};

/// `b(t, x, μ) = a·x + b_coef·mean(μ)`, `σ = sigma·I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanFieldOUParams {
    pub a: f64,
    pub b_coef: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl Default for MeanFieldOUParams {
    fn default() -> Self {
        Self {
            a: -1.0,
            b_coef: 0.5,
            sigma: 0.3,
            dim: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldOU {
    pub params: MeanFieldOUParams,
}

impl MeanFieldOU {
    pub fn new(params: MeanFieldOUParams) -> Result<Self> {
        let MeanFieldOUParams { a, b_coef, sigma, dim } = params;
        if !(a.is_finite() && b_coef.is_finite() && sigma.is_finite()) || sigma < 0.0 {
            return invalid(format!("mean-field OU needs finite a, b_coef and sigma >= 0, got ({a}, {b_coef}, {sigma})"));
        }
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        Ok(Self { params })
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.params.a.abs().max(self.params.b_coef.abs())
    }
}

impl Model for MeanFieldOU {
    fn id(&self) -> String {
        "mean_field_ou".into()
    }
    fn dim(&self) -> usize {
        self.params.dim
    }
    fn regularity(&self) -> Regularity {
        Regularity::Lipschitz(self.lipschitz_constant())
    }
    fn growth_constant(&self) -> f64 {
        self.lipschitz_constant().max(self.params.sigma * (self.params.dim as f64).sqrt())
    }
    fn drift(&self, _t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        for ((o, xi), m) in out.iter_mut().zip(x).zip(law.mean()) {
            *o = self.params.a * xi + self.params.b_coef * m;
        }
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &Law<'_>, out: &mut [f64]) {
        identity_into(out, self.params.dim, self.params.sigma);
    }
}

fn identity_into(out: &mut [f64], d: usize, scale: f64) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..d {
        out[j * d + j] = scale;
    }
}

/// Mean and variance at time `t` of the scalar mean-field OU solution started
/// at `x0`. The mean solves `m' = (a + b_coef)·m`; the centred process is a
/// plain OU process with rate `a`.
pub fn ou_moments(params: &MeanFieldOUParams, x0: f64, t: f64) -> (f64, f64) {
    let MeanFieldOUParams { a, b_coef, sigma, .. } = *params;
    let mean = x0 * ((a + b_coef) * t).exp();
    let variance = if a == 0.0 {
        sigma * sigma * t
    } else {
        sigma * sigma * (2.0 * a * t).exp_m1() / (2.0 * a)
    };
    (mean, variance)
}

/// Interaction kernels for the linear-in-law drift `b(t,x,μ) = ∫ K(x, y) μ(dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `K(x, y) = strength·(y - x)`
    Attraction { strength: f64 },
    /// `K(x, y) = sin(y - x)` componentwise
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McKeanKernelParams {
    pub kernel: Kernel,
    pub dim: usize,
}

/// McKean model with identity diffusion and drift `∫ K(x, y) μ(dy)`.
#[derive(Debug, Clone)]
pub struct McKeanKernel {
    pub params: McKeanKernelParams,
}

impl McKeanKernel {
    pub fn new(params: McKeanKernelParams) -> Result<Self> {
        if params.dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if let Kernel::Attraction { strength } = params.kernel {
            if !strength.is_finite() {
                return invalid("attraction strength must be finite");
            }
        }
        Ok(Self { params })
    }

    pub fn kernel(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self.params.kernel {
            Kernel::Attraction { strength } => x.iter().zip(y).map(|(a, b)| strength * (b - a)).collect(),
            Kernel::Sine => x.iter().zip(y).map(|(a, b)| (b - a).sin()).collect(),
        }
    }

    fn name(&self) -> &'static str {
        match self.params.kernel {
            Kernel::Attraction { .. } => "attraction",
            Kernel::Sine => "sine",
        }
    }
}

impl Model for McKeanKernel {
    fn id(&self) -> String {
        format!("mckean_kernel:{}", self.name())
    }
    fn dim(&self) -> usize {
        self.params.dim
    }
    fn regularity(&self) -> Regularity {
        match self.params.kernel {
            Kernel::Attraction { strength } => Regularity::Lipschitz(strength.abs()),
            Kernel::Sine => Regularity::Lipschitz(1.0),
        }
    }
    fn growth_constant(&self) -> f64 {
        let identity_norm = (self.params.dim as f64).sqrt();
        match self.params.kernel {
            Kernel::Attraction { strength } => strength.abs().max(identity_norm),
            Kernel::Sine => identity_norm,
        }
    }
    fn drift(&self, _t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        match integrate_law(law, |y| self.kernel(x, y)) {
            Ok(v) => out.copy_from_slice(&v),
            // surfaces as a blow-up in the scheme
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &Law<'_>, out: &mut [f64]) {
        identity_into(out, self.params.dim, 1.0);
    }
}

const KAPPA_KNEE: f64 = 0.1353352832366127; // e^{-2}

fn kappa(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u <= KAPPA_KNEE {
        -u * u.ln()
    } else {
        // tangent at the knee: κ(e⁻²) = 2e⁻², κ'(e⁻²) = 1
        u + KAPPA_KNEE
    }
}

/// Osgood modulus `κ(u) = u·ln(1/u)` on `(0, e⁻²]`, continued by its tangent
/// line beyond `e⁻²`, with `κ(0) = 0`. Strictly increasing and concave, and
/// `∫_{0+} du/κ(u) = ∞`.
pub fn osgood_kappa(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return invalid(format!("κ is defined on [0, ∞), got {u}"));
    }
    Ok(kappa(u))
}

/// `κ_h(u)`: the chord `u·κ(h)/h` below `h`, `κ(u)` above. Lipschitz with
/// constant `κ(h)/h` and within `κ(h)` of `κ` uniformly.
pub fn mollified_kappa(u: f64, h: f64) -> f64 {
    if u < h {
        u * kappa(h) / h
    } else {
        kappa(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OsgoodDriftParams {
    /// weight of the mean-field term
    pub c: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    /// when set, `κ` is replaced by its Lipschitz mollification at this scale
    pub mollify: Option<f64>,
}

impl Default for OsgoodDriftParams {
    fn default() -> Self {
        Self {
            c: 0.5,
            sigma0: 0.3,
            sigma1: 0.1,
            mollify: None,
        }
    }
}

/// Scalar model `b(t,x,μ) = -sign(x)·κ(|x|) + c·mean(μ)`,
/// `σ(t,x) = sigma0 + sigma1·sin(x)`. The drift is not Lipschitz at `0`.
#[derive(Debug, Clone)]
pub struct OsgoodDrift {
    pub params: OsgoodDriftParams,
}

impl OsgoodDrift {
    pub fn new(params: OsgoodDriftParams) -> Result<Self> {
        let OsgoodDriftParams { c, sigma0, sigma1, mollify } = params;
        if !(c.is_finite() && sigma0.is_finite() && sigma1.is_finite()) {
            return invalid("osgood drift parameters must be finite");
        }
        if let Some(h) = mollify {
            if !(h > 0.0 && h.is_finite()) {
                return invalid(format!("mollification scale must be positive, got {h}"));
            }
        }
        Ok(Self { params })
    }

    pub fn mollified(&self, h: f64) -> Result<Self> {
        Self::new(OsgoodDriftParams {
            mollify: Some(h),
            ..self.params
        })
    }

    fn modulus(&self, u: f64) -> f64 {
        match self.params.mollify {
            Some(h) => mollified_kappa(u, h),
            None => kappa(u),
        }
    }
}

impl Model for OsgoodDrift {
    fn id(&self) -> String {
        match self.params.mollify {
            Some(h) => format!("osgood_drift[h={h}]"),
            None => "osgood_drift".into(),
        }
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        match self.params.mollify {
            Some(h) => {
                let slope = (kappa(h) / h).max(1.0);
                Regularity::Lipschitz(slope.max(self.params.c.abs()).max(self.params.sigma1.abs()))
            }
            None => Regularity::Osgood(kappa),
        }
    }
    fn growth_constant(&self) -> f64 {
        1.0f64.max(self.params.c.abs()).max(self.params.sigma0.abs() + self.params.sigma1.abs())
    }
    fn drift(&self, _t: f64, x: &[f64], law: &Law<'_>, out: &mut [f64]) {
        let x = x[0];
        let restoring = if x == 0.0 { 0.0 } else { -x.signum() * self.modulus(x.abs()) };
        out[0] = restoring + self.params.c * law.mean()[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], _law: &Law<'_>, out: &mut [f64]) {
        out[0] = self.params.sigma0 + self.params.sigma1 * x[0].sin();
    }
}

/// `b ≡ 0`, `σ ≡ I`: the particles are independent Brownian motions.
#[derive(Debug, Clone, Copy)]
pub struct BrownianMotion {
    pub dim: usize,
}

impl Model for BrownianMotion {
    fn id(&self) -> String {
        "brownian".into()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn regularity(&self) -> Regularity {
        Regularity::Lipschitz(0.0)
    }
    fn growth_constant(&self) -> f64 {
        (self.dim as f64).sqrt()
    }
    fn drift(&self, _t: f64, _x: &[f64], _law: &Law<'_>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &Law<'_>, out: &mut [f64]) {
        identity_into(out, self.dim, 1.0);
    }
}

/// Catalog identifiers with a one-line description.
pub const CATALOG: &[(&str, &str)] = &[
    ("mean_field_ou", "b = a·x + b_coef·mean(μ), σ = sigma·I   params: a, b_coef, sigma, dim"),
    ("mckean_kernel:attraction", "b = ∫ strength·(y - x) μ(dy), σ = I   params: strength, dim"),
    ("mckean_kernel:sine", "b = ∫ sin(y - x) μ(dy), σ = I   params: dim"),
    (
        "osgood_drift",
        "b = -sign(x)·κ(|x|) + c·mean(μ), σ = sigma0 + sigma1·sin(x)   params: c, sigma0, sigma1, mollify",
    ),
    ("brownian", "b = 0, σ = I   params: dim"),
];

fn parse<T: serde::de::DeserializeOwned>(id: &str, params: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| Error::Config(format!("params for model {id}: {e}")))
}

fn dim_only(id: &str, params: &Map<String, Value>, allowed: &[&str]) -> Result<usize> {
    if let Some(k) = params.keys().find(|k| k.as_str() != "dim" && !allowed.contains(&k.as_str())) {
        return Err(Error::Config(format!("params for model {id}: unknown key `{k}`")));
    }
    match params.get("dim") {
        None => Ok(1),
        Some(v) => v
            .as_u64()
            .filter(|&d| d >= 1)
            .map(|d| d as usize)
            .ok_or_else(|| Error::Config(format!("params for model {id}: `dim` must be a positive integer"))),
    }
}

/// Builds a catalog model from its identifier and a JSON parameter object.
pub fn from_catalog(id: &str, params: &Map<String, Value>) -> Result<Arc<dyn Model>> {
    let model: Arc<dyn Model> = match id {
        "mean_field_ou" => Arc::new(MeanFieldOU::new(parse(id, params)?)?),
        "osgood_drift" => Arc::new(OsgoodDrift::new(parse(id, params)?)?),
        "brownian" => Arc::new(BrownianMotion {
            dim: dim_only(id, params, &[])?,
        }),
        "mckean_kernel:sine" => Arc::new(McKeanKernel::new(McKeanKernelParams {
            kernel: Kernel::Sine,
            dim: dim_only(id, params, &[])?,
        })?),
        "mckean_kernel:attraction" => {
            let dim = dim_only(id, params, &["strength"])?;
            let strength = match params.get("strength") {
                None => 1.0,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::Config(format!("params for model {id}: `strength` must be a number")))?,
            };
            Arc::new(McKeanKernel::new(McKeanKernelParams {
                kernel: Kernel::Attraction { strength },
                dim,
            })?)
        }
        other => return Err(Error::Config(format!("unknown model `{other}` (see `mvlab list-models`)"))),
    };
    Ok(model)
}
