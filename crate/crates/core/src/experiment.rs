//! Config-driven experiment runner.
//!
//! A JSON config names an experiment, a catalog model and the run sizes; the
//! runner produces a CSV table and a JSON summary, and [`run_to_dir`] writes
//! them next to a manifest. CSV output depends only on the config and seed,
//! never on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::diagnostics::{
    fit_rate, increment_bound_check, mean_and_stderr, moment_check, stability_coefficients, stability_driver, stability_initial, sup_sq_error, sup_sq_samples,
    w2_domination_gap, StabilityRow,
};
use crate::drivers::{aggregate_to_coarse, brownian_increments, NoiseStream};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::models::{from_catalog, ou_moments, MeanFieldOU, MeanFieldOUParams, OsgoodDrift, OsgoodDriftParams};
use crate::mvsde::{build_uniform_partition, check_growth, check_lipschitz, Model, Regularity, StateVector};
use crate::schemes::{euler_particle_system, picard_iterate_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EulerConvergence,
    Picard,
    StabilityInitial,
    StabilityCoeffs,
    StabilityDriver,
    PropertySuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::EulerConvergence => "euler_convergence",
            Self::Picard => "picard",
            Self::StabilityInitial => "stability_initial",
            Self::StabilityCoeffs => "stability_coeffs",
            Self::StabilityDriver => "stability_driver",
            Self::PropertySuite => "property_suite",
        }
    }
}

/// A single grid size or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepsSpec {
    One(usize),
    Many(Vec<usize>),
}

impl StepsSpec {
    pub fn as_vec(&self) -> Vec<usize> {
        match self {
            StepsSpec::One(n) => vec![*n],
            StepsSpec::Many(v) => v.clone(),
        }
    }
}

/// Initial state: a scalar is broadcast to every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl InitialSpec {
    fn state(&self, dim: usize) -> Result<StateVector> {
        let coords = match self {
            InitialSpec::Scalar(v) => vec![*v; dim],
            InitialSpec::Vector(v) if v.len() == dim => v.clone(),
            InitialSpec::Vector(v) => return Err(Error::Config(format!("options.x0 has {} coordinates, model dimension is {dim}", v.len()))),
        };
        StateVector::new(coords).map_err(|e| Error::Config(format!("options.x0: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tilt {
    Zero,
    One,
    Sin,
    Cos,
    /// `g(t) = t`
    Time,
}

impl Tilt {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Tilt::Zero => 0.0,
            Tilt::One => 1.0,
            Tilt::Sin => t.sin(),
            Tilt::Cos => t.cos(),
            Tilt::Time => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientFamily {
    /// mean-field OU with `a_n = a + 1/n`
    OuShiftA,
    /// osgood drift with `κ` mollified at scale `1/n`
    OsgoodMollified,
}

/// Experiment-specific knobs; every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<InitialSpec>,
    /// initial states over which `euler_convergence` maximizes the error
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_set: Option<Vec<InitialSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<CoefficientFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale_tilt: Option<Tilt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bv_tilt: Option<Tilt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: StepsSpec,
    pub particles: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

impl ExperimentConfig {
    /// Parses and validates a config. Syntax errors carry serde's line and
    /// column; semantic errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn build_model(&self) -> Result<Arc<dyn Model>> {
        from_catalog(&self.model, &self.params).map_err(|e| match e {
            Error::InvalidArgument(msg) => config_err("params", msg),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config_err("T", format!("must be positive, got {}", self.horizon)));
        }
        let steps = self.n_steps.as_vec();
        if steps.is_empty() || steps.contains(&0) {
            return Err(config_err("n_steps", "must be a positive integer or a non-empty list of them"));
        }
        if self.particles == 0 {
            return Err(config_err("particles", "must be at least 1"));
        }
        let model = self.build_model()?;
        self.x0(model.dim())?;
        let o = &self.options;
        match self.experiment {
            ExperimentKind::EulerConvergence => {
                if let Some(set) = &o.x0_set {
                    if set.is_empty() {
                        return Err(config_err("options.x0_set", "must not be empty"));
                    }
                    for x in set {
                        x.state(model.dim())?;
                    }
                }
                let reference = self.reference_n_steps();
                let fine = build_uniform_partition(self.horizon, reference)?;
                for n in &steps {
                    if !fine.refines(&build_uniform_partition(self.horizon, *n)?) {
                        return Err(config_err("options.reference_n_steps", format!("{reference} steps do not refine {n} steps")));
                    }
                }
            }
            ExperimentKind::Picard => {
                if o.iterations == Some(0) {
                    return Err(config_err("options.iterations", "must be at least 1"));
                }
                if o.tol.is_some_and(|t| !(t >= 0.0)) {
                    return Err(config_err("options.tol", "must be non-negative"));
                }
            }
            ExperimentKind::StabilityInitial => {
                if self.deltas().iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    return Err(config_err("options.deltas", "entries must be non-negative"));
                }
            }
            ExperimentKind::StabilityCoeffs => {
                let family = o.family.ok_or_else(|| config_err("options.family", "required for stability_coeffs"))?;
                let expected = match family {
                    CoefficientFamily::OuShiftA => "mean_field_ou",
                    CoefficientFamily::OsgoodMollified => "osgood_drift",
                };
                if self.model != expected {
                    return Err(config_err(
                        "options.family",
                        format!("{family:?} needs model `{expected}`, got `{}`", self.model),
                    ));
                }
                if self.sequence().contains(&0) {
                    return Err(config_err("options.sequence", "entries must be positive"));
                }
            }
            ExperimentKind::StabilityDriver => {
                if self.eps_list().iter().any(|e| !e.is_finite()) {
                    return Err(config_err("options.eps", "entries must be finite"));
                }
            }
            ExperimentKind::PropertySuite => {}
        }
        Ok(())
    }

    fn x0(&self, dim: usize) -> Result<StateVector> {
        self.options.x0.clone().unwrap_or(InitialSpec::Scalar(1.0)).state(dim)
    }

    fn n_single(&self) -> usize {
        *self.n_steps.as_vec().last().expect("validated non-empty")
    }

    fn reference_n_steps(&self) -> usize {
        self.options
            .reference_n_steps
            .unwrap_or_else(|| 2 * self.n_steps.as_vec().into_iter().max().unwrap_or(1))
    }

    fn deltas(&self) -> Vec<f64> {
        self.options.deltas.clone().unwrap_or_else(|| (0..6).map(|k| 0.5 / f64::from(1 << k)).collect())
    }

    fn sequence(&self) -> Vec<usize> {
        self.options.sequence.clone().unwrap_or_else(|| (0..7).map(|k| 1 << k).collect())
    }

    fn eps_list(&self) -> Vec<f64> {
        self.options.eps.clone().unwrap_or_else(|| (0..5).map(|k| 0.2 / f64::from(1 << k)).collect())
    }
}

/// CSV text plus a JSON summary of derived quantities.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub csv: String,
    pub summary: Value,
}

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub mesh: f64,
    /// `sup_sq_error` against the reference, maximized over the initial states
    pub error: f64,
    pub stderr: f64,
}

/// Terminal sample moments of the reference run against the closed-form
/// mean-field OU moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCheck {
    pub x0: f64,
    pub sample_mean: f64,
    pub mean_stderr: f64,
    pub exact_mean: f64,
    pub sample_variance: f64,
    pub exact_variance: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub reference_n_steps: usize,
    pub slope: Option<f64>,
    pub oracle: Vec<OracleCheck>,
}

/// Strong error of the Euler particle scheme on each grid against the
/// reference grid, all runs sharing one fine Brownian driver aggregated to
/// each level. With several initial states the error is the maximum over
/// them. Given the OU parameters of a scalar model, the terminal moments of
/// each reference run are compared with the closed form.
#[allow(clippy::too_many_arguments)]
pub fn euler_convergence(
    model: &dyn Model,
    x0_set: &[StateVector],
    horizon: f64,
    levels: &[usize],
    reference_n_steps: usize,
    particles: usize,
    seed: u64,
    ou_oracle: Option<&MeanFieldOUParams>,
) -> Result<ConvergenceReport> {
    if x0_set.is_empty() || levels.is_empty() {
        return Err(Error::InvalidArgument("need at least one initial state and one grid".into()));
    }
    let fine_p = build_uniform_partition(horizon, reference_n_steps)?;
    let fine = brownian_increments(&fine_p, particles, model.dim(), &NoiseStream::new(seed))?;
    let coarse: Vec<_> = levels
        .iter()
        .map(|&n| {
            let p = build_uniform_partition(horizon, n)?;
            let d = aggregate_to_coarse(&fine, &p)?;
            Ok((p, d))
        })
        .collect::<Result<_>>()?;
    let mut best: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); levels.len()];
    let mut oracle = Vec::new();
    for x0 in x0_set {
        let reference = euler_particle_system(model, x0, &fine_p, particles, &fine)?;
        if let Some(params) = ou_oracle.filter(|p| p.dim == 1) {
            let (mean, se) = mean_and_stderr(reference.terminal());
            let var = sample_variance(reference.terminal(), mean);
            let (exact_mean, exact_variance) = ou_moments(params, x0.as_slice()[0], horizon);
            oracle.push(OracleCheck {
                x0: x0.as_slice()[0],
                sample_mean: mean,
                mean_stderr: se,
                exact_mean,
                sample_variance: var,
                exact_variance,
            });
        }
        for (slot, (p, d)) in best.iter_mut().zip(&coarse) {
            let run = euler_particle_system(model, x0, p, particles, d)?;
            let (err, se) = mean_and_stderr(&sup_sq_samples(&run, &reference)?);
            if err > slot.0 {
                *slot = (err, se);
            }
        }
    }
    let rows: Vec<ConvergenceRow> = levels
        .iter()
        .zip(&coarse)
        .zip(&best)
        .map(|((&n, (p, _)), &(error, stderr))| ConvergenceRow {
            n_steps: n,
            mesh: p.mesh(),
            error,
            stderr,
        })
        .collect();
    let slope = if rows.len() >= 3 && rows.iter().all(|r| r.error > 0.0) {
        Some(fit_rate(
            &rows.iter().map(|r| r.mesh).collect::<Vec<_>>(),
            &rows.iter().map(|r| r.error).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(ConvergenceReport {
        rows,
        reference_n_steps,
        slope,
        oracle,
    })
}

fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (xs.len().max(2) - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardRow {
    pub iterate: usize,
    pub successive_distance: f64,
    pub moment_p2: f64,
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub rows: Vec<PicardRow>,
    /// `E[sup|X^0|⁴]` of the constant starting path
    pub initial_moment_p2: f64,
    /// `sup_sq_error` between the last iterate and the Euler run on the same driver
    pub euler_gap: f64,
}

/// Picard iteration on a uniform grid with `E[sup|X^k|⁴]` per iterate and the
/// distance of the last iterate to the Euler scheme on the same driver.
#[allow(clippy::too_many_arguments)]
pub fn picard_study(
    model: &dyn Model,
    x0: &StateVector,
    horizon: f64,
    n_steps: usize,
    particles: usize,
    seed: u64,
    iterations: usize,
    tol: f64,
) -> Result<PicardReport> {
    let p = build_uniform_partition(horizon, n_steps)?;
    let driver = brownian_increments(&p, particles, model.dim(), &NoiseStream::new(seed))?;
    let mut moments = Vec::new();
    let (last, distances) = picard_iterate_with(model, x0, &p, particles, &driver, iterations, tol, |_, e| {
        moments.push(moment_check(e, 2.0));
        Ok(())
    })?;
    let euler = euler_particle_system(model, x0, &p, particles, &driver)?;
    let rows = distances
        .iter()
        .enumerate()
        .map(|(k, &d)| PicardRow {
            iterate: k + 1,
            successive_distance: d,
            moment_p2: moments[k + 1],
        })
        .collect();
    Ok(PicardReport {
        rows,
        initial_moment_p2: moments[0],
        euler_gap: sup_sq_error(&last, &euler)?,
    })
}

/// A limit model and the members converging to it, labelled by `n`.
pub type Family = (Arc<dyn Model>, Vec<(f64, Arc<dyn Model>)>);

/// Members of a coefficient family for each `n` in `sequence`.
pub fn coefficient_family(family: CoefficientFamily, params: &Map<String, Value>, sequence: &[usize]) -> Result<Family> {
    match family {
        CoefficientFamily::OuShiftA => {
            let base: MeanFieldOUParams = serde_json::from_value(Value::Object(params.clone())).map_err(|e| config_err("params", e))?;
            let limit: Arc<dyn Model> = Arc::new(MeanFieldOU::new(base)?);
            let seq = sequence
                .iter()
                .map(|&n| {
                    let m: Arc<dyn Model> = Arc::new(MeanFieldOU::new(MeanFieldOUParams {
                        a: base.a + 1.0 / n as f64,
                        ..base
                    })?);
                    Ok((n as f64, m))
                })
                .collect::<Result<_>>()?;
            Ok((limit, seq))
        }
        CoefficientFamily::OsgoodMollified => {
            let base: OsgoodDriftParams = serde_json::from_value(Value::Object(params.clone())).map_err(|e| config_err("params", e))?;
            let limit = OsgoodDrift::new(OsgoodDriftParams { mollify: None, ..base })?;
            let seq = sequence
                .iter()
                .map(|&n| {
                    let m: Arc<dyn Model> = Arc::new(limit.mollified(1.0 / n as f64)?);
                    Ok((n as f64, m))
                })
                .collect::<Result<_>>()?;
            Ok((Arc::new(limit), seq))
        }
    }
}

fn stability_csv(param: &str, rows: &[StabilityRow], integer_param: bool) -> String {
    csv_table(
        &[param, "error", "stderr", "terminal_error"],
        rows.iter().map(|r| {
            let p = if integer_param { format!("{}", r.param as u64) } else { fmt_f64(r.param) };
            vec![p, fmt_f64(r.error), fmt_f64(r.stderr), fmt_f64(r.terminal_error)]
        }),
    )
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Runs the configured experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let m = model.as_ref();
    let x0 = cfg.x0(m.dim())?;
    let o = &cfg.options;
    match cfg.experiment {
        ExperimentKind::EulerConvergence => {
            let set = match &o.x0_set {
                Some(set) => set.iter().map(|x| x.state(m.dim())).collect::<Result<Vec<_>>>()?,
                None => vec![x0],
            };
            let ou = match cfg.model.as_str() {
                "mean_field_ou" => Some(serde_json::from_value::<MeanFieldOUParams>(Value::Object(cfg.params.clone())).map_err(|e| config_err("params", e))?),
                _ => None,
            };
            let report = euler_convergence(
                m,
                &set,
                cfg.horizon,
                &cfg.n_steps.as_vec(),
                cfg.reference_n_steps(),
                cfg.particles,
                cfg.seed,
                ou.as_ref(),
            )?;
            let csv = csv_table(
                &["n_steps", "mesh", "sup_sq_error", "stderr"],
                report
                    .rows
                    .iter()
                    .map(|r| vec![r.n_steps.to_string(), fmt_f64(r.mesh), fmt_f64(r.error), fmt_f64(r.stderr)]),
            );
            let errors: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
            let summary = json!({
                "slope": report.slope,
                "reference_n_steps": report.reference_n_steps,
                "strictly_decreasing": strictly_decreasing(&errors),
                "oracle": report.oracle,
            });
            Ok(Outcome { csv, summary })
        }
        ExperimentKind::Picard => {
            let report = picard_study(
                m,
                &x0,
                cfg.horizon,
                cfg.n_single(),
                cfg.particles,
                cfg.seed,
                o.iterations.unwrap_or(8),
                o.tol.unwrap_or(0.0),
            )?;
            let csv = csv_table(
                &["iterate", "successive_distance", "moment_p2"],
                report
                    .rows
                    .iter()
                    .map(|r| vec![r.iterate.to_string(), fmt_f64(r.successive_distance), fmt_f64(r.moment_p2)]),
            );
            let summary = json!({ "euler_gap": report.euler_gap, "initial_moment_p2": report.initial_moment_p2 });
            Ok(Outcome { csv, summary })
        }
        ExperimentKind::StabilityInitial => {
            let p = build_uniform_partition(cfg.horizon, cfg.n_single())?;
            let deltas = cfg.deltas();
            let rows = stability_initial(m, &x0, &deltas, &p, cfg.particles, cfg.seed)?;
            let positive: Vec<&StabilityRow> = rows.iter().filter(|r| r.param > 0.0 && r.error > 0.0).collect();
            let slope = if positive.len() >= 3 {
                Some(fit_rate(
                    &positive.iter().map(|r| r.param).collect::<Vec<_>>(),
                    &positive.iter().map(|r| r.error).collect::<Vec<_>>(),
                )?)
            } else {
                None
            };
            Ok(Outcome {
                csv: stability_csv("delta", &rows, false),
                summary: json!({ "slope": slope }),
            })
        }
        ExperimentKind::StabilityCoeffs => {
            let family = o.family.expect("validated");
            let (limit, seq) = coefficient_family(family, &cfg.params, &cfg.sequence())?;
            let refs: Vec<(f64, &dyn Model)> = seq.iter().map(|(n, m)| (*n, m.as_ref())).collect();
            let p = build_uniform_partition(cfg.horizon, cfg.n_single())?;
            let rows = stability_coefficients(&refs, limit.as_ref(), &x0, &p, cfg.particles, cfg.seed)?;
            let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
            Ok(Outcome {
                csv: stability_csv("n", &rows, true),
                summary: json!({ "strictly_decreasing": strictly_decreasing(&errors) }),
            })
        }
        ExperimentKind::StabilityDriver => {
            let p = build_uniform_partition(cfg.horizon, cfg.n_single())?;
            let (g, h) = (o.martingale_tilt.unwrap_or(Tilt::One), o.bv_tilt.unwrap_or(Tilt::Sin));
            let rows = stability_driver(m, &x0, &p, cfg.particles, cfg.seed, &cfg.eps_list(), |t| g.eval(t), |t| h.eval(t))?;
            let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
            Ok(Outcome {
                csv: stability_csv("eps", &rows, false),
                summary: json!({ "strictly_decreasing": strictly_decreasing(&errors) }),
            })
        }
        ExperimentKind::PropertySuite => property_suite(m, &x0, cfg),
    }
}

/// Hypothesis spot checks and the moment/increment estimates for one model.
fn property_suite(m: &dyn Model, x0: &StateVector, cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = m.dim();
    let stream = NoiseStream::new(cfg.seed);
    let states: Vec<StateVector> = (0..100)
        .map(|i| StateVector::new((0..d).map(|j| 3.0 * stream.normal(i, 0, j)).collect()))
        .collect::<Result<_>>()?;
    let measures: Vec<EmpiricalMeasure> = (0..20u64)
        .map(|k| EmpiricalMeasure::new(d, (0..(1 + k as usize % 7) * d).map(|q| 2.0 * stream.normal(1000 + k, q as u64, 0)).collect()))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = (0..5).map(|k| cfg.horizon * k as f64 / 4.0).collect();

    let mut rows: Vec<(String, f64, f64, bool)> = Vec::new();
    let growth = check_growth(m, &states, &measures, &times)?;
    rows.push(("growth_max_ratio".into(), growth.max_ratio, m.growth_constant(), growth.violations == 0));
    if let Regularity::Lipschitz(l) = m.regularity() {
        let lip = check_lipschitz(m, &states[..12], &measures[..6], &times, 1e-9)?;
        rows.push(("lipschitz_max_ratio".into(), lip.max_ratio, l, lip.violations == 0));
    }
    let p = build_uniform_partition(cfg.horizon, cfg.n_single())?;
    let driver = brownian_increments(&p, cfg.particles, d, &stream)?;
    let run = euler_particle_system(m, x0, &p, cfg.particles, &driver)?;
    let incr = increment_bound_check(&run, 2.0)?;
    rows.push(("increment_ratio_p2".into(), incr, f64::INFINITY, incr.is_finite()));
    let moment = moment_check(&run, 2.0);
    rows.push(("moment_p2".into(), moment, f64::INFINITY, moment.is_finite()));
    let shifted = euler_particle_system(m, &x0.shifted(0, 0.1)?, &p, cfg.particles, &driver)?;
    let gap = w2_domination_gap(&shifted, &run)?;
    rows.push(("w2_domination_gap".into(), gap, 1e-10, gap <= 1e-10));
    let csv = csv_table(
        &["check", "value", "threshold", "pass"],
        rows.iter().map(|(name, v, t, ok)| vec![name.clone(), fmt_f64(*v), fmt_f64(*t), ok.to_string()]),
    );
    let all_pass = rows.iter().all(|r| r.3);
    Ok(Outcome {
        csv,
        summary: json!({ "all_pass": all_pass }),
    })
}

/// Paths of the files written by [`run_to_dir`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub outcome: Outcome,
}

/// Runs the experiment and writes `<experiment>.csv` and `manifest.json`
/// (config echo, seed, version, thread count, wall time, summary).
pub fn run_to_dir(cfg: &ExperimentConfig, output_dir: &Path) -> Result<Artifacts> {
    let start = Instant::now();
    let outcome = execute(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    fs::create_dir_all(output_dir)?;
    let csv = output_dir.join(format!("{}.csv", cfg.experiment.name()));
    fs::write(&csv, &outcome.csv)?;
    let manifest = output_dir.join("manifest.json");
    let body = json!({
        "config": cfg,
        "seed": cfg.seed,
        "versions": { "mvlab": env!("CARGO_PKG_VERSION") },
        "threads": rayon::current_num_threads(),
        "wall_time_seconds": wall,
        "csv": csv.file_name().map(|f| f.to_string_lossy().into_owned()),
        "summary": outcome.summary,
    });
    let mut text = serde_json::to_string_pretty(&body).map_err(|e| Error::Evaluation(e.to_string()))?;
    let _ = writeln!(text);
    fs::write(&manifest, text)?;
    Ok(Artifacts { csv, manifest, outcome })
}
