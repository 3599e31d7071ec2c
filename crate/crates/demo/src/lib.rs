//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function returns a flat `Float64Array`; the layouts are
//! documented on the plain Rust functions, which are also what the native
//! tests exercise.

use mvlab::diagnostics::fit_rate;
use mvlab::drivers::{brownian_increments, NoiseStream};
use mvlab::experiment::{euler_convergence, picard_study};
use mvlab::models::{from_catalog, ou_moments, MeanFieldOU, MeanFieldOUParams};
use mvlab::mvsde::{build_uniform_partition, StateVector};
use mvlab::schemes::euler_particle_system;
use serde_json::Map;
use wasm_bindgen::prelude::*;

/// Columns per grid point in [`ou_band_table`].
pub const BAND_COLUMNS: usize = 7;

fn ou(a: f64, b_coef: f64, sigma: f64) -> Result<(MeanFieldOU, MeanFieldOUParams), String> {
    let params = MeanFieldOUParams { a, b_coef, sigma, dim: 1 };
    Ok((MeanFieldOU::new(params).map_err(|e| e.to_string())?, params))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

/// Simulates the scalar mean-field OU particle system and summarizes each
/// grid point as `[t, q10, q50, q90, sample mean, exact mean, exact sd]`.
#[allow(clippy::too_many_arguments)]
pub fn ou_band_table(a: f64, b_coef: f64, sigma: f64, x0: f64, horizon: f64, n_steps: usize, particles: usize, seed: u64) -> Result<Vec<f64>, String> {
    let (model, params) = ou(a, b_coef, sigma)?;
    let p = build_uniform_partition(horizon, n_steps).map_err(|e| e.to_string())?;
    let driver = brownian_increments(&p, particles, 1, &NoiseStream::new(seed)).map_err(|e| e.to_string())?;
    let x = StateVector::scalar(x0).map_err(|e| e.to_string())?;
    let run = euler_particle_system(&model, &x, &p, particles, &driver).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity((n_steps + 1) * BAND_COLUMNS);
    for (k, &t) in p.points().iter().enumerate() {
        let mut xs = run.slice(k).to_vec();
        xs.sort_by(f64::total_cmp);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let (m, v) = ou_moments(&params, x0, t);
        out.extend([t, quantile(&xs, 0.1), quantile(&xs, 0.5), quantile(&xs, 0.9), mean, m, v.sqrt()]);
    }
    Ok(out)
}

/// Successive Picard distances for a catalog model (default parameters).
pub fn picard_distances(model_id: &str, x0: f64, horizon: f64, n_steps: usize, particles: usize, iterations: usize, seed: u64) -> Result<Vec<f64>, String> {
    let model = from_catalog(model_id, &Map::new()).map_err(|e| e.to_string())?;
    let x = StateVector::new(vec![x0; model.dim()]).map_err(|e| e.to_string())?;
    let report = picard_study(model.as_ref(), &x, horizon, n_steps, particles, seed, iterations, 0.0).map_err(|e| e.to_string())?;
    Ok(report.rows.iter().map(|r| r.successive_distance).collect())
}

/// Strong Euler error on grids `2^2 .. 2^max_level` against `2^(max_level+1)`
/// for the OU model: `[mesh_0, error_0, mesh_1, error_1, ..., slope]`.
#[allow(clippy::too_many_arguments)]
pub fn ou_convergence(a: f64, b_coef: f64, sigma: f64, x0: f64, horizon: f64, max_level: u32, particles: usize, seed: u64) -> Result<Vec<f64>, String> {
    if !(3..=12).contains(&max_level) {
        return Err(format!("max_level must be in 3..=12, got {max_level}"));
    }
    let (model, _) = ou(a, b_coef, sigma)?;
    let x = StateVector::scalar(x0).map_err(|e| e.to_string())?;
    let levels: Vec<usize> = (2..=max_level).map(|k| 1 << k).collect();
    let report = euler_convergence(&model, &[x], horizon, &levels, 1 << (max_level + 1), particles, seed, None).map_err(|e| e.to_string())?;
    let mesh: Vec<f64> = report.rows.iter().map(|r| r.mesh).collect();
    let errs: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
    let slope = fit_rate(&mesh, &errs).unwrap_or(f64::NAN);
    let mut out: Vec<f64> = mesh.iter().zip(&errs).flat_map(|(m, e)| [*m, *e]).collect();
    out.push(slope);
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = ouBands)]
#[allow(clippy::too_many_arguments)]
pub fn ou_bands(a: f64, b_coef: f64, sigma: f64, x0: f64, horizon: f64, n_steps: usize, particles: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(ou_band_table(a, b_coef, sigma, x0, horizon, n_steps, particles, seed.into()))
}

#[wasm_bindgen(js_name = picardDistances)]
pub fn picard_distances_js(model_id: &str, x0: f64, horizon: f64, n_steps: usize, particles: usize, iterations: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(picard_distances(model_id, x0, horizon, n_steps, particles, iterations, seed.into()))
}

#[wasm_bindgen(js_name = ouConvergence)]
#[allow(clippy::too_many_arguments)]
pub fn ou_convergence_js(a: f64, b_coef: f64, sigma: f64, x0: f64, horizon: f64, max_level: u32, particles: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(ou_convergence(a, b_coef, sigma, x0, horizon, max_level, particles, seed.into()))
}

#[wasm_bindgen(js_name = modelIds)]
pub fn model_ids() -> Vec<String> {
    mvlab::models::CATALOG.iter().map(|(id, _)| id.to_string()).collect()
}
