//! Sampled checks of the linear-growth and Lipschitz hypotheses.

use super::model::{Model, Regularity};
use super::state::{dist, norm, StateVector};
use crate::error::{invalid, Result};
use crate::measure::{w2_to_dirac0, w2_upper_bound, EmpiricalMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    /// Largest observed `|coef| / (1 + |x| + W_2(μ, δ_0))` over drift and diffusion.
    pub max_ratio: f64,
    /// Number of sample points where either coefficient exceeds the declared constant.
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub declared: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

fn check_samples(model: &dyn Model, states: &[StateVector], measures: &[EmpiricalMeasure], times: &[f64]) -> Result<()> {
    if states.is_empty() || measures.is_empty() || times.is_empty() {
        return invalid("sample lists must be non-empty");
    }
    let d = model.dim();
    if let Some(s) = states.iter().find(|s| s.dim() != d) {
        return invalid(format!("sample state has dimension {}, model has {d}", s.dim()));
    }
    if let Some(m) = measures.iter().find(|m| m.dim() != d) {
        return invalid(format!("sample measure has dimension {}, model has {d}", m.dim()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return invalid(format!("sample time {t} is not finite"));
    }
    Ok(())
}

/// Evaluates the growth ratio of both coefficients over the full product grid
/// `times × states × measures`.
pub fn check_growth(model: &dyn Model, states: &[StateVector], measures: &[EmpiricalMeasure], times: &[f64]) -> Result<GrowthReport> {
    check_samples(model, states, measures, times)?;
    let d = model.dim();
    let c = model.growth_constant();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    let mut report = GrowthReport { max_ratio: 0.0, violations: 0 };
    for mu in measures {
        let law = mu.law();
        let w0 = w2_to_dirac0(mu);
        for &t in times {
            for x in states {
                let scale = 1.0 + x.norm() + w0;
                model.drift(t, x.as_slice(), &law, &mut b);
                model.diffusion(t, x.as_slice(), &law, &mut s);
                let ratio = (norm(&b) / scale).max(norm(&s) / scale);
                // NaN from a coefficient counts as a violation
                if !(ratio <= c * (1.0 + 1e-12)) {
                    report.violations += 1;
                }
                report.max_ratio = report.max_ratio.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
            }
        }
    }
    Ok(report)
}

/// Spot-checks a declared `Lipschitz(L)` tag: over all pairs of sample points
/// `(x, μ), (x', μ')` at a common time, the ratio
/// `|b(t,x,μ) - b(t,x',μ')| / (|x - x'| + W_2(μ, μ'))` (and likewise for `σ`)
/// must not exceed `L·(1 + tolerance)`.
///
/// In `d > 1` the denominator uses an upper bound of `W_2`, which can only
/// lower the ratio, so a reported violation is always genuine.
pub fn check_lipschitz(model: &dyn Model, states: &[StateVector], measures: &[EmpiricalMeasure], times: &[f64], tolerance: f64) -> Result<LipschitzReport> {
    check_samples(model, states, measures, times)?;
    let declared = match model.regularity() {
        Regularity::Lipschitz(l) => l,
        other => return invalid(format!("model {} is tagged {other:?}, not Lipschitz", model.id())),
    };
    let d = model.dim();
    let mut w2 = vec![vec![0.0; measures.len()]; measures.len()];
    for i in 0..measures.len() {
        for j in (i + 1)..measures.len() {
            let w = w2_upper_bound(&measures[i], &measures[j])?;
            w2[i][j] = w;
            w2[j][i] = w;
        }
    }
    let mut report = LipschitzReport {
        declared,
        max_ratio: 0.0,
        violations: 0,
    };
    for &t in times {
        // (drift, diffusion) at every (state, measure) sample
        let mut evals = Vec::with_capacity(states.len() * measures.len());
        for mu in measures {
            let law = mu.law();
            for x in states {
                let mut b = vec![0.0; d];
                let mut s = vec![0.0; d * d];
                model.drift(t, x.as_slice(), &law, &mut b);
                model.diffusion(t, x.as_slice(), &law, &mut s);
                evals.push((b, s));
            }
        }
        let n_states = states.len();
        for p in 0..evals.len() {
            for q in (p + 1)..evals.len() {
                let (mp, xp) = (p / n_states, p % n_states);
                let (mq, xq) = (q / n_states, q % n_states);
                let gap = dist(states[xp].as_slice(), states[xq].as_slice()) + w2[mp][mq];
                if gap <= 0.0 {
                    continue;
                }
                let ratio = (dist(&evals[p].0, &evals[q].0) / gap).max(dist(&evals[p].1, &evals[q].1) / gap);
                if !(ratio <= declared * (1.0 + tolerance)) {
                    report.violations += 1;
                }
                report.max_ratio = report.max_ratio.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
            }
        }
    }
    Ok(report)
}
