//! Error functionals under synchronous coupling, rate fitting, the
//! moment/increment estimates as runtime checks, and the stability
//! experiments (initial data, coefficients, driver).
//!
//! Every comparison pairs particles by index. Two ensembles built from the
//! same driver share their noise particle by particle, so their difference
//! isolates the structural perturbation.

use crate::drivers::{brownian_increments, perturbed_driver, NoiseStream};
use crate::error::{invalid, Error, Result};
use crate::measure::{w2_exact_1d, w2_sliced};
use crate::mvsde::{Model, StateVector, TimePartition};
use crate::schemes::{euler_from_initial, euler_semimartingale, ParticleEnsemble};

/// Grid indices of `a` and `b` at the points of the coarser of the two
/// partitions, which must nest.
fn shared_grid(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<(Vec<usize>, Vec<usize>)> {
    if a.n_particles() != b.n_particles() {
        return invalid(format!("ensembles have {} and {} particles", a.n_particles(), b.n_particles()));
    }
    if a.dim() != b.dim() {
        return invalid(format!("ensembles have dimensions {} and {}", a.dim(), b.dim()));
    }
    if a.n_steps() <= b.n_steps() {
        let ib = b.partition().embedding_of(a.partition())?;
        Ok(((0..=a.n_steps()).collect(), ib))
    } else {
        let ia = a.partition().embedding_of(b.partition())?;
        Ok((ia, (0..=b.n_steps()).collect()))
    }
}

/// Per-particle `max_k |X^A_{i,k} - X^B_{i,k}|²` over the shared grid.
pub fn sup_sq_samples(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<Vec<f64>> {
    let (ia, ib) = shared_grid(a, b)?;
    let (n, d) = (a.n_particles(), a.dim());
    let mut sup = vec![0.0f64; n];
    for (&ka, &kb) in ia.iter().zip(&ib) {
        let (sa, sb) = (a.slice(ka), b.slice(kb));
        for (i, s) in sup.iter_mut().enumerate() {
            let sq: f64 = sa[i * d..(i + 1) * d].iter().zip(&sb[i * d..(i + 1) * d]).map(|(x, y)| (x - y) * (x - y)).sum();
            *s = s.max(sq);
        }
    }
    Ok(sup)
}

/// Monte Carlo estimate of `E[sup_t |X^A_t - X^B_t|²]`:
/// `(1/N) Σ_i max_k |X^A_{i,k} - X^B_{i,k}|²` on the coarser grid.
pub fn sup_sq_error(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    Ok(mean_and_stderr(&sup_sq_samples(a, b)?).0)
}

/// `(1/N) Σ_i |X^A_{i,n} - X^B_{i,n}|²` at the terminal time.
pub fn terminal_sq_error(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    shared_grid(a, b)?;
    let d = a.dim();
    let s: f64 = a.terminal().iter().zip(b.terminal()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / (a.terminal().len() / d) as f64)
}

/// Sample mean and its naive standard error, summed in index order.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln(error)` against `ln(mesh)`.
pub fn fit_rate(mesh_sizes: &[f64], errors: &[f64]) -> Result<f64> {
    if mesh_sizes.len() != errors.len() {
        return invalid(format!("{} mesh sizes but {} errors", mesh_sizes.len(), errors.len()));
    }
    if mesh_sizes.len() < 3 {
        return invalid("need at least three points to fit a rate");
    }
    if let Some(v) = mesh_sizes.iter().chain(errors).find(|v| !(**v > 0.0 && v.is_finite())) {
        return invalid(format!("mesh sizes and errors must be positive, got {v}"));
    }
    let xs: Vec<f64> = mesh_sizes.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return invalid("mesh sizes are all equal");
    }
    Ok(sxy / sxx)
}

/// Grid indices used for pairwise checks: every point when `n <= 64`,
/// otherwise every `ceil(n/64)`-th point plus the last.
pub fn checked_indices(n_steps: usize) -> Vec<usize> {
    const MAX_POINTS: usize = 64;
    let stride = n_steps.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *idx.last().expect("non-empty") != n_steps {
        idx.push(n_steps);
    }
    idx
}

/// `max_{s<t} E|X_t - X_s|^{2p} / |t - s|^p` over the pairs of
/// [`checked_indices`].
pub fn increment_bound_check(e: &ParticleEnsemble, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return invalid(format!("exponent must be at least 1, got {p}"));
    }
    let idx = checked_indices(e.n_steps());
    let times = e.partition().points();
    let (n, d) = (e.n_particles(), e.dim());
    let mut worst = 0.0f64;
    for (a, &s) in idx.iter().enumerate() {
        for &t in &idx[a + 1..] {
            let (xs, xt) = (e.slice(s), e.slice(t));
            let total: f64 = (0..n)
                .map(|i| {
                    let sq: f64 = xt[i * d..(i + 1) * d].iter().zip(&xs[i * d..(i + 1) * d]).map(|(u, v)| (u - v) * (u - v)).sum();
                    sq.powf(p)
                })
                .sum();
            worst = worst.max(total / n as f64 / (times[t] - times[s]).powf(p));
        }
    }
    Ok(worst)
}

/// `E[sup_t |X_t|^{2p}]` estimated over particles.
pub fn moment_check(e: &ParticleEnsemble, p: f64) -> f64 {
    let (n, d) = (e.n_particles(), e.dim());
    let mut sup = vec![0.0f64; n];
    for k in 0..=e.n_steps() {
        let s = e.slice(k);
        for (i, m) in sup.iter_mut().enumerate() {
            let sq: f64 = s[i * d..(i + 1) * d].iter().map(|v| v * v).sum();
            *m = m.max(sq);
        }
    }
    sup.iter().map(|sq| sq.powf(p)).sum::<f64>() / n as f64
}

/// `max_k [W_2(law A_k, law B_k) - (mean_i |A_{i,k} - B_{i,k}|²)^{1/2}]` over
/// the shared grid. Non-positive up to rounding, since the index coupling is
/// one admissible coupling. In `d > 1` the sliced estimate (a lower bound of
/// `W_2`) is used.
pub fn w2_domination_gap(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    let (ia, ib) = shared_grid(a, b)?;
    let d = a.dim();
    let mut gap = f64::NEG_INFINITY;
    for (&ka, &kb) in ia.iter().zip(&ib) {
        let (ma, mb) = (a.marginal(ka), b.marginal(kb));
        let w = if d == 1 {
            w2_exact_1d(&ma, &mb)?
        } else {
            w2_sliced(&ma, &mb, 64, ka as u64)?
        };
        let rms = crate::measure::paired_rms(d, a.slice(ka), b.slice(kb));
        gap = gap.max(w - rms);
    }
    Ok(gap)
}

fn assert_w2_domination(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<()> {
    let gap = w2_domination_gap(a, b)?;
    if gap > 1e-10 {
        return Err(Error::Evaluation(format!("W2 exceeds the coupled mean-square distance by {gap:e}")));
    }
    Ok(())
}

/// One row of a stability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    /// the perturbation parameter (δ, n or ε)
    pub param: f64,
    /// `sup_sq_error` against the unperturbed run
    pub error: f64,
    pub stderr: f64,
    /// mean-square difference at the terminal time
    pub terminal_error: f64,
}

fn compare(param: f64, run: &ParticleEnsemble, reference: &ParticleEnsemble) -> Result<StabilityRow> {
    assert_w2_domination(run, reference)?;
    let (error, stderr) = mean_and_stderr(&sup_sq_samples(run, reference)?);
    Ok(StabilityRow {
        param,
        error,
        stderr,
        terminal_error: terminal_sq_error(run, reference)?,
    })
}

fn replicated(x: &StateVector, n: usize) -> Vec<f64> {
    (0..n).flat_map(|_| x.as_slice().iter().copied()).collect()
}

/// Sensitivity to the initial condition: for each `δ`, the error between the
/// runs from `x + δ·e₁` and from `x` on one Brownian driver.
pub fn stability_initial(model: &dyn Model, x: &StateVector, deltas: &[f64], p: &TimePartition, n_particles: usize, seed: u64) -> Result<Vec<StabilityRow>> {
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return invalid(format!("deltas must be non-negative, got {d}"));
    }
    let driver = brownian_increments(p, n_particles, model.dim(), &NoiseStream::new(seed))?;
    let base = euler_from_initial(model, &replicated(x, n_particles), &driver)?;
    deltas
        .iter()
        .map(|&delta| {
            let run = euler_from_initial(model, &replicated(&x.shifted(0, delta)?, n_particles), &driver)?;
            compare(delta, &run, &base)
        })
        .collect()
}

/// Sensitivity to the coefficients: error between each member of
/// `m_seq` (labelled by its index parameter) and the limit model.
pub fn stability_coefficients(
    m_seq: &[(f64, &dyn Model)],
    m_lim: &dyn Model,
    x: &StateVector,
    p: &TimePartition,
    n_particles: usize,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    if let Some((_, m)) = m_seq.iter().find(|(_, m)| m.dim() != m_lim.dim()) {
        return invalid(format!("model {} has dimension {}, limit has {}", m.id(), m.dim(), m_lim.dim()));
    }
    let driver = brownian_increments(p, n_particles, m_lim.dim(), &NoiseStream::new(seed))?;
    let init = replicated(x, n_particles);
    let limit = euler_from_initial(m_lim, &init, &driver)?;
    m_seq
        .iter()
        .map(|&(label, m)| compare(label, &euler_from_initial(m, &init, &driver)?, &limit))
        .collect()
}

/// Sensitivity to the driver: error between the semimartingale Euler runs on
/// the perturbed driver `(M^ε, A^ε)` and on the base Brownian driver.
#[allow(clippy::too_many_arguments)]
pub fn stability_driver<G, H>(
    model: &dyn Model,
    x: &StateVector,
    p: &TimePartition,
    n_particles: usize,
    seed: u64,
    eps_list: &[f64],
    martingale_tilt: G,
    bv_tilt: H,
) -> Result<Vec<StabilityRow>>
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    let driver = brownian_increments(p, n_particles, model.dim(), &NoiseStream::new(seed))?;
    let base = euler_semimartingale(model, x, p, n_particles, &driver)?;
    eps_list
        .iter()
        .map(|&eps| {
            let perturbed = perturbed_driver(&driver, eps, &martingale_tilt, &bv_tilt)?;
            compare(eps, &euler_semimartingale(model, x, p, n_particles, &perturbed)?, &base)
        })
        .collect()
}

/// Builds an ensemble from scalar paths, for tests and oracles:
/// `paths[i][k]` is particle `i` at grid point `k`.
pub fn ensemble_from_paths(p: &TimePartition, paths: &[Vec<f64>]) -> Result<ParticleEnsemble> {
    let n = paths.len();
    if paths.iter().any(|row| row.len() != p.n_steps() + 1) {
        return invalid("every path needs one value per grid point");
    }
    let states: Vec<f64> = (0..=p.n_steps()).flat_map(|k| paths.iter().map(move |row| row[k])).collect();
    ParticleEnsemble::from_states(p.clone(), n, 1, states, "paths")
}
