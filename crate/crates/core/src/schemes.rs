//! Particle approximations of the mean-field equation: the Euler scheme with
//! coefficients frozen at the left grid point, Picard successive
//! approximations, and the Euler scheme driven by a general continuous
//! semimartingale `(M, A)`.
//!
//! Wherever the equation calls for the marginal law, the schemes use the
//! empirical law of the `N` simulated particles at the current grid time.

use rayon::prelude::*;

use crate::diagnostics::sup_sq_error;
use crate::drivers::DriverPath;
use crate::error::{invalid, Error, Result};
use crate::measure::{EmpiricalMeasure, Law};
use crate::mvsde::{Model, StateVector, TimePartition};

/// `N` particle paths on a partition, stored time-major: the cloud at grid
/// point `k` is one contiguous block of `N·d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    partition: TimePartition,
    n_particles: usize,
    dim: usize,
    states: Vec<f64>,
    model_id: String,
}

impl ParticleEnsemble {
    /// Wraps raw time-major states of shape `(n_steps + 1, N, d)`.
    pub fn from_states(partition: TimePartition, n_particles: usize, dim: usize, states: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return invalid("ensemble needs at least one particle and one dimension");
        }
        let expected = (partition.n_steps() + 1) * n_particles * dim;
        if states.len() != expected {
            return invalid(format!("state array has length {}, expected {expected}", states.len()));
        }
        if let Some(pos) = states.iter().position(|v| !v.is_finite()) {
            let per_step = n_particles * dim;
            return Err(Error::BlowUp {
                particle: (pos % per_step) / dim,
                step: pos / per_step,
            });
        }
        Ok(Self {
            partition,
            n_particles,
            dim,
            states,
            model_id: model_id.into(),
        })
    }

    /// Every particle sitting at `x` for all times.
    pub fn constant(partition: TimePartition, n_particles: usize, x: &StateVector, model_id: impl Into<String>) -> Result<Self> {
        let slice: Vec<f64> = (0..n_particles).flat_map(|_| x.as_slice().iter().copied()).collect();
        let states = slice.repeat(partition.n_steps() + 1);
        Self::from_states(partition, n_particles, x.dim(), states, model_id)
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.partition.n_steps()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn state(&self, step: usize, particle: usize) -> &[f64] {
        let off = (step * self.n_particles + particle) * self.dim;
        &self.states[off..off + self.dim]
    }

    /// The particle cloud at grid point `step`, `N·d` values.
    pub fn slice(&self, step: usize) -> &[f64] {
        let w = self.n_particles * self.dim;
        &self.states[step * w..(step + 1) * w]
    }

    pub fn initial(&self) -> &[f64] {
        self.slice(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.slice(self.n_steps())
    }

    pub fn law(&self, step: usize) -> Law<'_> {
        Law::new(self.dim, self.slice(step))
    }

    pub fn marginal(&self, step: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.dim, self.slice(step).to_vec()).expect("ensemble states are finite")
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

fn check_inputs(model: &dyn Model, p: &TimePartition, n_particles: usize, driver: &DriverPath) -> Result<()> {
    if driver.partition() != p {
        return invalid("driver partition differs from the scheme partition");
    }
    if driver.n_particles() != n_particles {
        return invalid(format!("driver has {} particles, scheme asked for {n_particles}", driver.n_particles()));
    }
    if driver.dim() != model.dim() {
        return invalid(format!("driver has dimension {}, model {} has {}", driver.dim(), model.id(), model.dim()));
    }
    Ok(())
}

fn replicate(x0: &StateVector, model: &dyn Model, n_particles: usize) -> Result<Vec<f64>> {
    if x0.dim() != model.dim() {
        return invalid(format!("initial state has dimension {}, model {} has {}", x0.dim(), model.id(), model.dim()));
    }
    Ok((0..n_particles).flat_map(|_| x0.as_slice().iter().copied()).collect())
}

/// One explicit step for the whole cloud:
/// `next_i = x_i + b(t, x_i, law)·ΔA_{i,k} + σ(t, x_i, law)·ΔM_{i,k}`.
/// `frozen` is where the coefficients are evaluated, `base` the state being
/// advanced (they coincide for Euler and differ for Picard).
#[allow(clippy::too_many_arguments)]
fn advance(model: &dyn Model, driver: &DriverPath, step: usize, t: f64, law: &Law<'_>, frozen: &[f64], base: &[f64], next: &mut [f64]) -> Result<()> {
    let d = model.dim();
    next.par_chunks_mut(d).enumerate().for_each_init(
        || (vec![0.0; d], vec![0.0; d * d]),
        |(b, s), (i, out)| {
            let x = &frozen[i * d..(i + 1) * d];
            let y = &base[i * d..(i + 1) * d];
            model.drift(t, x, law, b);
            model.diffusion(t, x, law, s);
            let da = driver.a_increment(i, step);
            let dm = driver.m_increment(i, step);
            for j in 0..d {
                let noise: f64 = s[j * d..(j + 1) * d].iter().zip(dm).map(|(a, w)| a * w).sum();
                out[j] = y[j] + b[j] * da + noise;
            }
        },
    );
    if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            particle: pos / d,
            step: step + 1,
        });
    }
    Ok(())
}

/// Euler scheme from per-particle initial data (`N·d` values) against an
/// arbitrary driver.
pub fn euler_from_initial(model: &dyn Model, initial: &[f64], driver: &DriverPath) -> Result<ParticleEnsemble> {
    let (n_particles, d) = (driver.n_particles(), model.dim());
    if driver.dim() != d {
        return invalid(format!("driver has dimension {}, model {} has {d}", driver.dim(), model.id()));
    }
    if initial.len() != n_particles * d {
        return invalid(format!("initial data has length {}, expected {}", initial.len(), n_particles * d));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return invalid("initial data must be finite");
    }
    let p = driver.partition();
    let w = n_particles * d;
    let mut states = vec![0.0; (p.n_steps() + 1) * w];
    states[..w].copy_from_slice(initial);
    for k in 0..p.n_steps() {
        let (done, rest) = states.split_at_mut((k + 1) * w);
        let cur = &done[k * w..];
        let law = Law::new(d, cur);
        advance(model, driver, k, p.points()[k], &law, cur, cur, &mut rest[..w])?;
    }
    ParticleEnsemble::from_states(p.clone(), n_particles, d, states, model.id())
}

/// Euler scheme for the `N`-particle system driven by Brownian increments.
pub fn euler_particle_system(model: &dyn Model, x0: &StateVector, p: &TimePartition, n_particles: usize, driver: &DriverPath) -> Result<ParticleEnsemble> {
    check_inputs(model, p, n_particles, driver)?;
    euler_from_initial(model, &replicate(x0, model, n_particles)?, driver)
}

/// Euler scheme for `dX = σ dM + b dA` with a general continuous
/// semimartingale driver. The recursion is the same as
/// [`euler_particle_system`]; only the increments differ.
pub fn euler_semimartingale(model: &dyn Model, x0: &StateVector, p: &TimePartition, n_particles: usize, driver: &DriverPath) -> Result<ParticleEnsemble> {
    euler_particle_system(model, x0, p, n_particles, driver)
}

/// Result of [`picard_iterate`]: iterates `X^0, X^1, ...` and the distances
/// `sqrt(sup_sq_error(X^{k+1}, X^k))`.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub iterates: Vec<ParticleEnsemble>,
    pub successive_distances: Vec<f64>,
}

/// The Picard map: integrates the coefficients evaluated along `prev` and its
/// empirical law against the driver, starting from `prev`'s initial data.
pub fn picard_step(model: &dyn Model, prev: &ParticleEnsemble, driver: &DriverPath) -> Result<ParticleEnsemble> {
    let (n_particles, d) = (prev.n_particles(), prev.dim());
    let p = prev.partition();
    check_inputs(model, p, n_particles, driver)?;
    let w = n_particles * d;
    let mut states = vec![0.0; (p.n_steps() + 1) * w];
    states[..w].copy_from_slice(prev.initial());
    for k in 0..p.n_steps() {
        let (done, rest) = states.split_at_mut((k + 1) * w);
        let frozen = prev.slice(k);
        advance(model, driver, k, p.points()[k], &prev.law(k), frozen, &done[k * w..], &mut rest[..w])?;
    }
    ParticleEnsemble::from_states(p.clone(), n_particles, d, states, model.id())
}

/// Picard iteration that hands each iterate to `observe` instead of keeping
/// it; only the current and previous iterates are held in memory. Returns the
/// last iterate and the successive distances. `observe` sees `X^0` first.
#[allow(clippy::too_many_arguments)]
pub fn picard_iterate_with<F>(
    model: &dyn Model,
    x0: &StateVector,
    p: &TimePartition,
    n_particles: usize,
    driver: &DriverPath,
    k_max: usize,
    tol: f64,
    mut observe: F,
) -> Result<(ParticleEnsemble, Vec<f64>)>
where
    F: FnMut(usize, &ParticleEnsemble) -> Result<()>,
{
    if k_max == 0 {
        return invalid("k_max must be at least 1");
    }
    if !(tol >= 0.0) {
        return invalid(format!("tol must be non-negative, got {tol}"));
    }
    check_inputs(model, p, n_particles, driver)?;
    replicate(x0, model, n_particles)?;
    let mut current = ParticleEnsemble::constant(p.clone(), n_particles, x0, model.id())?;
    observe(0, &current)?;
    let mut distances = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let next = picard_step(model, &current, driver)?;
        let dist = sup_sq_error(&next, &current)?.sqrt();
        observe(k, &next)?;
        distances.push(dist);
        current = next;
        if dist <= tol {
            break;
        }
    }
    Ok((current, distances))
}

/// Picard successive approximations `X^0 ≡ x0`,
/// `X^{k+1} = x0 + ∫ b(s, X^k_s, law(X^k_s)) dA_s + ∫ σ(s, X^k_s, law(X^k_s)) dM_s`,
/// all against one driver. Stops after `k_max` iterates or once the
/// successive distance is at most `tol`.
pub fn picard_iterate(
    model: &dyn Model,
    x0: &StateVector,
    p: &TimePartition,
    n_particles: usize,
    driver: &DriverPath,
    k_max: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    let mut iterates = Vec::new();
    let (_, successive_distances) = picard_iterate_with(model, x0, p, n_particles, driver, k_max, tol, |_, e| {
        iterates.push(e.clone());
        Ok(())
    })?;
    Ok(PicardOutcome {
        iterates,
        successive_distances,
    })
}
