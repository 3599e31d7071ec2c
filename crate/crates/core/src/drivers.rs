//! Driving noise: addressable Gaussian variates and the increments of the
//! semimartingale pair `(M, A)` consumed by the schemes.
//!
//! Every variate is addressed by `(seed, particle, step, component)` rather
//! than drawn from a shared sequential generator, so a driver is bitwise
//! reproducible regardless of how particles are scheduled across threads.

use std::io::{self, Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mvsde::TimePartition;

const MAX_COMPONENTS: usize = 1 << 16;
const MAX_PARTICLES: u64 = 1 << 48;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Counter-addressed source of standard normal variates.
///
/// Backed by ChaCha8: `(particle, component)` selects the stream and the
/// step index selects the word position, so a run of consecutive steps is
/// read without seeking. Each variate consumes two 64-bit words through the
/// Box–Muller transform.
#[derive(Clone)]
pub struct NoiseStream {
    seed: u64,
    base: ChaCha8Rng,
}

impl std::fmt::Debug for NoiseStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseStream").field("seed", &self.seed).finish()
    }
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn cursor(&self, particle: u64, component: usize, step: u64) -> ChaCha8Rng {
        assert!(particle < MAX_PARTICLES, "particle index {particle} out of range");
        assert!(component < MAX_COMPONENTS, "component index {component} out of range");
        let mut rng = self.base.clone();
        rng.set_stream((particle << 16) | component as u64);
        rng.set_word_pos(4 * step as u128);
        rng
    }

    /// The variate at address `(particle, step, component)`.
    pub fn normal(&self, particle: u64, step: u64, component: usize) -> f64 {
        box_muller(&mut self.cursor(particle, component, step))
    }

    /// Writes the variates for `steps` consecutive steps starting at
    /// `first_step` into `out[k * stride]`.
    pub fn fill(&self, particle: u64, component: usize, first_step: u64, steps: usize, out: &mut [f64], stride: usize) {
        let mut rng = self.cursor(particle, component, first_step);
        for k in 0..steps {
            out[k * stride] = box_muller(&mut rng);
        }
    }

    /// A direction uniform on the unit sphere of `R^d`, indexed by `j`.
    pub fn unit_direction(&self, j: u64, d: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|c| self.normal(j, 0, c)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // probability zero; move to a disjoint address range
            return self.unit_direction(j + MAX_PARTICLES / 2, d);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE; // (0, 1]
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE; // [0, 1)
    (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
}

/// Per-particle increments of a continuous semimartingale `dM` (martingale
/// part, `R^d`) and `dA` (bounded-variation part, scalar) on a partition.
/// `dA = dt` and `dM = dB` recovers the Brownian-driven equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    partition: TimePartition,
    n_particles: usize,
    dim: usize,
    /// shape (N, n_steps, d), row-major
    m: Vec<f64>,
    /// shape (N, n_steps)
    a: Vec<f64>,
    total_variation_a: Vec<f64>,
}

impl DriverPath {
    pub fn from_parts(partition: TimePartition, n_particles: usize, dim: usize, m: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return invalid("driver needs at least one particle and one dimension");
        }
        let n = partition.n_steps();
        if m.len() != n_particles * n * dim {
            return invalid(format!("martingale increments have length {}, expected {}", m.len(), n_particles * n * dim));
        }
        if a.len() != n_particles * n {
            return invalid(format!("bounded-variation increments have length {}, expected {}", a.len(), n_particles * n));
        }
        if m.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("driver increments must be finite".into()));
        }
        let total_variation_a = total_variation(&a, n);
        Ok(Self {
            partition,
            n_particles,
            dim,
            m,
            a,
            total_variation_a,
        })
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

    /// `ΔM_{i,k}` in `R^d`.
    pub fn m_increment(&self, particle: usize, step: usize) -> &[f64] {
        let off = (particle * self.n_steps() + step) * self.dim;
        &self.m[off..off + self.dim]
    }

    /// `ΔA_{i,k}`.
    pub fn a_increment(&self, particle: usize, step: usize) -> f64 {
        self.a[particle * self.n_steps() + step]
    }

    pub fn m_increments(&self) -> &[f64] {
        &self.m
    }

    pub fn a_increments(&self) -> &[f64] {
        &self.a
    }

    pub fn total_variation_a(&self, particle: usize) -> f64 {
        self.total_variation_a[particle]
    }

    /// Whether the stored total variations agree with the increments.
    pub fn is_consistent(&self) -> bool {
        total_variation(&self.a, self.n_steps()) == self.total_variation_a
    }

    /// Driver whose particle `i` is particle `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_steps();
        let mut seen = vec![false; self.n_particles];
        if perm.len() != self.n_particles || perm.iter().any(|&p| p >= self.n_particles || std::mem::replace(&mut seen[p], true)) {
            return invalid("not a permutation of the particle indices");
        }
        let mut m = Vec::with_capacity(self.m.len());
        let mut a = Vec::with_capacity(self.a.len());
        for &p in perm {
            m.extend_from_slice(&self.m[p * n * self.dim..(p + 1) * n * self.dim]);
            a.extend_from_slice(&self.a[p * n..(p + 1) * n]);
        }
        Self::from_parts(self.partition.clone(), self.n_particles, self.dim, m, a)
    }

    /// Little-endian dump: magic `MVDRV1`, then `N`, `n`, `d` as `u64`, then
    /// the `(N, n, d)` martingale increments and the `(N, n)` bounded-variation
    /// increments as `f64`, both row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in [self.n_particles, self.n_steps(), self.dim] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in self.m.iter().chain(&self.a) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads a dump written by [`write_to`](Self::write_to). The partition is
    /// not stored and must have the dumped number of steps.
    pub fn read_from<R: Read>(mut r: R, partition: TimePartition) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return invalid("not a driver dump (bad magic)");
        }
        let mut word = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut word)?;
            *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::InvalidArgument("dimension overflow".into()))?;
        }
        let [n_particles, n_steps, dim] = dims;
        if n_steps != partition.n_steps() {
            return invalid(format!("dump has {n_steps} steps, partition has {}", partition.n_steps()));
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut word)?;
                out.push(f64::from_le_bytes(word));
            }
            Ok(out)
        };
        let m = read_vec(n_particles * n_steps * dim)?;
        let a = read_vec(n_particles * n_steps)?;
        Self::from_parts(partition, n_particles, dim, m, a)
    }
}

pub const DUMP_MAGIC: &[u8; 6] = b"MVDRV1";

fn total_variation(a: &[f64], n_steps: usize) -> Vec<f64> {
    a.chunks_exact(n_steps.max(1)).map(|row| row.iter().map(|v| v.abs()).sum()).collect()
}

/// Brownian increments `ΔB_{i,k,j} = sqrt(t_{k+1} - t_k) · Z(seed, i, k, j)`
/// with `ΔA_{i,k} = t_{k+1} - t_k`.
pub fn brownian_increments(p: &TimePartition, n_particles: usize, dim: usize, stream: &NoiseStream) -> Result<DriverPath> {
    if n_particles == 0 || dim == 0 {
        return invalid("need at least one particle and one dimension");
    }
    if dim > MAX_COMPONENTS {
        return invalid(format!("dimension {dim} exceeds {MAX_COMPONENTS}"));
    }
    let n = p.n_steps();
    let sqrt_dt: Vec<f64> = (0..n).map(|k| p.dt(k).sqrt()).collect();
    let mut m = vec![0.0; n_particles * n * dim];
    m.par_chunks_mut(n * dim).enumerate().for_each(|(i, row)| {
        for j in 0..dim {
            stream.fill(i as u64, j, 0, n, &mut row[j..], dim);
        }
        for (k, step) in row.chunks_exact_mut(dim).enumerate() {
            step.iter_mut().for_each(|v| *v *= sqrt_dt[k]);
        }
    });
    let a: Vec<f64> = (0..n_particles).flat_map(|_| (0..n).map(|k| p.dt(k))).collect();
    DriverPath::from_parts(p.clone(), n_particles, dim, m, a)
}

/// Sums fine increments over each coarse interval, left to right.
pub fn aggregate_to_coarse(fine: &DriverPath, coarse: &TimePartition) -> Result<DriverPath> {
    let idx = fine.partition.embedding_of(coarse)?;
    let (nf, nc, d) = (fine.n_steps(), coarse.n_steps(), fine.dim);
    let mut m = vec![0.0; fine.n_particles * nc * d];
    let mut a = vec![0.0; fine.n_particles * nc];
    m.par_chunks_mut(nc * d).zip(a.par_chunks_mut(nc)).enumerate().for_each(|(i, (mrow, arow))| {
        let fm = &fine.m[i * nf * d..(i + 1) * nf * d];
        let fa = &fine.a[i * nf..(i + 1) * nf];
        for k in 0..nc {
            let target = &mut mrow[k * d..(k + 1) * d];
            target.copy_from_slice(&fm[idx[k] * d..(idx[k] + 1) * d]);
            let mut acc_a = fa[idx[k]];
            for f in (idx[k] + 1)..idx[k + 1] {
                for (t, v) in target.iter_mut().zip(&fm[f * d..(f + 1) * d]) {
                    *t += v;
                }
                acc_a += fa[f];
            }
            arow[k] = acc_a;
        }
    });
    DriverPath::from_parts(coarse.clone(), fine.n_particles, d, m, a)
}

/// Perturbed driver `(M^ε, A^ε)` with
/// `ΔM^ε_k = (1 + ε·g(t_k))·ΔM_k` and `ΔA^ε_k = ΔA_k + ε·h(t_k)·Δt_k`.
///
/// `M^ε` is a stochastic integral of a deterministic integrand against the
/// base martingale, so it stays a continuous martingale, and `M^ε → M`,
/// `TV(A^ε - A) → 0` as `ε → 0`.
pub fn perturbed_driver<G, H>(base: &DriverPath, eps: f64, martingale_tilt: G, bv_tilt: H) -> Result<DriverPath>
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    if !eps.is_finite() {
        return invalid(format!("eps must be finite, got {eps}"));
    }
    let p = &base.partition;
    let n = p.n_steps();
    let mut scale = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for k in 0..n {
        let t = p.points()[k];
        let (g, h) = (martingale_tilt(t), bv_tilt(t));
        if !g.is_finite() || !h.is_finite() {
            return Err(Error::Evaluation(format!(
                "tilt is not finite at t = {t} (martingale {g}, bounded variation {h})"
            )));
        }
        scale.push(1.0 + eps * g);
        shift.push(eps * h * p.dt(k));
    }
    let d = base.dim;
    let m: Vec<f64> = base
        .m
        .chunks_exact(d)
        .enumerate()
        .flat_map(|(row, inc)| {
            let s = scale[row % n];
            inc.iter().map(move |v| s * v)
        })
        .collect();
    let a: Vec<f64> = base.a.iter().enumerate().map(|(row, v)| v + shift[row % n]).collect();
    DriverPath::from_parts(p.clone(), base.n_particles, d, m, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvsde::build_uniform_partition;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn addressing_is_order_independent() {
        let s = NoiseStream::new(42);
        let mut row = vec![0.0; 10 * 3];
        for j in 0..3 {
            s.fill(7, j, 0, 10, &mut row[j..], 3);
        }
        for k in 0..10 {
            for j in 0..3 {
                assert_eq!(row[k * 3 + j].to_bits(), s.normal(7, k as u64, j).to_bits());
            }
        }
        let mut tail = vec![0.0; 4];
        s.fill(7, 1, 6, 4, &mut tail, 1);
        assert_eq!(tail[0].to_bits(), row[6 * 3 + 1].to_bits());
        assert_ne!(s.normal(0, 0, 0), NoiseStream::new(43).normal(0, 0, 0));
    }

    #[test]
    fn variates_look_standard_normal() {
        let s = NoiseStream::new(1);
        let z: Vec<f64> = (0..200_000u64).map(|i| s.normal(i, i % 17, (i % 3) as usize)).collect();
        let (m, v) = mean_var(&z);
        let se = (1.0 / z.len() as f64).sqrt();
        assert!(m.abs() < 5.0 * se, "mean {m}");
        assert!((v - 1.0).abs() < 5.0 * (2.0f64 / z.len() as f64).sqrt(), "var {v}");
        let kurt = z.iter().map(|x| x.powi(4)).sum::<f64>() / z.len() as f64;
        assert!((kurt - 3.0).abs() < 0.1, "fourth moment {kurt}");
        // adjacent addresses uncorrelated
        let pairs: Vec<f64> = (0..100_000u64).map(|i| s.normal(i, 0, 0) * s.normal(i, 1, 0)).collect();
        let (c, _) = mean_var(&pairs);
        assert!(c.abs() < 5.0 / (pairs.len() as f64).sqrt(), "lag correlation {c}");
        let pairs: Vec<f64> = (0..100_000u64).map(|i| s.normal(i, 3, 0) * s.normal(i, 3, 1)).collect();
        let (c, _) = mean_var(&pairs);
        assert!(c.abs() < 5.0 / (pairs.len() as f64).sqrt(), "component correlation {c}");
    }

    #[test]
    fn unit_directions_are_normalized() {
        let s = NoiseStream::new(3);
        for j in 0..20 {
            let v = s.unit_direction(j, 4);
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
        }
        let v = s.unit_direction(5, 1);
        assert_eq!(v[0].abs(), 1.0);
    }

    #[test]
    fn terminal_variance_is_horizon() {
        let p = build_uniform_partition(2.0, 16).unwrap();
        let n = 10_000;
        let drv = brownian_increments(&p, n, 1, &NoiseStream::new(11)).unwrap();
        let terminal: Vec<f64> = (0..n).map(|i| (0..16).map(|k| drv.m_increment(i, k)[0]).sum()).collect();
        let (m, v) = mean_var(&terminal);
        assert!(m.abs() < 5.0 * (2.0 / n as f64).sqrt());
        // standard error of the sample variance of N(0, T): T·sqrt(2/(N-1))
        assert!((v - 2.0).abs() < 5.0 * 2.0 * (2.0 / (n as f64 - 1.0)).sqrt(), "var {v}");
        assert_eq!(drv.a_increment(3, 5), 0.125);
        assert!(drv.is_consistent());
        assert_eq!(drv.total_variation_a(0), 2.0);
    }

    #[test]
    fn equal_seeds_give_identical_paths() {
        let p = build_uniform_partition(1.0, 32).unwrap();
        let a = brownian_increments(&p, 50, 2, &NoiseStream::new(5)).unwrap();
        let b = brownian_increments(&p, 50, 2, &NoiseStream::new(5)).unwrap();
        assert!(a.m_increments().iter().zip(b.m_increments()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a, b);
    }

    #[test]
    fn aggregation_to_own_partition_is_identity() {
        let p = build_uniform_partition(1.0, 8).unwrap();
        let drv = brownian_increments(&p, 5, 2, &NoiseStream::new(2)).unwrap();
        assert_eq!(aggregate_to_coarse(&drv, &p).unwrap(), drv);
    }

    #[test]
    fn dyadic_aggregation_sums_pairs() {
        let fine_p = build_uniform_partition(1.0, 8).unwrap();
        let coarse_p = build_uniform_partition(1.0, 4).unwrap();
        let fine = brownian_increments(&fine_p, 6, 2, &NoiseStream::new(9)).unwrap();
        let coarse = aggregate_to_coarse(&fine, &coarse_p).unwrap();
        for i in 0..6 {
            for k in 0..4 {
                for j in 0..2 {
                    let expect = fine.m_increment(i, 2 * k)[j] + fine.m_increment(i, 2 * k + 1)[j];
                    assert_eq!(coarse.m_increment(i, k)[j].to_bits(), expect.to_bits());
                }
                assert_eq!(coarse.a_increment(i, k), 0.25);
            }
        }
        assert!(coarse.is_consistent());
        assert!(aggregate_to_coarse(&fine, &build_uniform_partition(1.0, 3).unwrap()).is_err());
    }

    #[test]
    fn aggregated_increment_variance_is_coarse_dt() {
        let fine_p = build_uniform_partition(1.0, 64).unwrap();
        let coarse_p = build_uniform_partition(1.0, 4).unwrap();
        let n = 20_000;
        let coarse = aggregate_to_coarse(&brownian_increments(&fine_p, n, 1, &NoiseStream::new(4)).unwrap(), &coarse_p).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| coarse.m_increment(i, 2)[0]).collect();
        let (_, v) = mean_var(&xs);
        assert!((v - 0.25).abs() < 5.0 * 0.25 * (2.0 / n as f64).sqrt(), "var {v}");
    }

    #[test]
    fn perturbation_identities() {
        let p = build_uniform_partition(1.0, 50).unwrap();
        let base = brownian_increments(&p, 200, 1, &NoiseStream::new(8)).unwrap();
        let same = perturbed_driver(&base, 0.0, |_| 1.0, f64::sin).unwrap();
        assert_eq!(same, base);

        let eps = 0.3;
        let pert = perturbed_driver(&base, eps, |_| 1.0, f64::sin).unwrap();
        // TV(A^ε - A) = |ε| Σ |sin(t_k)| Δt_k
        let expected: f64 = (0..50).map(|k| (eps * p.points()[k].sin() * p.dt(k)).abs()).sum();
        let got: f64 = (0..50).map(|k| (pert.a_increment(0, k) - base.a_increment(0, k)).abs()).sum();
        assert!((got - expected).abs() < 1e-14);
        assert!(pert.is_consistent());
        assert!(perturbed_driver(&base, 0.1, |t| 1.0 / (t - t), |_| 0.0).is_err());
    }

    #[test]
    fn scaled_martingale_variance() {
        let p = build_uniform_partition(1.0, 10).unwrap();
        let n = 20_000;
        let base = brownian_increments(&p, n, 1, &NoiseStream::new(21)).unwrap();
        let eps = 0.5;
        let pert = perturbed_driver(&base, eps, |_| 1.0, |_| 0.0).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| pert.m_increment(i, 4)[0]).collect();
        let (_, v) = mean_var(&xs);
        let target = (1.0 + eps) * (1.0 + eps) * 0.1;
        assert!((v - target).abs() < 5.0 * target * (2.0 / n as f64).sqrt(), "var {v} vs {target}");
    }

    #[test]
    fn martingale_partial_sums_center_and_quadratic_variation() {
        let p = build_uniform_partition(1.0, 32).unwrap();
        let n = 4_000;
        let eps = 0.2;
        let drv = perturbed_driver(&brownian_increments(&p, n, 1, &NoiseStream::new(13)).unwrap(), eps, |t| t, |_| 0.0).unwrap();
        for k_end in [8usize, 16, 32] {
            let sums: Vec<f64> = (0..n).map(|i| (0..k_end).map(|k| drv.m_increment(i, k)[0]).sum()).collect();
            let (m, v) = mean_var(&sums);
            assert!(m.abs() <= 5.0 * (v / n as f64).sqrt(), "mean {m} at step {k_end}");
        }
        // batch quadratic variation against the tilt-weighted time
        let qv: f64 = (0..n).map(|i| (0..32).map(|k| drv.m_increment(i, k)[0].powi(2)).sum::<f64>()).sum::<f64>() / n as f64;
        let target: f64 = (0..32).map(|k| (1.0 + eps * p.points()[k]).powi(2) * p.dt(k)).sum();
        assert!((qv - target).abs() < 0.02 * target, "qv {qv} vs {target}");
    }

    #[test]
    fn dump_round_trip() {
        let p = build_uniform_partition(1.0, 6).unwrap();
        let drv = perturbed_driver(&brownian_increments(&p, 4, 2, &NoiseStream::new(1)).unwrap(), 0.1, |_| 1.0, f64::cos).unwrap();
        let mut buf = Vec::new();
        drv.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"MVDRV1");
        assert_eq!(u64::from_le_bytes(buf[6..14].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(buf[14..22].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(buf[22..30].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 30 + 8 * (4 * 6 * 2 + 4 * 6));
        let back = DriverPath::read_from(&buf[..], p.clone()).unwrap();
        assert_eq!(back, drv);
        assert!(DriverPath::read_from(&buf[..], build_uniform_partition(1.0, 5).unwrap()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(DriverPath::read_from(&bad[..], p).is_err());
    }
}
