//! Empirical probability measures and Wasserstein-2 distances.
//!
//! An [`EmpiricalMeasure`] is the uniform measure on `N` support points in
//! `R^d`; it is the stand-in for the marginal law `P_{X_t}` throughout the
//! crate. [`Law`] is a borrowed view of the same data (typically one time
//! slice of a particle ensemble) with its first moments precomputed, which is
//! what model coefficients receive.

use rayon::prelude::*;

use crate::drivers::NoiseStream;
use crate::error::{invalid, Error, Result};
use crate::mvsde::StateVector;

/// Uniform probability measure on a finite cloud of points in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `points` holds `N` consecutive blocks of `dim` coordinates.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return invalid(format!("support of {} coordinates does not split into points of dimension {dim}", points.len()));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return invalid(format!("support point {} is not finite", pos / dim));
        }
        Ok(Self { dim, points })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn from_states(states: &[StateVector]) -> Result<Self> {
        let dim = match states.first() {
            Some(s) => s.dim(),
            None => return invalid("empty support"),
        };
        if states.iter().any(|s| s.dim() != dim) {
            return invalid("support points have mixed dimensions");
        }
        Self::new(dim, states.iter().flat_map(|s| s.as_slice().iter().copied()).collect())
    }

    pub fn dirac(x: &StateVector) -> Self {
        Self {
            dim: x.dim(),
            points: x.as_slice().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn law(&self) -> Law<'_> {
        Law::new(self.dim, &self.points)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.law().mean().to_vec()
    }

    /// Image measure under the linear functional `x ↦ ⟨θ, x⟩`.
    pub fn project(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.dim {
            return invalid(format!("direction of length {} for dimension {}", theta.len(), self.dim));
        }
        Self::new(1, self.points.chunks_exact(self.dim).map(|x| dot(x, theta)).collect())
    }

    /// Image measure under `x ↦ a·x`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::new(self.dim, self.points.iter().map(|v| a * v).collect())
    }

    /// Image measure under `x ↦ x + c`.
    pub fn translated(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim {
            return invalid(format!("shift of length {} for dimension {}", c.len(), self.dim));
        }
        Self::new(
            self.dim,
            self.points.chunks_exact(self.dim).flat_map(|x| x.iter().zip(c).map(|(a, b)| a + b)).collect(),
        )
    }
}

/// Borrowed view of a particle cloud with its mean and second moment
/// precomputed in a fixed summation order.
#[derive(Debug, Clone)]
pub struct Law<'a> {
    dim: usize,
    points: &'a [f64],
    mean: Vec<f64>,
    second_moment: f64,
}

impl<'a> Law<'a> {
    /// `points.len()` must be a non-zero multiple of `dim`.
    pub fn new(dim: usize, points: &'a [f64]) -> Self {
        assert!(dim > 0 && !points.is_empty() && points.len().is_multiple_of(dim), "malformed particle cloud");
        let n = (points.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        let mut second = 0.0;
        for x in points.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
                second += v * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        Self {
            dim,
            points,
            mean,
            second_moment: second / n,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `∫ |y|² μ(dy)`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Squared `W_2` between two sorted samples on the line, via their quantile
/// functions on the common refinement of the grids `{i/N}` and `{j/M}`.
fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return s / n as f64;
    }
    // Breakpoints in units of 1/(N·M): a's k-th atom ends at (k+1)·M, b's at (k+1)·N.
    let (mut i, mut j) = (0usize, 0usize);
    let mut cursor = 0usize;
    let mut acc = 0.0;
    while i < n && j < m {
        let end_a = (i + 1) * m;
        let end_b = (j + 1) * n;
        let end = end_a.min(end_b);
        let gap = a[i] - b[j];
        acc += (end - cursor) as f64 * gap * gap;
        cursor = end;
        if end == end_a {
            i += 1;
        }
        if end == end_b {
            j += 1;
        }
    }
    acc / (n * m) as f64
}

/// Exact `W_2` between two empirical measures on `R`, by monotone
/// (quantile) coupling of the sorted supports.
pub fn w2_exact_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return invalid(format!("w2_exact_1d needs one-dimensional measures, got d = {} and {}", mu.dim(), nu.dim()));
    }
    Ok(w2_sq_sorted(&sorted(mu.points()), &sorted(nu.points())).sqrt())
}

/// Sliced `W_2`: the root-mean-square of exact one-dimensional distances
/// between projections onto `n_projections` random directions drawn
/// uniformly on the sphere. Direction `j` depends only on `(seed, j)`.
pub fn w2_sliced(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, n_projections: usize, seed: u64) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", mu.dim(), nu.dim()));
    }
    if n_projections == 0 {
        return invalid("n_projections must be at least 1");
    }
    let d = mu.dim();
    if d == 1 {
        // every direction is ±1 and the 1-d distance is sign invariant
        return w2_exact_1d(mu, nu);
    }
    let stream = NoiseStream::new(seed);
    let squares: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|j| {
            let theta = stream.unit_direction(j as u64, d);
            let a = sorted(&mu.project(&theta).expect("dimension checked").points);
            let b = sorted(&nu.project(&theta).expect("dimension checked").points);
            w2_sq_sorted(&a, &b)
        })
        .collect();
    Ok((squares.iter().sum::<f64>() / n_projections as f64).sqrt())
}

/// `W_2(μ, δ_0) = (∫|x|² μ(dx))^{1/2}`; the coupling with a point mass is unique.
pub fn w2_to_dirac0(mu: &EmpiricalMeasure) -> f64 {
    mu.law().second_moment().sqrt()
}

/// An upper bound on `W_2` in any dimension: exact for `d = 1`, otherwise
/// the smaller of the index coupling (equal sizes only) and the bound through
/// the Dirac masses at the two means.
pub fn w2_upper_bound(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", mu.dim(), nu.dim()));
    }
    if mu.dim() == 1 {
        return w2_exact_1d(mu, nu);
    }
    let (lm, ln) = (mu.law(), nu.law());
    let spread = |l: &Law<'_>| (l.second_moment() - dot(l.mean(), l.mean())).max(0.0).sqrt();
    let mean_gap = crate::mvsde::StateVector::new(lm.mean().iter().zip(ln.mean()).map(|(a, b)| a - b).collect())?.norm();
    let mut bound = mean_gap + spread(&lm) + spread(&ln);
    if mu.len() == nu.len() {
        bound = bound.min(paired_rms(mu.dim(), mu.points(), nu.points()));
    }
    Ok(bound)
}

/// `((1/N) Σ_i |x_i - y_i|²)^{1/2}` for index-paired clouds.
pub(crate) fn paired_rms(dim: usize, x: &[f64], y: &[f64]) -> f64 {
    let n = (x.len() / dim) as f64;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (d2 / n).sqrt()
}

/// `(1/N) Σ_i f(x_i)`. Fails on the first support point where `f` is not
/// finite or changes output dimension.
pub fn integrate<F>(mu: &EmpiricalMeasure, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    integrate_law(&mu.law(), f)
}

/// [`integrate`] over a borrowed particle cloud.
pub fn integrate_law<F>(law: &Law<'_>, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut acc: Option<Vec<f64>> = None;
    for (i, x) in law.iter().enumerate() {
        let y = f(x);
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!("integrand component {k} is {} at support point {i} ({x:?})", y[k])));
        }
        match acc.as_mut() {
            None => acc = Some(y),
            Some(a) if a.len() == y.len() => a.iter_mut().zip(&y).for_each(|(s, v)| *s += v),
            Some(a) => {
                return Err(Error::Evaluation(format!(
                    "integrand returned {} components at support point {i}, expected {}",
                    y.len(),
                    a.len()
                )))
            }
        }
    }
    let n = law.len() as f64;
    let mut out = acc.unwrap_or_default();
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Minimum over all permutation couplings of the mean squared gap.
    fn brute_force_w2(a: &[f64], b: &[f64]) -> f64 {
        permutations(a.len())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).powi(2)).sum::<f64>() / a.len() as f64)
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    #[test]
    fn w2_examples() {
        let mu = m1(&[0.3, -1.2, 2.5, 0.0]);
        assert_eq!(w2_exact_1d(&mu, &mu).unwrap(), 0.0);
        let shifted = m1(&[0.3 + 1.5, -1.2 + 1.5, 2.5 + 1.5, 1.5]);
        assert!((w2_exact_1d(&mu, &shifted).unwrap() - 1.5).abs() < 1e-15);
        let w = w2_exact_1d(&m1(&[0.0, 1.0]), &m1(&[0.0, 3.0])).unwrap();
        assert_eq!(w, brute_force_w2(&[0.0, 1.0], &[0.0, 3.0]));
        assert!((w - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn w2_rejects_multidimensional() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 1.0]).unwrap();
        assert!(w2_exact_1d(&mu, &mu).is_err());
    }

    #[test]
    fn unequal_sizes_match_replicated_supports() {
        let a = [0.5, -1.0, 2.0];
        let b = [1.0, 0.0, 4.0, -3.0, 0.25];
        // replicating every atom of a 5 times and of b 3 times gives equal-size clouds of the same laws
        let ra: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat_n(x, b.len())).collect();
        let rb: Vec<f64> = b.iter().flat_map(|&x| std::iter::repeat_n(x, a.len())).collect();
        let direct = w2_exact_1d(&m1(&a), &m1(&b)).unwrap();
        let replicated = w2_exact_1d(&m1(&ra), &m1(&rb)).unwrap();
        assert!((direct - replicated).abs() < 1e-13, "{direct} vs {replicated}");
        assert!((w2_exact_1d(&m1(&[1.0]), &m1(&[0.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirac_distance_examples() {
        assert_eq!(w2_to_dirac0(&m1(&[0.0])), 0.0);
        assert_eq!(w2_to_dirac0(&m1(&[3.0])), 3.0);
        assert_eq!(w2_to_dirac0(&m1(&[1.0, -1.0])), 1.0);
        let mu = EmpiricalMeasure::new(2, vec![3.0, 4.0]).unwrap();
        assert_eq!(w2_to_dirac0(&mu), 5.0);
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(integrate(&m1(&[1.0, 3.0]), |x| x.to_vec()).unwrap(), vec![2.0]);
        assert_eq!(integrate(&m1(&[-4.0, 9.0, 0.1]), |_| vec![7.0]).unwrap(), vec![7.0]);
        let v = integrate(&m1(&[1.0, 2.0, 3.0]), |x| vec![x[0] * x[0]]).unwrap();
        assert!((v[0] - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_reports_offending_point() {
        let err = integrate(&m1(&[1.0, 0.0, 2.0]), |x| vec![1.0 / x[0]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("support point 1"), "{msg}");
    }

    #[test]
    fn sliced_examples() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 0.0, 1.0, -1.0, 0.5, 2.0]).unwrap();
        for seed in [0, 1, 99] {
            assert_eq!(w2_sliced(&mu, &mu, 50, seed).unwrap(), 0.0);
        }
        let a = m1(&[0.1, 0.7, -0.4]);
        let b = m1(&[1.0, -2.0, 0.3]);
        for seed in [0, 5] {
            assert_eq!(w2_sliced(&a, &b, 17, seed).unwrap(), w2_exact_1d(&a, &b).unwrap());
        }
        let other = EmpiricalMeasure::new(3, vec![0.0; 3]).unwrap();
        assert!(w2_sliced(&mu, &other, 10, 0).is_err());
    }

    #[test]
    fn sliced_translation_matches_dense_direction_average() {
        let c = [0.6, -0.8];
        let mu = EmpiricalMeasure::new(2, vec![0.0, 0.0, 1.0, 0.5, -0.3, 2.0, 0.4, 0.4]).unwrap();
        let nu = mu.translated(&c).unwrap();
        // oracle: average of ⟨θ, c⟩² over a dense uniform grid of angles
        let grid = 100_000;
        let mean_sq: f64 = (0..grid)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / grid as f64;
                (a.cos() * c[0] + a.sin() * c[1]).powi(2)
            })
            .sum::<f64>()
            / grid as f64;
        let expected = mean_sq.sqrt();
        assert!((expected - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        let got = w2_sliced(&mu, &nu, 10_000, 7).unwrap();
        assert!((got / expected - 1.0).abs() < 0.02, "{got} vs {expected}");
    }

    #[test]
    fn sliced_is_deterministic_per_seed() {
        let mu = EmpiricalMeasure::new(3, (0..30).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let nu = EmpiricalMeasure::new(3, (0..30).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let a = w2_sliced(&mu, &nu, 64, 3).unwrap();
        let b = w2_sliced(&mu, &nu, 64, 3).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    fn cloud(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..=max_len)
    }

    proptest! {
        #[test]
        fn matches_permutation_oracle(pair in (1usize..=6).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n)))) {
            let (a, b) = pair;
            let w = w2_exact_1d(&m1(&a), &m1(&b)).unwrap();
            prop_assert!((w - brute_force_w2(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn metric_axioms(a in cloud(12), b in cloud(12), c in cloud(12)) {
            let (ma, mb, mc) = (m1(&a), m1(&b), m1(&c));
            let ab = w2_exact_1d(&ma, &mb).unwrap();
            prop_assert_eq!(ab, w2_exact_1d(&mb, &ma).unwrap());
            let ac = w2_exact_1d(&ma, &mc).unwrap();
            let cb = w2_exact_1d(&mc, &mb).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn zero_iff_sorted_supports_equal(a in cloud(10), perm_seed in 0usize..100) {
            let mut b = a.clone();
            b.rotate_left(perm_seed % a.len());
            prop_assert_eq!(w2_exact_1d(&m1(&a), &m1(&b)).unwrap(), 0.0);
            let mut c = a.clone();
            c[0] += 0.5;
            prop_assert!(w2_exact_1d(&m1(&a), &m1(&c)).unwrap() > 0.0);
        }

        #[test]
        fn scaling(a in cloud(10), b in cloud(10), s in -4.0f64..4.0) {
            let w = w2_exact_1d(&m1(&a), &m1(&b)).unwrap();
            let ws = w2_exact_1d(&m1(&a).scaled(s).unwrap(), &m1(&b).scaled(s).unwrap()).unwrap();
            prop_assert!((ws - s.abs() * w).abs() <= 1e-12 * (1.0 + w * s.abs()));
        }

        #[test]
        fn dominated_by_paired_rms(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let w = w2_exact_1d(&m1(&x), &m1(&y)).unwrap();
            prop_assert!(w <= paired_rms(1, &x, &y) + 1e-12);
        }

        #[test]
        fn sliced_bounded_by_exact_in_1d(pair in (1usize..=6).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))), seed in 0u64..50) {
            let (a, b) = pair;
            let s = w2_sliced(&m1(&a), &m1(&b), 8, seed).unwrap();
            prop_assert!(s <= brute_force_w2(&a, &b) + 1e-12);
        }

        #[test]
        fn sliced_bounded_by_index_coupling(pts in prop::collection::vec(-3.0f64..3.0, 6..=30), seed in 0u64..20) {
            // d = 3 clouds with equal N, paired by index
            let n = pts.len() / 6;
            let x = EmpiricalMeasure::new(3, pts[..3 * n].to_vec()).unwrap();
            let y = EmpiricalMeasure::new(3, pts[3 * n..6 * n].to_vec()).unwrap();
            let s = w2_sliced(&x, &y, 16, seed).unwrap();
            let max_pair = (0..n).map(|i| crate::mvsde::StateVector::new(x.point(i).iter().zip(y.point(i)).map(|(a, b)| a - b).collect()).unwrap().norm()).fold(0.0, f64::max);
            prop_assert!(s <= max_pair + 1e-12);
            prop_assert!(s <= w2_upper_bound(&x, &y).unwrap() + 1e-12);
        }
    }
}
