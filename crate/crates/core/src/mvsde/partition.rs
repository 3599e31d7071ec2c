use crate::error::{invalid, Result};

/// An ordered time grid `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    points: Vec<f64>,
    mesh: f64,
}

impl TimePartition {
    /// Builds a partition from explicit grid points. The first point must be
    /// exactly `0` and the sequence strictly increasing.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return invalid("a partition needs at least two points");
        }
        if points[0] != 0.0 {
            return invalid(format!("partition must start at 0, got {}", points[0]));
        }
        let mut mesh = 0.0f64;
        for (k, w) in points.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return invalid(format!(
                    "partition points must be strictly increasing (t_{} = {}, t_{} = {})",
                    k,
                    w[0],
                    k + 1,
                    w[1]
                ));
            }
            mesh = mesh.max(w[1] - w[0]);
        }
        Ok(Self { points, mesh })
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("non-empty")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of steps `n` (one less than the number of points).
    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    /// Index of the largest grid point `<= s`, with `floor_index(T) = n`.
    pub fn floor_index(&self, s: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&s) {
            return invalid(format!("time {s} outside [0, {horizon}]"));
        }
        Ok(self.points.partition_point(|&t| t <= s) - 1)
    }

    /// For nested grids, the index in `self` of every point of `coarse`.
    /// Fails unless every coarse point appears bitwise in this grid.
    pub fn embedding_of(&self, coarse: &TimePartition) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(coarse.points.len());
        let mut j = 0;
        for &t in &coarse.points {
            while j < self.points.len() && self.points[j] < t {
                j += 1;
            }
            if j == self.points.len() || self.points[j] != t {
                return invalid(format!("grid point {t} of the coarse partition is missing from the fine one"));
            }
            out.push(j);
        }
        if *out.last().expect("non-empty") != self.n_steps() {
            return invalid("partitions have different horizons");
        }
        Ok(out)
    }

    pub fn refines(&self, coarse: &TimePartition) -> bool {
        self.embedding_of(coarse).is_ok()
    }
}

/// Uniform grid with `n` steps on `[0, T]`. Points are `k·T/n` with the last
/// one set to `T` exactly, so dyadic refinements nest bitwise.
pub fn build_uniform_partition(horizon: f64, n: usize) -> Result<TimePartition> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return invalid(format!("horizon must be positive and finite, got {horizon}"));
    }
    if n == 0 {
        return invalid("number of steps must be at least 1");
    }
    let mut points: Vec<f64> = (0..n).map(|k| k as f64 * horizon / n as f64).collect();
    points.push(horizon);
    TimePartition::new(points)
}

/// Floor map: the largest grid point `t_i <= s`, with `φ(T) = T`.
pub fn phi_floor(p: &TimePartition, s: f64) -> Result<f64> {
    p.floor_index(s).map(|i| p.points[i])
}
