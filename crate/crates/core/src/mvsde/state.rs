use crate::error::{invalid, Result};

/// A point of `R^d` with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return invalid("state vector must have at least one coordinate");
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return invalid(format!("state coordinate {pos} is not finite ({})", coords[pos]));
        }
        Ok(Self(coords))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Returns `self + delta * e_axis`.
    pub fn shifted(&self, axis: usize, delta: f64) -> Result<Self> {
        if axis >= self.dim() {
            return invalid(format!("axis {axis} out of range for dimension {}", self.dim()));
        }
        let mut coords = self.0.clone();
        coords[axis] += delta;
        Self::new(coords)
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(StateVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(StateVector::new(vec![f64::INFINITY]).is_err());
        assert!(StateVector::new(vec![]).is_err());
        assert_eq!(StateVector::scalar(2.0).unwrap().dim(), 1);
    }

    #[test]
    fn shift_along_axis() {
        let x = StateVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(x.shifted(1, 0.5).unwrap().as_slice(), &[1.0, 2.5]);
        assert!(x.shifted(2, 0.5).is_err());
    }
}
