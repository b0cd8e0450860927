use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance on the total mass of a measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tolerance used when deciding whether weights are uniform.
const UNIFORM_TOL: f64 = 1e-12;

/// Finitely supported probability measure: `n` support points in `R^d` with
/// nonnegative weights summing to one. Zero weights are allowed; they carry no
/// mass but keep their atoms addressable (used when two measures must share a
/// common support layout).
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    points: Tensor<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Tensor<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.rows() {
            return Err(Error::measure(format!(
                "{} support points but {} weights",
                points.rows(),
                weights.len()
            )));
        }
        if !points.all_finite() {
            return Err(Error::measure("support points must be finite"));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::measure(format!("weight {i} is {w}; must be >= 0")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::measure(format!(
                "weights sum to {total:e}; must be 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(DiscreteMeasure { points, weights })
    }

    /// Uniform weights `1/n` on the given support.
    pub fn uniform(points: Tensor<f64>) -> Result<Self> {
        let n = points.rows();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Point mass at a single location.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        let t = Tensor::new(1, point.len(), point.to_vec())?;
        Self::new(t, vec![1.0])
    }

    /// Uniform empirical measure on 1-D samples.
    pub fn from_samples_1d(xs: &[f64]) -> Result<Self> {
        Self::uniform(Tensor::new(xs.len(), 1, xs.to_vec())?)
    }

    /// Mixture `(1-lambda)·a + lambda·b`, realized by concatenating supports
    /// with scaled weights. No resampling, so mixture identities hold exactly:
    /// the result's first `a.len()` atoms are `a`'s, the rest are `b`'s.
    pub fn mix(a: &Self, b: &Self, lambda: f64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::measure(format!(
                "mixture of measures in R^{} and R^{}",
                a.dim(),
                b.dim()
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::measure(format!(
                "mixture coefficient {lambda} outside [0, 1]"
            )));
        }
        let mut data = a.points.data().to_vec();
        data.extend_from_slice(b.points.data());
        let points = Tensor::new(a.len() + b.len(), a.dim(), data)?;
        let mut weights: Vec<f64> = a.weights.iter().map(|w| w * (1.0 - lambda)).collect();
        weights.extend(b.weights.iter().map(|w| w * lambda));
        Self::new(points, weights)
    }

    /// Number of support points (including zero-weight atoms).
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Tensor<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/n` (up to fixed tolerance).
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= UNIFORM_TOL)
    }

    /// 1-D support values in storage order. Errors when `d != 1`.
    pub fn xs_1d(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::measure(format!(
                "expected 1-D support, found d={}",
                self.dim()
            )));
        }
        Ok(self.points.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        let pts = Tensor::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(DiscreteMeasure::new(pts.clone(), vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(pts.clone(), vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(pts, vec![1.0]).is_err());
    }

    #[test]
    fn uniform_sums_to_one_for_awkward_sizes() {
        for n in [1usize, 3, 7, 11, 97] {
            let pts = Tensor::zeros(n, 2);
            let m = DiscreteMeasure::uniform(pts).unwrap();
            assert!(m.is_uniform());
        }
    }

    #[test]
    fn mixture_concatenates_supports() {
        let a = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[1.0]).unwrap();
        let m = DiscreteMeasure::mix(&a, &b, 0.25).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.75, 0.25]);
        assert_eq!(m.point(0), &[0.0]);
        assert_eq!(m.point(1), &[1.0]);
        // lambda = 0 keeps the second support present with zero weight.
        let z = DiscreteMeasure::mix(&a, &b, 0.0).unwrap();
        assert_eq!(z.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_weight_atoms_are_legal() {
        let pts = Tensor::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let m = DiscreteMeasure::new(pts, vec![0.5, 0.0, 0.5]).unwrap();
        assert!(!m.is_uniform());
        assert_eq!(m.len(), 3);
    }
}
