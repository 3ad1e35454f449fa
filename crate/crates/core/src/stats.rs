//! Monte Carlo estimates carried with their per-path influence, so that
//! smooth functions of several sample means (ratios, finite differences on
//! common random numbers, implied-vol inversions) get consistent standard
//! errors by the delta method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// An estimate that is (to first order) a mean over paths: `value` plus the
/// centred per-path influence `ψ_p`, with `SE² = Σ ψ_p² / (N (N − 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseEstimate {
    value: f64,
    influence: Vec<f64>,
}

impl PathwiseEstimate {
    pub fn mean(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("need at least two paths".into()));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite path sample {bad}")));
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut influence = samples;
        for x in &mut influence {
            *x -= mean;
        }
        Ok(Self { value: mean, influence })
    }

    pub(crate) fn from_parts(value: f64, influence: Vec<f64>) -> Self {
        Self { value, influence }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn influence(&self) -> &[f64] {
        &self.influence
    }

    pub fn n_paths(&self) -> usize {
        self.influence.len()
    }

    pub fn std_error(&self) -> f64 {
        let n = self.influence.len() as f64;
        (self.influence.iter().map(|x| x * x).sum::<f64>() / (n * (n - 1.0))).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.value,
            std_error: self.std_error(),
        }
    }

    /// `g(a_1, .., a_m)` with `value = g(..)` and gradient `grad`.
    pub fn combine(parts: &[&PathwiseEstimate], value: f64, grad: &[f64]) -> Self {
        assert_eq!(parts.len(), grad.len(), "one gradient entry per part");
        let n = parts[0].n_paths();
        assert!(parts.iter().all(|p| p.n_paths() == n), "parts must share paths");
        let mut influence = vec![0.0; n];
        for (part, &g) in parts.iter().zip(grad) {
            if g != 0.0 {
                for (dst, src) in influence.iter_mut().zip(&part.influence) {
                    *dst += g * src;
                }
            }
        }
        Self { value, influence }
    }

    /// `g(self)` for a scalar function with derivative `slope` at the value.
    pub fn map(&self, value: f64, slope: f64) -> Self {
        Self::combine(&[self], value, &[slope])
    }

    /// `f(a_1, .., a_m)` with the gradient taken by central differences.
    pub fn apply(parts: &[&PathwiseEstimate], f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x: Vec<f64> = parts.iter().map(|p| p.value).collect();
        let value = f(&x);
        let grad: Vec<f64> = (0..x.len())
            .map(|i| {
                let xi = x[i];
                let h = 1e-6 * xi.abs().max(f64::MIN_POSITIVE.sqrt());
                x[i] = xi + h;
                let up = f(&x);
                x[i] = xi - h;
                let dn = f(&x);
                x[i] = xi;
                (up - dn) / (2.0 * h)
            })
            .collect();
        Self::combine(parts, value, &grad)
    }

    pub fn ratio(num: &Self, den: &Self) -> Self {
        let r = num.value / den.value;
        Self::combine(&[num, den], r, &[1.0 / den.value, -r / den.value])
    }

    /// Control-variate adjustment by a pathwise estimate with known mean
    /// `expected`: `x − β (c − expected)` with the regression coefficient
    /// `β = Σ ψ_x ψ_c / Σ ψ_c²`, treated as fixed for the standard error.
    pub fn control_variate(&self, control: &Self, expected: f64) -> Self {
        assert_eq!(self.n_paths(), control.n_paths(), "control must share paths");
        let cc: f64 = control.influence.iter().map(|c| c * c).sum();
        if !(cc > 0.0) {
            return self.clone();
        }
        let xc: f64 = self.influence.iter().zip(&control.influence).map(|(x, c)| x * c).sum();
        let beta = xc / cc;
        Self::combine(
            &[self, control],
            self.value - beta * (control.value - expected),
            &[1.0, -beta],
        )
    }

    pub fn linear(a: &Self, wa: f64, b: &Self, wb: f64) -> Self {
        Self::combine(&[a, b], wa * a.value + wb * b.value, &[wa, wb])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_matches_textbook_standard_error() {
        let xs = vec![1.0, 2.0, 4.0, 7.0];
        let e = PathwiseEstimate::mean(xs).unwrap();
        assert_eq!(e.value(), 3.5);
        // sample variance 7, SE = sqrt(7/4)
        assert!((e.std_error() - (7.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn difference_of_identical_samples_has_no_error() {
        let a = PathwiseEstimate::mean(vec![1.0, 5.0, 2.0]).unwrap();
        let d = PathwiseEstimate::linear(&a, 1.0, &a, -1.0);
        assert_eq!(d.value(), 0.0);
        assert_eq!(d.std_error(), 0.0);
    }

    #[test]
    fn ratio_of_proportional_samples_is_exact() {
        let a = PathwiseEstimate::mean(vec![1.0, 2.0, 3.0]).unwrap();
        let b = PathwiseEstimate::mean(vec![2.0, 4.0, 6.0]).unwrap();
        let r = PathwiseEstimate::ratio(&a, &b);
        assert_eq!(r.value(), 0.5);
        assert!(r.std_error() < 1e-16);
    }

    #[test]
    fn numeric_gradient_matches_ratio() {
        let a = PathwiseEstimate::mean(vec![1.0, 2.5, 3.0, 0.7]).unwrap();
        let b = PathwiseEstimate::mean(vec![2.0, 4.2, 5.0, 1.1]).unwrap();
        let exact = PathwiseEstimate::ratio(&a, &b);
        let numeric = PathwiseEstimate::apply(&[&a, &b], |x| x[0] / x[1]);
        assert_eq!(exact.value(), numeric.value());
        assert!((exact.std_error() - numeric.std_error()).abs() < 1e-9 * exact.std_error());
    }

    #[test]
    fn perfect_control_removes_all_error() {
        let c = PathwiseEstimate::mean(vec![0.9, 1.2, 0.8, 1.3]).unwrap();
        let x = PathwiseEstimate::mean(vec![1.8, 2.4, 1.6, 2.6]).unwrap();
        let adj = x.control_variate(&c, 1.0);
        assert!((adj.value() - 2.0).abs() < 1e-14);
        assert!(adj.std_error() < 1e-14);
    }

    #[test]
    fn uncorrelated_control_changes_nothing() {
        let c = PathwiseEstimate::mean(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let x = PathwiseEstimate::mean(vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        let adj = x.control_variate(&c, 0.0);
        assert_eq!(adj.value(), x.value());
        assert!((adj.std_error() - x.std_error()).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(PathwiseEstimate::mean(vec![1.0]).is_err());
        assert!(PathwiseEstimate::mean(vec![1.0, f64::NAN]).is_err());
    }
}
