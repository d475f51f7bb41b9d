//! Polynomial feature maps on bounded transformations of the plant state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PlantTraits};
use crate::numeric::binomial;

/// Number of monomials of degree at most `d` in `k` variables,
/// `Σ_{ℓ=0}^{d} C(k+ℓ−1, k−1)`.
pub fn feature_count(k: usize, d: usize) -> usize {
    if k == 0 {
        return 1;
    }
    (0..=d).map(|l| binomial(k + l - 1, k - 1)).sum()
}

/// Exponent vectors of all monomials with total degree `<= d`.
///
/// Ordering: the exponent of the last variable varies slowest and the first
/// fastest, each running upward, so for two variables and `d = 2` the
/// monomials are `1, x₁, x₁², x₂, x₁x₂, x₂²`.
pub fn monomial_exponents(k: usize, d: usize) -> Vec<Vec<u32>> {
    fn rec(var: usize, budget: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        // `var` counts down from the last variable
        if var == 0 {
            out.push(current.clone());
            return;
        }
        for e in 0..=budget {
            current[var - 1] = e;
            rec(var - 1, budget - e, current, out);
        }
        current[var - 1] = 0;
    }
    let mut out = Vec::with_capacity(feature_count(k, d));
    let mut current = vec![0u32; k];
    rec(k, d as u32, &mut current, &mut out);
    out
}

/// All monomials `x₁^{α₁}···x_k^{α_k}` with `Σα ≤ d`, in the order of
/// [`monomial_exponents`].
pub fn polynomial_features(x: &[f64], d: usize) -> Vec<f64> {
    PolyBasis::new(x.len(), d).eval(x)
}

/// Precomputed monomial basis for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    arity: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(arity: usize, degree: usize) -> Self {
        Self {
            arity,
            degree,
            exponents: monomial_exponents(arity, degree),
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn eval_into(&self, x: &[f64], scale: f64, out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.arity);
        let d = self.degree;
        let mut powers = vec![1.0; self.arity * (d + 1)];
        for (v, &xv) in x.iter().enumerate() {
            for e in 1..=d {
                powers[v * (d + 1) + e] = powers[v * (d + 1) + e - 1] * xv;
            }
        }
        out.clear();
        out.extend(self.exponents.iter().map(|alpha| {
            alpha
                .iter()
                .enumerate()
                .fold(scale, |acc, (v, &e)| acc * powers[v * (d + 1) + e as usize])
        }));
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.eval_into(x, 1.0, &mut out);
        out
    }
}

/// Description of the feature map used by one potential stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub degree: usize,
    /// 3 for `(s, x, y)`, 5 for `(s, x, y, S, γ)`.
    pub arity: usize,
    pub center: [f64; 2],
    pub lengths: [f64; 2],
    /// Stage duration entering the `e^{−γΔt}` transform.
    pub dt: f64,
    pub params: ModelParams,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.arity != 3 && self.arity != 5 {
            return Err(Error::InvalidParams(format!("arity must be 3 or 5, got {}", self.arity)));
        }
        if !(self.lengths[0] > 0.0 && self.lengths[1] > 0.0) {
            return Err(Error::InvalidParams("feature lengths must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams("feature dt must be positive".into()));
        }
        self.params.validate()
    }

    pub fn dimension(&self) -> usize {
        feature_count(self.arity, self.degree)
    }

    /// Spatial Cauchy factor `1 / (1 + |x − μ|²/σ_x²)`.
    pub fn spatial_weight(&self, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        self.params.spatial_factor(dx * dx + dy * dy)
    }

    /// Transformed variables `(log(s/s_m), atan((x−μ_x)/L_x), atan((y−μ_y)/L_y)[, log(S/s_m), e^{−γΔt}])`.
    pub fn transformed(&self, s: f64, x: [f64; 2], big_s: Option<f64>, gamma: Option<f64>) -> Result<Vec<f64>> {
        let got = 3 + big_s.is_some() as usize + gamma.is_some() as usize;
        if got != self.arity || big_s.is_some() != gamma.is_some() {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                got,
            });
        }
        let mut z = Vec::with_capacity(self.arity);
        z.push(self.params.log_size(s));
        z.push(((x[0] - self.center[0]) / self.lengths[0]).atan());
        z.push(((x[1] - self.center[1]) / self.lengths[1]).atan());
        if let (Some(big_s), Some(gamma)) = (big_s, gamma) {
            z.push(self.params.log_size(big_s));
            z.push((-gamma * self.dt).exp());
        }
        Ok(z)
    }
}

/// Feature map bound to a precomputed basis.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub spec: FeatureSpec,
    basis: PolyBasis,
}

impl FeatureMap {
    pub fn new(spec: FeatureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            basis: PolyBasis::new(spec.arity, spec.degree),
            spec,
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn eval_into(&self, s: f64, x: [f64; 2], big_s: Option<f64>, gamma: Option<f64>, out: &mut Vec<f64>) -> Result<()> {
        let z = self.spec.transformed(s, x, big_s, gamma)?;
        self.basis.eval_into(&z, self.spec.spatial_weight(x), out);
        Ok(())
    }

    /// Features of a plant with initial size `s0` and traits `θ`; the trait
    /// arguments are dropped for arity-3 maps.
    pub fn eval_plant(&self, s0: f64, theta: &PlantTraits, out: &mut Vec<f64>) -> Result<()> {
        if self.spec.arity == 3 {
            self.eval_into(s0, theta.position, None, None, out)
        } else {
            self.eval_into(s0, theta.position, Some(theta.asymptotic_size), Some(theta.growth_rate), out)
        }
    }
}

/// Features of `(s, x[, S, γ])` divided by the spatial Cauchy factor's inverse.
pub fn feature_map(spec: &FeatureSpec, s: f64, x: [f64; 2], big_s: Option<f64>, gamma: Option<f64>) -> Result<Vec<f64>> {
    let map = FeatureMap::new(*spec)?;
    let mut out = Vec::with_capacity(map.dimension());
    map.eval_into(s, x, big_s, gamma, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(arity: usize, degree: usize) -> FeatureSpec {
        FeatureSpec {
            degree,
            arity,
            center: [0.2, -0.1],
            lengths: [1.0, 1.5],
            dt: 1.0,
            params: ModelParams::default(),
        }
    }

    #[test]
    fn two_variable_degree_two_order() {
        let (a, b) = (3.0, 5.0);
        assert_eq!(polynomial_features(&[a, b], 2), vec![1.0, a, a * a, b, a * b, b * b]);
    }

    #[test]
    fn degree_zero_is_constant() {
        for k in 1..=5 {
            assert_eq!(polynomial_features(&vec![0.7; k], 0), vec![1.0]);
        }
    }

    #[test]
    fn counts() {
        assert_eq!(feature_count(3, 5), 56);
        assert_eq!(feature_count(5, 3), 56);
        assert_eq!(polynomial_features(&[1.0; 3], 5).len(), 56);
        assert_eq!(polynomial_features(&[1.0; 5], 3).len(), 56);
    }

    #[test]
    fn exponents_are_unique_and_bounded() {
        let e = monomial_exponents(4, 4);
        let mut sorted = e.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), e.len());
        assert!(e.iter().all(|a| a.iter().sum::<u32>() <= 4));
    }

    #[test]
    fn feature_map_degree_zero() {
        let sp = spec(3, 0);
        let x = [1.2, 0.4];
        let f = feature_map(&sp, 0.2, x, None, None).unwrap();
        let d2 = (1.2f64 - 0.2).powi(2) + (0.4f64 + 0.1).powi(2);
        assert_eq!(f.len(), 1);
        assert!((f[0] - 1.0 / (1.0 + d2 / 0.25)).abs() < 1e-15);
    }

    #[test]
    fn feature_map_decays_far_away() {
        let sp = spec(5, 3);
        let f = feature_map(&sp, 0.2, [1e8, -1e8], Some(0.8), Some(1.0)).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn feature_map_ordering_at_reference_point() {
        let sp = spec(3, 1);
        let f = feature_map(&sp, sp.params.s_min, sp.center, None, None).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn feature_map_arity_mismatch() {
        assert!(matches!(
            feature_map(&spec(3, 2), 0.2, [0.0, 0.0], Some(0.8), Some(1.0)),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(matches!(
            feature_map(&spec(5, 2), 0.2, [0.0, 0.0], None, None),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(feature_map(&spec(5, 2), 0.2, [0.0, 0.0], Some(0.8), None).is_err());
    }
}
