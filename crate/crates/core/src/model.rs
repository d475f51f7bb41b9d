//! Model constants, the pairwise competition potential, the competition-free
//! Gompertz solution and the Grönwall envelopes used to monitor solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global constants shared by every plant in the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Minimal size `s_m`, the normalisation constant of all log-sizes.
    pub s_min: f64,
    /// Log-size normaliser `R_M`; `s_min * exp(log_range)` is the hard upper size bound.
    pub log_range: f64,
    /// Spatial decay scale of the competition potential.
    pub sigma_x: f64,
    /// Relative-size scale of the competition potential.
    pub sigma_r: f64,
}

impl Default for ModelParams {
    /// Constants used for the reference simulations (s_m = 0.05, R_M = 3,
    /// σ_x = L/2 with L = 1, σ_r = 1.32).
    fn default() -> Self {
        Self {
            s_min: 0.05,
            log_range: 3.0,
            sigma_x: 0.5,
            sigma_r: 1.32,
        }
    }
}

impl ModelParams {
    pub fn new(s_min: f64, log_range: f64, sigma_x: f64, sigma_r: f64) -> Result<Self> {
        let p = Self {
            s_min,
            log_range,
            sigma_x,
            sigma_r,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("s_min", self.s_min),
            ("log_range", self.log_range),
            ("sigma_x", self.sigma_x),
            ("sigma_r", self.sigma_r),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Upper size bound `s_m e^{R_M}`.
    #[inline]
    pub fn s_max(&self) -> f64 {
        self.s_min * self.log_range.exp()
    }

    /// `log(s / s_m)`.
    #[inline]
    pub fn log_size(&self, s: f64) -> f64 {
        (s / self.s_min).ln()
    }

    /// Inverse of [`ModelParams::log_size`].
    #[inline]
    pub fn size_from_log(&self, r: f64) -> f64 {
        self.s_min * r.exp()
    }

    /// Spatial factor `1 / (1 + d²/σ_x²)`.
    #[inline]
    pub fn spatial_factor(&self, dist_sq: f64) -> f64 {
        1.0 / (1.0 + dist_sq / (self.sigma_x * self.sigma_x))
    }
}

/// Individual parameters θ = (x, S, γ). Constant over a plant's life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantTraits {
    pub position: [f64; 2],
    pub asymptotic_size: f64,
    pub growth_rate: f64,
}

impl PlantTraits {
    pub fn new(position: [f64; 2], asymptotic_size: f64, growth_rate: f64) -> Self {
        Self {
            position,
            asymptotic_size,
            growth_rate,
        }
    }

    #[inline]
    pub fn dist_sq(&self, other: &PlantTraits) -> f64 {
        dist_sq(self.position, other.position)
    }
}

#[inline]
pub fn dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Potential in log-size variables with a precomputed spatial factor.
///
/// `r = log(s/s_m)` of the plant receiving competition, `r_other` of the
/// competitor. This is the hot-path form used by the integrators.
#[inline]
pub(crate) fn potential_from_logs(params: &ModelParams, r: f64, r_other: f64, spatial: f64) -> f64 {
    r_other * spatial / (2.0 * params.log_range)
        * (1.0 + ((r_other - r) / params.sigma_r).tanh())
}

/// Competition potential exerted on a plant of size `s` by a neighbour of
/// size `s_prime` at Euclidean distance `dist`.
///
/// Lies in `[0, 1]` whenever both sizes are in `[s_m, s_m e^{R_M}]`.
pub fn competition_potential(params: &ModelParams, s: f64, s_prime: f64, dist: f64) -> Result<f64> {
    if !(s > 0.0) || !(s_prime > 0.0) {
        return Err(Error::Domain(format!(
            "sizes must be strictly positive (s = {s}, s' = {s_prime})"
        )));
    }
    if !(dist >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {dist}")));
    }
    let spatial = params.spatial_factor(dist * dist);
    Ok((s_prime / params.s_min).ln() / (2.0 * params.log_range) * spatial
        * (1.0 + ((s_prime / s).ln() / params.sigma_r).tanh()))
}

/// Competition potential with both sizes given as log-sizes `r = log(s/s_m)`.
pub fn log_potential(params: &ModelParams, r: f64, r_prime: f64, dist: f64) -> f64 {
    potential_from_logs(params, r, r_prime, params.spatial_factor(dist * dist))
}

/// Exact solution of the competition-free Gompertz equation with `s(0) = s0`:
/// `S (s0/S)^{exp(-γ t)}`.
pub fn gompertz_closed_form(traits: &PlantTraits, s0: f64, t: f64) -> f64 {
    let big_s = traits.asymptotic_size;
    big_s * (s0 / big_s).powf((-traits.growth_rate * t).exp())
}

/// Right-hand side of the competition-free Gompertz equation.
pub fn gompertz_rhs(params: &ModelParams, traits: &PlantTraits, s: f64) -> f64 {
    traits.growth_rate * s * (params.log_size(traits.asymptotic_size) - params.log_size(s))
}

/// Linear differential inequality `y' ≤ a − b y` (or `≥`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallEnvelope {
    pub drive: f64,
    pub decay: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    Upper,
    Lower,
}

/// `a/b + (y0 − a/b) e^{−bt}`: the envelope value bounding `y(t)` from
/// above (resp. below) when `y' ≤ a − by` (resp. `≥`).
///
/// The formula is the same for both directions; the direction only records
/// which inequality the caller established.
pub fn gronwall_bound(env: &GronwallEnvelope, t: f64, _direction: BoundDirection) -> Result<f64> {
    if env.decay == 0.0 {
        return Err(Error::Domain("Grönwall decay constant must be nonzero".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let ratio = env.drive / env.decay;
    Ok(ratio + (env.y0 - ratio) * (-env.decay * t).exp())
}

/// Size envelopes guaranteed along any admissible population trajectory:
/// `s_m (s0/s_m)^{e^{-γt}} ≤ s(t) ≤ S (s0/s_m)^{e^{-γt}}`.
///
/// The upper bound is looser than the exact competition-free solution
/// `S (s0/S)^{e^{-γt}}` but is what the existence argument establishes.
pub fn size_envelope(params: &ModelParams, traits: &PlantTraits, s0: f64, t: f64) -> (f64, f64) {
    let w = (s0 / params.s_min).powf((-traits.growth_rate * t).exp());
    (params.s_min * w, traits.asymptotic_size * w)
}

/// Outcome of [`validate_initial_config`].
#[derive(Debug, Clone, PartialEq)]
pub enum Admissibility {
    Accepted,
    Rejected { index: usize, reason: String },
}

impl Admissibility {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Admissibility::Accepted)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Admissibility::Accepted => Ok(()),
            Admissibility::Rejected { index, reason } => Err(Error::Inadmissible { index, reason }),
        }
    }
}

/// Checks a single individual: `s_m < s0 < S < s_m e^{R_M}` and `γ > 0`.
pub fn check_individual(params: &ModelParams, traits: &PlantTraits, s0: f64) -> Option<String> {
    let big_s = traits.asymptotic_size;
    if !(s0 > params.s_min) {
        return Some(format!("initial size {s0} must exceed s_m = {}", params.s_min));
    }
    if !(s0 < big_s) {
        return Some(format!("initial size {s0} must be below asymptotic size {big_s}"));
    }
    if !(big_s < params.s_max()) {
        return Some(format!(
            "asymptotic size {big_s} must be below s_m e^R_M = {}",
            params.s_max()
        ));
    }
    if !(traits.growth_rate > 0.0 && traits.growth_rate.is_finite()) {
        return Some(format!("growth rate {} must be strictly positive", traits.growth_rate));
    }
    if !(traits.position[0].is_finite() && traits.position[1].is_finite()) {
        return Some("position must be finite".into());
    }
    None
}

/// Checks the hypotheses guaranteeing a global solution with sizes in
/// `(s_m, S_i)` and competition indices in `[0, 1]`.
pub fn validate_initial_config(
    params: &ModelParams,
    traits: &[PlantTraits],
    sizes0: &[f64],
) -> Result<Admissibility> {
    if traits.len() != sizes0.len() {
        return Err(Error::LengthMismatch {
            expected: traits.len(),
            got: sizes0.len(),
        });
    }
    if traits.len() < 2 {
        return Err(Error::TooFewIndividuals {
            min: 2,
            got: traits.len(),
        });
    }
    for (index, (th, &s0)) in traits.iter().zip(sizes0).enumerate() {
        if let Some(reason) = check_individual(params, th, s0) {
            return Ok(Admissibility::Rejected { index, reason });
        }
    }
    Ok(Admissibility::Accepted)
}
