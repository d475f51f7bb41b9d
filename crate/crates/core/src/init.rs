//! Parametric initial distribution of plants: Gaussian positions, trait
//! surfaces `S̄(x)`, `γ̄(x)` with truncated-normal scatter, and the initial
//! size law.
//!
//! Sampling is reproducible and nested: every (stream, coordinate,
//! individual) triple has its own block of a ChaCha8 key stream, so drawing
//! `n + m` individuals returns the same first `n` as drawing `n`.

use std::io::Write;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{check_individual, ModelParams, PlantTraits};

/// Gaussian bump surface `offset + (peak−offset) g₁(x) − (offset−trough) g₂(x)`
/// with `g_k(x) = exp(−½ (x−c_k)ᵀ H_k (x−c_k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    pub offset: f64,
    pub peak_value: f64,
    pub trough_value: f64,
    pub peak_center: [f64; 2],
    pub trough_center: [f64; 2],
    pub peak_curvature: [[f64; 2]; 2],
    pub trough_curvature: [[f64; 2]; 2],
}

impl SurfaceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.trough_value <= self.offset && self.offset <= self.peak_value) {
            return Err(Error::InvalidParams(format!(
                "surface values must satisfy trough <= offset <= peak ({} <= {} <= {})",
                self.trough_value, self.offset, self.peak_value
            )));
        }
        for (name, h) in [("peak", self.peak_curvature), ("trough", self.trough_curvature)] {
            let symmetric = h[0][1] == h[1][0];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !symmetric || !(h[0][0] > 0.0) || !(det > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} curvature must be symmetric positive definite"
                )));
            }
        }
        Ok(())
    }

    /// Constant surface equal to `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self {
            offset: value,
            peak_value: value,
            trough_value: value,
            peak_center: [0.0, 0.0],
            trough_center: [0.0, 0.0],
            peak_curvature: [[1.0, 0.0], [0.0, 1.0]],
            trough_curvature: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

fn quad_form(h: &[[f64; 2]; 2], d: [f64; 2]) -> f64 {
    d[0] * (h[0][0] * d[0] + h[0][1] * d[1]) + d[1] * (h[1][0] * d[0] + h[1][1] * d[1])
}

/// Evaluates the surface at position `x`.
pub fn surface_eval(sp: &SurfaceParams, x: [f64; 2]) -> f64 {
    let d1 = [x[0] - sp.peak_center[0], x[1] - sp.peak_center[1]];
    let d2 = [x[0] - sp.trough_center[0], x[1] - sp.trough_center[1]];
    sp.offset + (sp.peak_value - sp.offset) * (-0.5 * quad_form(&sp.peak_curvature, d1)).exp()
        - (sp.offset - sp.trough_value) * (-0.5 * quad_form(&sp.trough_curvature, d2)).exp()
}

/// Law of the initial size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialSizeLaw {
    PointMass { value: f64 },
    Uniform { min: f64, max: f64 },
}

impl InitialSizeLaw {
    /// `(inf, sup)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            InitialSizeLaw::PointMass { value } => (value, value),
            InitialSizeLaw::Uniform { min, max } => (min, max),
        }
    }

    pub fn midpoint(&self) -> f64 {
        let (a, b) = self.support();
        0.5 * (a + b)
    }
}

/// Full description of the initial distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mu0Config {
    pub s0_law: InitialSizeLaw,
    /// Position spread `L`: positions are `N(0, L² I₂)`.
    pub position_spread: f64,
    pub size_surface: SurfaceParams,
    pub rate_surface: SurfaceParams,
    /// Conditional standard deviation of `S` given `x`.
    pub size_sd: f64,
    /// Conditional standard deviation of `γ` given `x`.
    pub rate_sd: f64,
    pub params: ModelParams,
    pub seed: u64,
}

impl Mu0Config {
    /// Initial distribution used for the population simulations: constant
    /// initial size 0.1, `L = 1`, `S̄` between 0.5 and 1.0 around 0.75 with
    /// extrema at `(∓L, 0)`, `γ̄` between 0.1 and 2 around 1.05 with extrema
    /// at `(0, ±L)`, unit curvatures, scatter 0.1 on both traits.
    pub fn table1(seed: u64) -> Self {
        let l = 1.0;
        let h = [[1.0 / (l * l), 0.0], [0.0, 1.0 / (l * l)]];
        Self {
            s0_law: InitialSizeLaw::PointMass { value: 0.1 },
            position_spread: l,
            size_surface: SurfaceParams {
                offset: 0.75,
                peak_value: 1.0,
                trough_value: 0.5,
                peak_center: [-l, 0.0],
                trough_center: [l, 0.0],
                peak_curvature: h,
                trough_curvature: h,
            },
            rate_surface: SurfaceParams {
                offset: 1.05,
                peak_value: 2.0,
                trough_value: 0.1,
                peak_center: [0.0, l],
                trough_center: [0.0, -l],
                peak_curvature: h,
                trough_curvature: h,
            },
            size_sd: 0.1,
            rate_sd: 0.1,
            params: ModelParams::default(),
            seed,
        }
    }

    /// Same as [`Mu0Config::table1`] with initial sizes uniform on `[0.1, 0.3]`
    /// (the mean-field experiment).
    pub fn table2(seed: u64) -> Self {
        Self {
            s0_law: InitialSizeLaw::Uniform { min: 0.1, max: 0.3 },
            ..Self::table1(seed)
        }
    }

    /// Truncation interval of `S`: `[S_m, s_m e^{R_M}]`.
    pub fn size_bounds(&self) -> (f64, f64) {
        (self.size_surface.trough_value, self.params.s_max())
    }

    /// Truncation interval of `γ`: `[0, γ_M]`.
    pub fn rate_bounds(&self) -> (f64, f64) {
        (0.0, self.rate_surface.peak_value)
    }

    /// Largest possible growth rate `γ_M`.
    pub fn rate_max(&self) -> f64 {
        self.rate_surface.peak_value
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.size_surface.validate()?;
        self.rate_surface.validate()?;
        for (name, v) in [
            ("position_spread", self.position_spread),
            ("size_sd", self.size_sd),
            ("rate_sd", self.rate_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be strictly positive")));
            }
        }
        let (s_lo, s_hi) = self.s0_law.support();
        let (big_lo, big_hi) = self.size_bounds();
        if !(self.params.s_min < s_lo && s_lo <= s_hi && s_hi < big_lo) {
            return Err(Error::InvalidParams(format!(
                "need s_m < s0 support < S_m: {} < [{s_lo}, {s_hi}] < {big_lo}",
                self.params.s_min
            )));
        }
        if !(big_lo < big_hi) {
            return Err(Error::InvalidParams(format!(
                "inadmissible truncation interval for S: [{big_lo}, {big_hi}]"
            )));
        }
        let (g_lo, g_hi) = self.rate_bounds();
        if !(g_lo < g_hi) {
            return Err(Error::InvalidParams(format!(
                "inadmissible truncation interval for gamma: [{g_lo}, {g_hi}]"
            )));
        }
        Ok(())
    }
}

/// One initial condition `(s0, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s0: f64,
    pub traits: PlantTraits,
}

/// Independent sample sets drawn from the same configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleStream {
    Population,
    Cloud,
    Training,
    Testing,
    Probes,
    Reference,
    /// Free-form stream identifier for callers needing additional sets.
    Custom(u32),
}

impl SampleStream {
    fn id(self) -> u64 {
        match self {
            SampleStream::Population => 0,
            SampleStream::Cloud => 1,
            SampleStream::Training => 2,
            SampleStream::Testing => 3,
            SampleStream::Probes => 4,
            SampleStream::Reference => 5,
            SampleStream::Custom(k) => 16 + k as u64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Coordinate {
    Position = 0,
    AsymptoticSize = 1,
    GrowthRate = 2,
    InitialSize = 3,
}

/// 32-bit words reserved per individual in each coordinate stream.
const WORDS_PER_INDIVIDUAL: u128 = 256;

/// Counter-addressed uniform source for one (stream, coordinate, individual).
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, stream: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_INDIVIDUAL);
        Self { rng }
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

fn coordinate_stream(seed: u64, stream: SampleStream, coord: Coordinate, index: usize) -> UniformStream {
    UniformStream::new(seed, stream.id() * 8 + coord as u64, index as u64)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Draws from `N(mean, sd²)` conditioned on `[lo, hi]` by inversion of the
/// truncated CDF. `hi` may be `+∞` and `lo` may be `−∞`.
pub fn sample_truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64, u: &mut UniformStream) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Domain(format!("truncation interval [{lo}, {hi}] is empty")));
    }
    if !(sd > 0.0) {
        return Err(Error::Domain(format!("standard deviation must be positive, got {sd}")));
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    // work in the lower tail where the CDF carries full relative precision
    let (a, b, flip) = if a > 0.0 { (-b, -a, true) } else { (a, b, false) };
    let z = truncated_std_normal(a, b, u.next_open01());
    let z = if flip { -z } else { z };
    Ok((mean + sd * z).clamp(lo, hi))
}

fn truncated_std_normal(a: f64, b: f64, u: f64) -> f64 {
    let n = std_normal();
    let pa = n.cdf(a);
    let pb = n.cdf(b);
    let mass = pb - pa;
    if mass > 0.0 && mass.is_finite() {
        let z = n.inverse_cdf(pa + u * mass);
        if z.is_finite() {
            return z.clamp(a, b);
        }
    }
    // Interval deep in the lower tail: the density is close to exponential
    // with rate |b| near b.
    let rate = -b;
    let width = b - a;
    let e = -(1.0 - u * (1.0 - (-rate * width).exp())).ln() / rate;
    (b - e).clamp(a, b)
}

/// Draws from `N(mean, sd²)` without truncation, by inversion.
pub fn sample_normal(mean: f64, sd: f64, u: &mut UniformStream) -> f64 {
    mean + sd * std_normal().inverse_cdf(u.next_open01())
}

/// Standard normal density, exposed for moment checks.
pub fn std_normal_pdf(z: f64) -> f64 {
    std_normal().pdf(z)
}

fn draw_individual(cfg: &Mu0Config, stream: SampleStream, index: usize) -> Result<Sample> {
    let mut ux = coordinate_stream(cfg.seed, stream, Coordinate::Position, index);
    let x = [
        sample_normal(0.0, cfg.position_spread, &mut ux),
        sample_normal(0.0, cfg.position_spread, &mut ux),
    ];

    let (s_lo, s_hi) = cfg.size_bounds();
    let mut us = coordinate_stream(cfg.seed, stream, Coordinate::AsymptoticSize, index);
    let s_mean = surface_eval(&cfg.size_surface, x);
    let mut big_s = sample_truncated_normal(s_mean, cfg.size_sd, s_lo, s_hi, &mut us)?;
    // boundary values are excluded from the open support
    while big_s <= s_lo || big_s >= s_hi {
        big_s = sample_truncated_normal(s_mean, cfg.size_sd, s_lo, s_hi, &mut us)?;
    }

    let (g_lo, g_hi) = cfg.rate_bounds();
    let mut ug = coordinate_stream(cfg.seed, stream, Coordinate::GrowthRate, index);
    let g_mean = surface_eval(&cfg.rate_surface, x);
    let mut gamma = sample_truncated_normal(g_mean, cfg.rate_sd, g_lo, g_hi, &mut ug)?;
    while gamma <= 0.0 {
        gamma = sample_truncated_normal(g_mean, cfg.rate_sd, g_lo, g_hi, &mut ug)?;
    }

    let s0 = match cfg.s0_law {
        InitialSizeLaw::PointMass { value } => value,
        InitialSizeLaw::Uniform { min, max } => {
            let mut u0 = coordinate_stream(cfg.seed, stream, Coordinate::InitialSize, index);
            min + (max - min) * u0.next_open01()
        }
    };
    Ok(Sample {
        s0,
        traits: PlantTraits::new(x, big_s, gamma),
    })
}

/// Draws individuals `start..start + count` of the given stream.
pub fn sample_stream_range(cfg: &Mu0Config, stream: SampleStream, start: usize, count: usize) -> Result<Vec<Sample>> {
    cfg.validate()?;
    (start..start + count)
        .map(|i| {
            let s = draw_individual(cfg, stream, i)?;
            if let Some(reason) = check_individual(&cfg.params, &s.traits, s.s0) {
                return Err(Error::Inadmissible { index: i, reason });
            }
            Ok(s)
        })
        .collect()
}

/// Draws the first `n` individuals of the given stream.
pub fn sample_stream(cfg: &Mu0Config, stream: SampleStream, n: usize) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Empty("sample size must be at least 1"));
    }
    sample_stream_range(cfg, stream, 0, n)
}

/// `n` i.i.d. draws from the initial distribution (population stream).
pub fn sample_mu0(cfg: &Mu0Config, n: usize) -> Result<Vec<Sample>> {
    sample_stream(cfg, SampleStream::Population, n)
}

/// Splits samples into the trait list and initial sizes.
pub fn split_samples(samples: &[Sample]) -> (Vec<PlantTraits>, Vec<f64>) {
    samples.iter().map(|s| (s.traits, s.s0)).unzip()
}

/// Writes `id,s0,x1,x2,S,gamma`.
pub fn write_samples_csv<W: Write>(samples: &[Sample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "id,s0,x1,x2,S,gamma")?;
    for (id, s) in samples.iter().enumerate() {
        writeln!(
            w,
            "{id},{},{},{},{},{}",
            s.s0, s.traits.position[0], s.traits.position[1], s.traits.asymptotic_size, s.traits.growth_rate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_initial_config;

    #[test]
    fn surface_limits() {
        let cfg = Mu0Config::table1(0);
        let far = surface_eval(&cfg.size_surface, [100.0, -80.0]);
        assert_eq!(far, 0.75);
        let v = surface_eval(&cfg.size_surface, [-1.0, 0.0]);
        assert!((v - 0.966_166_179_190_846_8).abs() < 1e-15, "{v}");
        // isolated peak
        let mut sp = cfg.size_surface;
        sp.trough_center = [1e3, 0.0];
        assert!((surface_eval(&sp, sp.peak_center) - sp.peak_value).abs() < 1e-15);
    }

    #[test]
    fn constant_surface_is_offset_everywhere() {
        let sp = SurfaceParams::constant(0.42);
        for x in [[0.0, 0.0], [3.0, -2.0], [1e3, 1e3]] {
            assert_eq!(surface_eval(&sp, x), 0.42);
        }
    }

    #[test]
    fn truncated_normal_degenerate_sd() {
        let mut u = UniformStream::new(1, 0, 0);
        for _ in 0..20 {
            let v = sample_truncated_normal(0.3, 1e-12, 0.0, 1.0, &mut u).unwrap();
            assert!((v - 0.3).abs() < 1e-10);
        }
    }

    #[test]
    fn truncated_normal_rejects_empty_interval() {
        let mut u = UniformStream::new(1, 0, 0);
        assert!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut u).is_err());
        assert!(sample_truncated_normal(0.0, 1.0, 2.0, 1.0, &mut u).is_err());
        assert!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut u).is_err());
    }

    #[test]
    fn truncated_normal_far_tail_stays_in_interval() {
        let mut u = UniformStream::new(3, 0, 0);
        for _ in 0..100 {
            let v = sample_truncated_normal(0.0, 1.0, 40.0, 41.0, &mut u).unwrap();
            assert!((40.0..=41.0).contains(&v));
            let w = sample_truncated_normal(0.0, 1.0, -41.0, -40.0, &mut u).unwrap();
            assert!((-41.0..=-40.0).contains(&w));
        }
    }

    #[test]
    fn samples_are_admissible_and_deterministic() {
        let cfg = Mu0Config::table1(11);
        let a = sample_mu0(&cfg, 500).unwrap();
        let b = sample_mu0(&cfg, 500).unwrap();
        assert_eq!(a, b);
        let (traits, s0) = split_samples(&a);
        assert!(validate_initial_config(&cfg.params, &traits, &s0).unwrap().is_accepted());
    }

    #[test]
    fn samples_are_nested() {
        let cfg = Mu0Config::table2(5);
        let small = sample_mu0(&cfg, 50).unwrap();
        let big = sample_mu0(&cfg, 400).unwrap();
        assert_eq!(&big[..50], &small[..]);
        let tail = sample_stream_range(&cfg, SampleStream::Population, 50, 350).unwrap();
        assert_eq!(&big[50..], &tail[..]);
    }

    #[test]
    fn streams_are_distinct() {
        let cfg = Mu0Config::table2(5);
        let a = sample_stream(&cfg, SampleStream::Cloud, 10).unwrap();
        let b = sample_stream(&cfg, SampleStream::Training, 10).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = Mu0Config::table1(0);
        cfg.s0_law = InitialSizeLaw::PointMass { value: 0.6 };
        assert!(sample_mu0(&cfg, 3).is_err());
        let mut cfg = Mu0Config::table1(0);
        cfg.size_surface.trough_value = 2.0;
        assert!(cfg.validate().is_err());
        assert!(sample_mu0(&Mu0Config::table1(0), 0).is_err());
    }

    #[test]
    fn csv_header() {
        let cfg = Mu0Config::table1(0);
        let s = sample_mu0(&cfg, 2).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,s0,x1,x2,S,gamma\n0,0.1,"));
        assert_eq!(text.lines().count(), 3);
    }
}
