//! Wasserstein distances between plant populations, flow-gap diagnostics and
//! the a-priori error certificate of the mean-field approximation.
//!
//! Plants live in `Z = (size, x, S, γ)` endowed with
//! `m_Z(z₁, z₂) = |s₁−s₂|/s_m + |S₁−S₂|/s_m + |x₁−x₂|/ℓ + τ_r|γ₁−γ₂|`.

use std::io::Write;
use std::time::Instant;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::init::{sample_stream, Mu0Config, Sample, SampleStream};
use crate::meanfield::{flow_eval_many, MeanFieldModel};
use crate::model::{ModelParams, PlantTraits};
use crate::numeric::CompensatedSum;
use crate::ode::SolverConfig;
use crate::population::{empirical_flow_batch, integrate, PopulationState, Trajectory};

/// Largest instance accepted by the exact matching solver.
pub const DEFAULT_MATCHING_CAP: usize = 512;

/// Scales of the four terms of `m_Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ZMetricWeights {
    pub s_m: f64,
    /// Position scale `ℓ`.
    pub ell: f64,
    /// Rate scale `τ_r`.
    pub tau_r: f64,
}

impl ZMetricWeights {
    pub fn new(s_m: f64, ell: f64, tau_r: f64) -> Result<Self> {
        let w = Self { s_m, ell, tau_r };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.s_m, self.ell, self.tau_r].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("metric weights must be positive, got {self:?}")))
        }
    }

    /// `ℓ = L` (position spread) and `τ_r = 1/γ_M`.
    pub fn for_config(mu0: &Mu0Config) -> Self {
        Self {
            s_m: mu0.params.s_min,
            ell: mu0.position_spread,
            tau_r: 1.0 / mu0.rate_max(),
        }
    }
}

/// A point of `Z`: a size together with the plant traits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZAtom {
    pub size: f64,
    pub traits: PlantTraits,
}

impl ZAtom {
    pub fn new(size: f64, traits: PlantTraits) -> Self {
        Self { size, traits }
    }
}

impl From<Sample> for ZAtom {
    fn from(s: Sample) -> Self {
        Self::new(s.s0, s.traits)
    }
}

/// Ground metric `m_Z`.
pub fn m_z(a: &ZAtom, b: &ZAtom, w: &ZMetricWeights) -> f64 {
    let dx = a.traits.position[0] - b.traits.position[0];
    let dy = a.traits.position[1] - b.traits.position[1];
    (a.size - b.size).abs() / w.s_m
        + (a.traits.asymptotic_size - b.traits.asymptotic_size).abs() / w.s_m
        + dx.hypot(dy) / w.ell
        + w.tau_r * (a.traits.growth_rate - b.traits.growth_rate).abs()
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::Empty("empirical measure"));
    }
    Ok(())
}

/// Exact `W1` between two equal-weight empirical measures on the line.
pub fn w1_sorted_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in W1 input".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let sum: CompensatedSum = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    Ok(sum.value() / a.len() as f64)
}

/// Minimum-cost perfect matching of an `n × n` row-major cost matrix by
/// shortest augmenting paths with dual potentials, `O(n³)`.
///
/// Returns `assign` with row `i` matched to column `assign[i]`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::LengthMismatch {
            expected: n * n,
            got: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("non-finite assignment cost".into()));
    }
    // 1-based bookkeeping; column 0 is the virtual root of each search
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    Ok(assign)
}

fn matching_cost(cost: &[f64], n: usize, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect::<CompensatedSum>().value()
}

/// Exact `W1` under `m_Z` between equal-weight empirical measures, with the
/// default size cap.
pub fn w1_matching(a: &[ZAtom], b: &[ZAtom], w: &ZMetricWeights) -> Result<f64> {
    w1_matching_capped(a, b, w, DEFAULT_MATCHING_CAP)
}

/// [`w1_matching`] with an explicit cap on the number of atoms.
pub fn w1_matching_capped(a: &[ZAtom], b: &[ZAtom], w: &ZMetricWeights, cap: usize) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    w.validate()?;
    let n = a.len();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let cost: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| m_z(x, y, w))).collect();
    let assign = min_cost_assignment(&cost, n)?;
    Ok(matching_cost(&cost, n, &assign) / n as f64)
}

/// `W2` between two equal-size point clouds in the plane. Exact (squared
/// Euclidean assignment) up to `cap` points; above that the identity coupling
/// is used, which gives an upper bound.
pub fn w2_positions(a: &[[f64; 2]], b: &[[f64; 2]], cap: usize) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    let n = a.len();
    let sq = |p: &[f64; 2], q: &[f64; 2]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
    let total = if n <= cap {
        let cost: Vec<f64> = a.iter().flat_map(|p| b.iter().map(move |q| sq(p, q))).collect();
        let assign = min_cost_assignment(&cost, n)?;
        matching_cost(&cost, n, &assign)
    } else {
        a.iter().zip(b).map(|(p, q)| sq(p, q)).collect::<CompensatedSum>().value()
    };
    Ok((total / n as f64).sqrt())
}

/// Mean absolute gap between the empirical flow against `background` and
/// the approximate mean-field flow, over probes sharing their initial data
/// (diagonal coupling).
pub fn flow_gap(
    params: &ModelParams,
    background: &Trajectory,
    model: &MeanFieldModel,
    probes: &[(f64, PlantTraits)],
    t: f64,
    solver: &SolverConfig,
) -> Result<f64> {
    let gaps = flow_gaps(params, background, model, probes, &[t], solver)?;
    Ok(gaps[0])
}

/// [`flow_gap`] at several times, integrating the probes once.
pub fn flow_gaps(
    params: &ModelParams,
    background: &Trajectory,
    model: &MeanFieldModel,
    probes: &[(f64, PlantTraits)],
    times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    if probes.is_empty() {
        return Err(Error::Empty("probe list"));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let cfg = SolverConfig {
        t_end,
        snapshot_times: vec![t_end],
        ..solver.clone()
    };
    let empirical = empirical_flow_batch(params, background, probes, &cfg)?;
    let mean_field = flow_eval_many(model, times, probes)?;
    times
        .iter()
        .zip(&mean_field)
        .map(|(&t, mf)| {
            let sum = empirical
                .iter()
                .zip(mf)
                .map(|(p, m)| Ok((p.size_at(t)? - m).abs()))
                .collect::<Result<CompensatedSum>>()?;
            Ok(sum.value() / probes.len() as f64)
        })
        .collect()
}

/// Constants and functionals entering the error certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCoefficients {
    pub alpha_s: f64,
    pub alpha_gamma: f64,
    pub beta_n: f64,
    /// `A(μ̂_N(0))`.
    pub a_mu: f64,
    /// `B(μ̂_N^x(0), μ₀^x)`.
    pub b_mu: f64,
    pub s0_max: f64,
    /// Lower bound `S_m` of the asymptotic sizes.
    pub s_m_lower: f64,
    /// `s_m e^{−2R_M/(2N−3)}`.
    pub s_m_n: f64,
    /// Number of negative radicands clamped to zero while evaluating `B`.
    pub clamped_radicands: usize,
}

/// Monte-Carlo estimate of `A(μ)` and its standard error.
pub fn functional_a(params: &ModelParams, s0_max: f64, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("sample for A"));
    }
    let rm = params.log_range;
    let k = s0_max * rm.exp() * rm;
    let vals: Vec<f64> = samples
        .iter()
        .map(|p| {
            let g = p.traits.growth_rate;
            let big_s = p.traits.asymptotic_size;
            (g * big_s * p.s0 / params.s_min * params.log_size(p.s0) + k * g * params.log_size(big_s)) / (2.0 * rm)
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// `B(μ₁, μ₂)` for two position clouds; returns the value and the number of
/// clamped negative radicands.
pub fn functional_b(params: &ModelParams, s0_max: f64, gamma_max: f64, mu1: &[[f64; 2]], mu2: &[[f64; 2]]) -> Result<(f64, usize)> {
    if mu1.is_empty() || mu2.is_empty() {
        return Err(Error::Empty("position cloud for B"));
    }
    let moments = |c: &[[f64; 2]]| {
        let n = c.len() as f64;
        let abs: CompensatedSum = c.iter().map(|p| p[0].hypot(p[1])).collect();
        let sq: CompensatedSum = c.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        let mx: CompensatedSum = c.iter().map(|p| p[0]).collect();
        let my: CompensatedSum = c.iter().map(|p| p[1]).collect();
        (abs.value() / n, sq.value() / n, [mx.value() / n, my.value() / n])
    };
    let (_, sq1, m1) = moments(mu1);
    let (abs2, sq2, m2) = moments(mu2);
    let msum = [m1[0] + m2[0], m1[1] + m2[1]];
    let mut clamped = 0;
    let inner: CompensatedSum = mu1
        .iter()
        .map(|x| {
            let rad = 2.0 * sq1 + 2.0 * sq2 - 4.0 * (x[0] * msum[0] + x[1] * msum[1]);
            if rad < 0.0 {
                clamped += 1;
                0.0
            } else {
                rad.sqrt()
            }
        })
        .collect();
    let rm = params.log_range;
    let pre = s0_max * rm.exp() * rm * gamma_max / (params.sigma_x * params.sigma_x);
    let value = pre * (2.0 * abs2 + (2.0 * sq2 + 2.0 * sq1).sqrt() + inner.value() / mu1.len() as f64);
    Ok((value, clamped))
}

/// Evaluates the certificate constants for a population of size `n`, using
/// `empirical` as `μ̂_N(0)` and `reference` as a sample of `μ₀`.
pub fn bound_coefficients(mu0: &Mu0Config, empirical: &[Sample], reference: &[Sample], n: usize) -> Result<BoundCoefficients> {
    if n < 2 {
        return Err(Error::TooFewIndividuals { min: 2, got: n });
    }
    let params = &mu0.params;
    let rm = params.log_range;
    let s0_max = mu0.s0_law.support().1;
    let s_m_lower = mu0.size_bounds().0;
    let gamma_max = mu0.rate_max();
    let s_m_n = params.s_min * (-2.0 * rm / (2.0 * n as f64 - 3.0)).exp();
    let alpha_s = s0_max / s_m_lower;
    let alpha_gamma = s0_max * (s0_max / params.s_min).ln() * rm.exp() + s0_max * rm.exp() * rm;
    let beta_n = s0_max * rm.exp() * rm * gamma_max / (s_m_n * params.sigma_r) * (1.0 + params.sigma_r / rm + 0.5);
    let (a_mu, _) = functional_a(params, s0_max, empirical)?;
    let x1: Vec<[f64; 2]> = empirical.iter().map(|s| s.traits.position).collect();
    let x2: Vec<[f64; 2]> = reference.iter().map(|s| s.traits.position).collect();
    let (b_mu, clamped_radicands) = functional_b(params, s0_max, gamma_max, &x1, &x2)?;
    Ok(BoundCoefficients {
        alpha_s,
        alpha_gamma,
        beta_n,
        a_mu,
        b_mu,
        s0_max,
        s_m_lower,
        s_m_n,
        clamped_radicands,
    })
}

/// Initial-time distances between `μ̂_N(0)` and a sample of `μ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialDistances {
    pub w1_s: f64,
    pub w2_x: f64,
    pub w1_big_s: f64,
    pub w1_gamma: f64,
}

pub fn initial_distances(empirical: &[Sample], reference: &[Sample], cap: usize) -> Result<InitialDistances> {
    let col = |v: &[Sample], f: fn(&Sample) -> f64| v.iter().map(f).collect::<Vec<f64>>();
    let x1: Vec<[f64; 2]> = empirical.iter().map(|s| s.traits.position).collect();
    let x2: Vec<[f64; 2]> = reference.iter().map(|s| s.traits.position).collect();
    Ok(InitialDistances {
        w1_s: w1_sorted_1d(&col(empirical, |s| s.s0), &col(reference, |s| s.s0))?,
        w2_x: w2_positions(&x1, &x2, cap)?,
        w1_big_s: w1_sorted_1d(
            &col(empirical, |s| s.traits.asymptotic_size),
            &col(reference, |s| s.traits.asymptotic_size),
        )?,
        w1_gamma: w1_sorted_1d(&col(empirical, |s| s.traits.growth_rate), &col(reference, |s| s.traits.growth_rate))?,
    })
}

/// Right-hand side of the `W1(μ̂_N(t), μ∞(t))` certificate. Overflows to
/// `+∞` when `β_N t` is large, which is the common case: the constants are
/// far from sharp.
pub fn bound_value(
    coeffs: &BoundCoefficients,
    dist: &InitialDistances,
    params: &ModelParams,
    w: &ZMetricWeights,
    n: usize,
    t: f64,
) -> f64 {
    let sm = params.s_min;
    let rm = params.log_range;
    let b = coeffs.beta_n;
    let e = (b * t).exp();
    let em1 = (b * t).exp_m1();
    rm.exp() / sm * dist.w1_s * e
        + (coeffs.b_mu / (sm * b) * em1 + 1.0 / w.ell) * dist.w2_x
        + (coeffs.alpha_s * e + 1.0) / sm * dist.w1_big_s
        + (coeffs.alpha_gamma / sm * em1 + w.tau_r) * dist.w1_gamma
        + 1.0 / (sm * (n as f64 - 1.0)) * (coeffs.a_mu / b * em1 + coeffs.s0_max * (rm + b * t).exp() * rm)
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Distances at one time for one population size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportRow {
    pub t: f64,
    /// `W1` of the size marginals, in size units.
    pub w1_size: f64,
    /// `W1` under `m_Z`; `None` above the matching cap.
    pub w1_full: Option<f64>,
    pub flow_gap: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub bound_value: f64,
}

/// Convergence diagnostics of one population size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub rows: Vec<ReportRow>,
    pub coefficients: BoundCoefficients,
    pub initial: InitialDistances,
    /// Wall-clock seconds; kept out of the serialized output so reports stay
    /// reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

/// Writes `N,t,w1_size,w1_full,flow_gap,bound_value` rows.
pub fn write_reports_csv<W: Write>(reports: &[DistanceReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "N,t,w1_size,w1_full,flow_gap,bound_value")?;
    for r in reports {
        for row in &r.rows {
            let full = row.w1_full.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n, row.t, row.w1_size, full, row.flow_gap, row.bound_value
            )?;
        }
    }
    Ok(())
}

/// What the finite populations are compared with.
#[derive(Debug, Clone, Copy)]
pub enum Comparison<'a> {
    /// The trained approximation of the mean-field flow.
    MeanField(&'a MeanFieldModel),
    /// The finite population itself (all distances vanish).
    SelfEmpirical,
}

/// Settings of [`convergence_experiment`].
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub n_list: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub solver: SolverConfig,
    pub weights: ZMetricWeights,
    pub matching_cap: usize,
}

fn validate_convergence(cfg: &ConvergenceConfig) -> Result<()> {
    if cfg.n_list.is_empty() {
        return Err(Error::Empty("population size list"));
    }
    if cfg.n_list[0] < 2 {
        return Err(Error::TooFewIndividuals {
            min: 2,
            got: cfg.n_list[0],
        });
    }
    if cfg.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(format!(
            "population sizes must be strictly increasing, got {:?}",
            cfg.n_list
        )));
    }
    if cfg.t_grid.is_empty() {
        return Err(Error::Empty("time grid"));
    }
    if cfg.t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || cfg.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("time grid must be nonnegative and strictly increasing".into()));
    }
    cfg.weights.validate()
}

/// For each population size, simulates the population drawn from `mu0`
/// (nested across sizes), compares it with the reference at the same initial
/// data and reports the distances on the time grid.
pub fn convergence_experiment(mu0: &Mu0Config, comparison: Comparison<'_>, cfg: &ConvergenceConfig) -> Result<Vec<DistanceReport>> {
    mu0.validate()?;
    validate_convergence(cfg)?;
    let params = mu0.params;
    let t_end = *cfg.t_grid.last().expect("nonempty grid");
    if let Comparison::MeanField(model) = comparison {
        if t_end > model.horizon {
            return Err(Error::OutOfRange {
                t: t_end,
                lo: 0.0,
                hi: model.horizon,
            });
        }
    }
    let solver = SolverConfig {
        t_end,
        snapshot_times: cfg.t_grid.clone(),
        ..cfg.solver.clone()
    };
    let mut reports = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let start = Instant::now();
        let samples = sample_stream(mu0, SampleStream::Population, n)?;
        let reference = sample_stream(mu0, SampleStream::Reference, n)?;
        let probes: Vec<(f64, PlantTraits)> = samples.iter().map(|s| (s.s0, s.traits)).collect();
        let initial = PopulationState::new(
            samples.iter().map(|s| s.traits).collect(),
            samples.iter().map(|s| s.s0).collect(),
            0.0,
        )?;
        let traj = integrate(&params, &initial, &solver)?;
        let coefficients = bound_coefficients(mu0, &samples, &reference, n)?;
        let init_dist = initial_distances(&samples, &reference, cfg.matching_cap)?;

        let (reference_sizes, gaps) = match comparison {
            Comparison::MeanField(model) => {
                let sizes = flow_eval_many(model, &cfg.t_grid, &probes)?;
                let gaps = flow_gaps(&params, &traj, model, &probes, &cfg.t_grid, &solver)?;
                (sizes, gaps)
            }
            Comparison::SelfEmpirical => {
                let sizes = cfg.t_grid.iter().map(|&t| traj.sizes_at(t)).collect::<Result<Vec<_>>>()?;
                (sizes, vec![0.0; cfg.t_grid.len()])
            }
        };

        let mut rows = Vec::with_capacity(cfg.t_grid.len());
        for ((&t, ref_sizes), gap) in cfg.t_grid.iter().zip(&reference_sizes).zip(gaps) {
            let sizes = traj.sizes_at(t)?;
            let w1_size = w1_sorted_1d(&sizes, ref_sizes)?;
            let w1_full = if n <= cfg.matching_cap {
                let a: Vec<ZAtom> = sizes.iter().zip(&probes).map(|(&s, p)| ZAtom::new(s, p.1)).collect();
                let b: Vec<ZAtom> = ref_sizes.iter().zip(&probes).map(|(&s, p)| ZAtom::new(s, p.1)).collect();
                Some(w1_matching_capped(&a, &b, &cfg.weights, cfg.matching_cap)?)
            } else {
                None
            };
            rows.push(ReportRow {
                t,
                w1_size,
                w1_full,
                flow_gap: gap,
                bound_value: bound_value(&coefficients, &init_dist, &params, &cfg.weights, n, t),
            });
        }
        reports.push(DistanceReport {
            n,
            rows,
            coefficients,
            initial: init_dist,
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::Mu0Config;

    fn weights() -> ZMetricWeights {
        ZMetricWeights::new(0.05, 1.0, 0.5).unwrap()
    }

    fn atom(s: f64, x: f64, y: f64, big_s: f64, g: f64) -> ZAtom {
        ZAtom::new(s, PlantTraits::new([x, y], big_s, g))
    }

    #[test]
    fn sorted_w1_examples() {
        assert_eq!(w1_sorted_1d(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert!((w1_sorted_1d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let a = [0.3, -1.2, 4.0, 2.5];
        let b: Vec<f64> = a.iter().map(|v| v + 0.75).collect();
        assert!((w1_sorted_1d(&a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(w1_sorted_1d(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn assignment_small_known() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&cost, 3).unwrap();
        assert_eq!(matching_cost(&cost, 3, &a), 5.0);
    }

    #[test]
    fn matching_identical_is_zero() {
        let a = vec![atom(0.2, 0.1, 0.3, 0.8, 1.0), atom(0.3, -0.4, 0.2, 0.6, 1.5)];
        assert_eq!(w1_matching(&a, &a, &weights()).unwrap(), 0.0);
    }

    #[test]
    fn matching_size_only_reduces_to_sorted() {
        let sa = [0.2, 0.15, 0.3, 0.11];
        let sb = [0.25, 0.1, 0.12, 0.29];
        // same trait at every atom so only sizes differ
        let a: Vec<ZAtom> = sa.iter().map(|&s| atom(s, 0.2, 0.2, 0.7, 1.0)).collect();
        let b: Vec<ZAtom> = sb.iter().map(|&s| atom(s, 0.2, 0.2, 0.7, 1.0)).collect();
        let w = weights();
        let expected = w1_sorted_1d(&sa, &sb).unwrap() / w.s_m;
        assert!((w1_matching(&a, &b, &w).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matching_cap_refuses() {
        let a = vec![atom(0.2, 0.0, 0.0, 0.8, 1.0); 4];
        assert!(matches!(w1_matching_capped(&a, &a, &weights(), 3), Err(Error::TooLarge { n: 4, cap: 3 })));
    }

    #[test]
    fn alpha_s_table2() {
        let mu0 = Mu0Config::table2(1);
        let s = sample_stream(&mu0, SampleStream::Population, 20).unwrap();
        let r = sample_stream(&mu0, SampleStream::Reference, 20).unwrap();
        let c = bound_coefficients(&mu0, &s, &r, 20).unwrap();
        assert!((c.alpha_s - 0.6).abs() < 1e-15);
        assert!(bound_coefficients(&mu0, &s, &r, 1).is_err());
    }

    #[test]
    fn beta_decreases_with_n() {
        let mu0 = Mu0Config::table2(1);
        let s = sample_stream(&mu0, SampleStream::Population, 10).unwrap();
        let betas: Vec<f64> = [2usize, 3, 10, 100, 10_000]
            .iter()
            .map(|&n| bound_coefficients(&mu0, &s, &s, n).unwrap().beta_n)
            .collect();
        assert!(betas.windows(2).all(|w| w[1] < w[0]));
        let p = mu0.params;
        let limit = 0.3 * p.log_range.exp() * p.log_range * 2.0 / (p.s_min * p.sigma_r) * (1.0 + p.sigma_r / p.log_range + 0.5);
        assert!((betas[4] - limit).abs() / limit < 1e-3);
    }

    #[test]
    fn bound_is_nonnegative_and_infinite_for_large_t() {
        let mu0 = Mu0Config::table2(3);
        let s = sample_stream(&mu0, SampleStream::Population, 30).unwrap();
        let r = sample_stream(&mu0, SampleStream::Reference, 30).unwrap();
        let c = bound_coefficients(&mu0, &s, &r, 30).unwrap();
        let d = initial_distances(&s, &r, 64).unwrap();
        let w = ZMetricWeights::for_config(&mu0);
        let b0 = bound_value(&c, &d, &mu0.params, &w, 30, 0.0);
        assert!(b0.is_finite() && b0 > 0.0);
        assert_eq!(bound_value(&c, &d, &mu0.params, &w, 30, 10.0), f64::INFINITY);
    }

    #[test]
    fn report_json_uses_null_for_overflow() {
        let row = ReportRow {
            t: 1.0,
            w1_size: 0.1,
            w1_full: None,
            flow_gap: 0.0,
            bound_value: f64::INFINITY,
        };
        let v = serde_json::to_value(row).unwrap();
        assert!(v["bound_value"].is_null());
        assert!(v["w1_full"].is_null());
    }

    #[test]
    fn convergence_rejects_bad_lists() {
        let mu0 = Mu0Config::table1(0);
        let base = ConvergenceConfig {
            n_list: vec![50, 40],
            t_grid: vec![0.0, 1.0],
            solver: SolverConfig::default(),
            weights: ZMetricWeights::for_config(&mu0),
            matching_cap: DEFAULT_MATCHING_CAP,
        };
        assert!(convergence_experiment(&mu0, Comparison::SelfEmpirical, &base).is_err());
        let one = ConvergenceConfig { n_list: vec![1], ..base };
        assert!(convergence_experiment(&mu0, Comparison::SelfEmpirical, &one).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let mu0 = Mu0Config::table1(5);
        let cfg = ConvergenceConfig {
            n_list: vec![20],
            t_grid: vec![0.0, 2.0],
            solver: SolverConfig::default(),
            weights: ZMetricWeights::for_config(&mu0),
            matching_cap: DEFAULT_MATCHING_CAP,
        };
        let r = convergence_experiment(&mu0, Comparison::SelfEmpirical, &cfg).unwrap();
        for row in &r[0].rows {
            assert_eq!(row.w1_size, 0.0);
            assert_eq!(row.w1_full, Some(0.0));
            assert_eq!(row.flow_gap, 0.0);
        }
    }
}
