//! Finite-population dynamics: the coupled growth system, the empirical
//! measure, and the empirical flow of a probe plant grown against a frozen
//! population trajectory.
//!
//! All integration is carried out on log-sizes `r = log(s/s_m)`, in which
//! the system reads `r_i' = γ_i (ρ_i (1 − C_i) − r_i)` with `ρ_i = log(S_i/s_m)`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    check_individual, potential_from_logs, size_envelope, validate_initial_config, ModelParams, PlantTraits,
};
use crate::numeric::CompensatedSum;
use crate::ode::{self, DenseSolution, SolverConfig};

/// Breaches of the size invariants smaller than this (in log-size units)
/// are treated as round-off and clamped.
pub const INVARIANT_SLACK: f64 = 1e-9;

/// Sizes of all individuals at one time, together with their fixed traits.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub traits: Vec<PlantTraits>,
    pub sizes: Vec<f64>,
    pub t: f64,
}

impl PopulationState {
    pub fn new(traits: Vec<PlantTraits>, sizes: Vec<f64>, t: f64) -> Result<Self> {
        if traits.len() != sizes.len() {
            return Err(Error::LengthMismatch {
                expected: traits.len(),
                got: sizes.len(),
            });
        }
        Ok(Self { traits, sizes, t })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// Sum over `j != skip` of the potential exerted on a plant at log-size `r`
/// and position `x` by plants at log-sizes `r_others`, accumulated in index order.
#[inline]
fn potential_sum(
    params: &ModelParams,
    r: f64,
    x: [f64; 2],
    r_others: &[f64],
    traits: &[PlantTraits],
    skip: Option<usize>,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for (j, (&rj, th)) in r_others.iter().zip(traits).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d2 = crate::model::dist_sq(x, th.position);
        acc.add(potential_from_logs(params, r, rj, params.spatial_factor(d2)));
    }
    acc.value()
}

fn competition_indices_from_logs(params: &ModelParams, traits: &[PlantTraits], r: &[f64], out: &mut [f64]) {
    let denom = (r.len() - 1) as f64;
    for i in 0..r.len() {
        out[i] = potential_sum(params, r[i], traits[i].position, r, traits, Some(i)) / denom;
    }
}

/// Competition index of individual `i`: the average potential exerted on it
/// by all other individuals.
pub fn competition_index(params: &ModelParams, state: &PopulationState, i: usize) -> Result<f64> {
    let n = state.len();
    if n < 2 {
        return Err(Error::TooFewIndividuals { min: 2, got: n });
    }
    if i >= n {
        return Err(Error::Domain(format!("index {i} out of range for population of {n}")));
    }
    if state.sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("sizes must be strictly positive".into()));
    }
    let r: Vec<f64> = state.sizes.iter().map(|&s| params.log_size(s)).collect();
    Ok(potential_sum(params, r[i], state.traits[i].position, &r, &state.traits, Some(i)) / (n - 1) as f64)
}

/// All competition indices of a state.
pub fn competition_indices(params: &ModelParams, state: &PopulationState) -> Result<Vec<f64>> {
    let n = state.len();
    if n < 2 {
        return Err(Error::TooFewIndividuals { min: 2, got: n });
    }
    if state.sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("sizes must be strictly positive".into()));
    }
    let r: Vec<f64> = state.sizes.iter().map(|&s| params.log_size(s)).collect();
    let mut out = vec![0.0; n];
    competition_indices_from_logs(params, &state.traits, &r, &mut out);
    Ok(out)
}

/// Size growth rates `ds_i/dt = γ_i s_i (log(S_i/s_m)(1 − C_i) − log(s_i/s_m))`.
pub fn system_rhs(params: &ModelParams, state: &PopulationState) -> Result<Vec<f64>> {
    let c = competition_indices(params, state)?;
    Ok(state
        .traits
        .iter()
        .zip(&state.sizes)
        .zip(&c)
        .map(|((th, &s), &ci)| {
            th.growth_rate * s * (params.log_size(th.asymptotic_size) * (1.0 - ci) - params.log_size(s))
        })
        .collect())
}

fn log_rhs(params: &ModelParams, traits: &[PlantTraits], rho: &[f64], r: &[f64], dr: &mut [f64]) {
    competition_indices_from_logs(params, traits, r, dr);
    for i in 0..r.len() {
        let ci = dr[i];
        dr[i] = traits[i].growth_rate * (rho[i] * (1.0 - ci) - r[i]);
    }
}

/// Per-snapshot extrema recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotDiagnostics {
    pub t: f64,
    pub min_size: f64,
    pub max_size: f64,
    pub min_index: f64,
    pub max_index: f64,
    /// `min_i (s_i − s_m)`.
    pub min_lower_margin: f64,
    /// `min_i (S_i − s_i)`.
    pub min_upper_margin: f64,
}

/// Population trajectory sampled at the configured snapshot times, with the
/// continuous solution retained for evaluation at arbitrary times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
    pub competition: Vec<Vec<f64>>,
    pub diagnostics: Vec<SnapshotDiagnostics>,
    traits: Vec<PlantTraits>,
    initial_sizes: Vec<f64>,
    log_sizes: DenseSolution,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    pub fn traits(&self) -> &[PlantTraits] {
        &self.traits
    }

    pub fn t_end(&self) -> f64 {
        self.log_sizes.t_end()
    }

    pub fn accepted_steps(&self) -> usize {
        self.log_sizes.accepted_steps()
    }

    pub fn initial_sizes(&self) -> Vec<f64> {
        self.initial_sizes.clone()
    }

    pub fn log_sizes_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.log_sizes.eval_into(t, out)
    }

    /// Sizes of all individuals at time `t` (dense output; the initial sizes
    /// are returned exactly at the start time).
    pub fn sizes_at(&self, t: f64) -> Result<Vec<f64>> {
        let r = self.log_sizes.eval(t)?;
        if t == self.log_sizes.t_start() {
            return Ok(self.initial_sizes.clone());
        }
        Ok(r.into_iter().map(|ri| self.params.size_from_log(ri)).collect())
    }

    pub fn size_of(&self, i: usize, t: f64) -> Result<f64> {
        let r = self.log_sizes.eval_component(t, i)?;
        if t == self.log_sizes.t_start() {
            return Ok(self.initial_sizes[i]);
        }
        Ok(self.params.size_from_log(r))
    }

    pub fn state_at(&self, t: f64) -> Result<PopulationState> {
        PopulationState::new(self.traits.clone(), self.sizes_at(t)?, t)
    }

    /// Smallest margins `(s − lower, upper − s)` to the size envelopes over
    /// all snapshots and individuals; negative values are violations.
    pub fn envelope_margins(&self) -> (f64, f64) {
        let mut lo_margin = f64::INFINITY;
        let mut hi_margin = f64::INFINITY;
        for state in &self.states {
            for ((th, &s), &s0) in self.traits.iter().zip(&state.sizes).zip(&self.initial_sizes) {
                let (lo, hi) = size_envelope(&self.params, th, s0, state.t - self.log_sizes.t_start());
                lo_margin = lo_margin.min(s - lo);
                hi_margin = hi_margin.min(hi - s);
            }
        }
        (lo_margin, hi_margin)
    }

    /// Writes `t,plant_id,s,x1,x2,S,gamma,C_index`, time-major then by id.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,plant_id,s,x1,x2,S,gamma,C_index")?;
        for ((t, state), c) in self.times.iter().zip(&self.states).zip(&self.competition) {
            for (id, ((th, s), ci)) in state.traits.iter().zip(&state.sizes).zip(c).enumerate() {
                writeln!(
                    w,
                    "{t},{id},{s},{},{},{},{},{ci}",
                    th.position[0], th.position[1], th.asymptotic_size, th.growth_rate
                )?;
            }
        }
        Ok(())
    }
}

fn check_population_logs(
    rho: &[f64],
    step: usize,
    t: f64,
    r: &mut [f64],
) -> Result<bool> {
    let mut modified = false;
    for i in 0..r.len() {
        if !r[i].is_finite() {
            return Err(Error::Diverged {
                t,
                step,
                index: i,
                reason: "non-finite size".into(),
            });
        }
        if r[i] <= 0.0 {
            if -r[i] < INVARIANT_SLACK {
                r[i] = f64::EPSILON;
                modified = true;
            } else {
                return Err(Error::Diverged {
                    t,
                    step,
                    index: i,
                    reason: format!("size fell below s_m (log-size {})", r[i]),
                });
            }
        }
        if r[i] >= rho[i] {
            if r[i] - rho[i] < INVARIANT_SLACK {
                r[i] = rho[i] * (1.0 - f64::EPSILON);
                modified = true;
            } else {
                return Err(Error::Diverged {
                    t,
                    step,
                    index: i,
                    reason: format!("size exceeded asymptotic size (log-size {} >= {})", r[i], rho[i]),
                });
            }
        }
    }
    Ok(modified)
}

/// Integrates the coupled system from `initial` over `[initial.t, cfg.t_end]`.
///
/// The initial configuration must satisfy the admissibility hypotheses of
/// [`validate_initial_config`]. Every accepted step is checked against
/// `s_m < s_i < S_i`.
pub fn integrate(params: &ModelParams, initial: &PopulationState, cfg: &SolverConfig) -> Result<Trajectory> {
    params.validate()?;
    validate_initial_config(params, &initial.traits, &initial.sizes)?.into_result()?;
    let traits = initial.traits.clone();
    let rho: Vec<f64> = traits.iter().map(|th| params.log_size(th.asymptotic_size)).collect();
    let r0: Vec<f64> = initial.sizes.iter().map(|&s| params.log_size(s)).collect();

    let rhs = |_t: f64, r: &[f64], dr: &mut [f64]| -> Result<()> {
        log_rhs(params, &traits, &rho, r, dr);
        Ok(())
    };
    let monitor = |step: usize, t: f64, r: &mut [f64]| check_population_logs(&rho, step, t, r);
    let dense = ode::solve(rhs, initial.t, &r0, cfg, monitor)?;

    let n = traits.len();
    let mut times = Vec::with_capacity(cfg.snapshot_times.len());
    let mut states = Vec::with_capacity(cfg.snapshot_times.len());
    let mut competition = Vec::with_capacity(cfg.snapshot_times.len());
    let mut diagnostics = Vec::with_capacity(cfg.snapshot_times.len());
    let mut r = vec![0.0; n];
    let mut c = vec![0.0; n];
    for (k, &t) in cfg.snapshot_times.iter().enumerate() {
        if t < initial.t {
            continue;
        }
        dense.eval_into(t, &mut r)?;
        check_population_logs(&rho, k, t, &mut r)?;
        competition_indices_from_logs(params, &traits, &r, &mut c);
        let sizes: Vec<f64> = if t == initial.t {
            initial.sizes.clone()
        } else {
            r.iter().map(|&ri| params.size_from_log(ri)).collect()
        };
        let mut d = SnapshotDiagnostics {
            t,
            min_size: f64::INFINITY,
            max_size: f64::NEG_INFINITY,
            min_index: f64::INFINITY,
            max_index: f64::NEG_INFINITY,
            min_lower_margin: f64::INFINITY,
            min_upper_margin: f64::INFINITY,
        };
        for i in 0..n {
            d.min_size = d.min_size.min(sizes[i]);
            d.max_size = d.max_size.max(sizes[i]);
            d.min_index = d.min_index.min(c[i]);
            d.max_index = d.max_index.max(c[i]);
            d.min_lower_margin = d.min_lower_margin.min(sizes[i] - params.s_min);
            d.min_upper_margin = d.min_upper_margin.min(traits[i].asymptotic_size - sizes[i]);
        }
        times.push(t);
        states.push(PopulationState {
            traits: traits.clone(),
            sizes,
            t,
        });
        competition.push(c.clone());
        diagnostics.push(d);
    }

    Ok(Trajectory {
        params: *params,
        times,
        states,
        competition,
        diagnostics,
        traits,
        initial_sizes: initial.sizes.clone(),
        log_sizes: dense,
    })
}

/// Bounds satisfied by any probe grown against a population of `n` plants:
/// `s_m e^{−2R_M/(2N−3)} ≤ s(t) ≤ s_m e^{(6N−5)R_M/(2N−3)}`.
pub fn probe_size_bounds(params: &ModelParams, n: usize) -> (f64, f64) {
    let denom = 2.0 * n as f64 - 3.0;
    (
        params.s_min * (-2.0 * params.log_range / denom).exp(),
        params.s_min * ((6.0 * n as f64 - 5.0) * params.log_range / denom).exp(),
    )
}

/// Probe solution of the empirical-flow equation.
#[derive(Debug, Clone)]
pub struct ProbeTrajectory {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
    params: ModelParams,
    log_size: Arc<DenseSolution>,
    component: usize,
    s0: f64,
    growth_rate: f64,
}

impl ProbeTrajectory {
    /// Probe size at `t`; the initial size is returned exactly at the start
    /// time and for zero growth rate.
    pub fn size_at(&self, t: f64) -> Result<f64> {
        let r = self.log_size.eval_component(t, self.component)?;
        if t == self.log_size.t_start() || self.growth_rate == 0.0 {
            return Ok(self.s0);
        }
        Ok(self.params.size_from_log(r))
    }
}

/// Grows a probe plant `(probe_s0, probe_traits)` against the frozen
/// background population.
///
/// The competition term is `N/(N−1)` times the empirical average minus the
/// self-interaction `C(s, s, 0)/(N−1)`, so that a probe carrying the initial
/// data of background individual `i` reproduces `s_i(t)`.
pub fn empirical_flow(
    params: &ModelParams,
    background: &Trajectory,
    probe_s0: f64,
    probe_traits: &PlantTraits,
    cfg: &SolverConfig,
) -> Result<ProbeTrajectory> {
    let mut v = empirical_flow_batch(params, background, &[(probe_s0, *probe_traits)], cfg)?;
    Ok(v.pop().expect("one probe"))
}

/// Empirical flow of several independent probes against one background,
/// integrated together so the background is interpolated once per stage.
pub fn empirical_flow_batch(
    params: &ModelParams,
    background: &Trajectory,
    probes: &[(f64, PlantTraits)],
    cfg: &SolverConfig,
) -> Result<Vec<ProbeTrajectory>> {
    params.validate()?;
    let n_bg = background.len();
    if n_bg < 2 {
        return Err(Error::TooFewIndividuals { min: 2, got: n_bg });
    }
    if probes.is_empty() {
        return Err(Error::Empty("probe list"));
    }
    let t0 = background.log_sizes.t_start();
    if cfg.t_end > background.t_end() + 1e-12 * (1.0 + background.t_end().abs()) {
        return Err(Error::OutOfRange {
            t: cfg.t_end,
            lo: t0,
            hi: background.t_end(),
        });
    }
    for (index, (s0, th)) in probes.iter().enumerate() {
        // zero growth rate is allowed for probes: the flow is then constant
        let mut check = *th;
        if check.growth_rate == 0.0 {
            check.growth_rate = 1.0;
        }
        if th.growth_rate < 0.0 {
            return Err(Error::Inadmissible {
                index,
                reason: "negative growth rate".into(),
            });
        }
        if let Some(reason) = check_individual(params, &check, *s0) {
            return Err(Error::Inadmissible { index, reason });
        }
    }

    let bg_traits = background.traits();
    let denom = (n_bg - 1) as f64;
    let scale = n_bg as f64 / denom;
    let rho: Vec<f64> = probes.iter().map(|(_, th)| params.log_size(th.asymptotic_size)).collect();
    let r0: Vec<f64> = probes.iter().map(|(s0, _)| params.log_size(*s0)).collect();
    let mut r_bg = vec![0.0; n_bg];
    let rhs = |t: f64, r: &[f64], dr: &mut [f64]| -> Result<()> {
        background.log_sizes_into(t, &mut r_bg)?;
        for (k, (_, th)) in probes.iter().enumerate() {
            let avg = potential_sum(params, r[k], th.position, &r_bg, bg_traits, None) / n_bg as f64;
            let self_term = r[k] / (2.0 * params.log_range);
            let c_hat = scale * avg - self_term / denom;
            dr[k] = th.growth_rate * (rho[k] * (1.0 - c_hat) - r[k]);
        }
        Ok(())
    };
    let (lo, hi) = probe_size_bounds(params, n_bg);
    let (r_lo, r_hi) = (params.log_size(lo), params.log_size(hi));
    let monitor = |step: usize, t: f64, r: &mut [f64]| -> Result<bool> {
        for (index, &rk) in r.iter().enumerate() {
            if !rk.is_finite() || rk < r_lo - INVARIANT_SLACK || rk > r_hi + INVARIANT_SLACK {
                return Err(Error::Diverged {
                    t,
                    step,
                    index,
                    reason: format!("probe log-size {rk} left [{r_lo}, {r_hi}]"),
                });
            }
        }
        Ok(false)
    };
    let pcfg = SolverConfig {
        snapshot_times: cfg.snapshot_times.iter().copied().filter(|&t| t >= t0).collect(),
        ..cfg.clone()
    };
    let dense = Arc::new(ode::solve(rhs, t0, &r0, &pcfg, monitor)?);

    let mut out = Vec::with_capacity(probes.len());
    for k in 0..probes.len() {
        let mut probe = ProbeTrajectory {
            times: pcfg.snapshot_times.clone(),
            sizes: Vec::new(),
            params: *params,
            log_size: Arc::clone(&dense),
            component: k,
            s0: probes[k].0,
            growth_rate: probes[k].1.growth_rate,
        };
        probe.sizes = pcfg.snapshot_times.iter().map(|&t| probe.size_at(t)).collect::<Result<_>>()?;
        out.push(probe);
    }
    Ok(out)
}

/// One atom of the empirical measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedAtom {
    pub size: f64,
    pub traits: PlantTraits,
    pub weight: f64,
}

/// Uniform empirical measure over the individuals of a state.
pub fn snapshot_measure(state: &PopulationState) -> Vec<WeightedAtom> {
    let w = 1.0 / state.len() as f64;
    state
        .sizes
        .iter()
        .zip(&state.traits)
        .map(|(&size, &traits)| WeightedAtom {
            size,
            traits,
            weight: w,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::competition_potential;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    fn random_state(n: usize, seed: u64) -> PopulationState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = params();
        let traits: Vec<PlantTraits> = (0..n)
            .map(|_| {
                PlantTraits::new(
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    rng.random_range(0.5..p.s_max()),
                    rng.random_range(0.1..2.0),
                )
            })
            .collect();
        let sizes = traits
            .iter()
            .map(|th| rng.random_range(p.s_min * 1.01..th.asymptotic_size))
            .collect();
        PopulationState::new(traits, sizes, 0.0).unwrap()
    }

    #[test]
    fn index_zero_for_minimal_neighbour() {
        let p = params();
        let st = PopulationState::new(
            vec![PlantTraits::new([0.0, 0.0], 0.8, 1.0), PlantTraits::new([0.1, 0.0], 0.8, 1.0)],
            vec![0.3, p.s_min],
            0.0,
        )
        .unwrap();
        assert_eq!(competition_index(&p, &st, 0).unwrap(), 0.0);
    }

    #[test]
    fn index_for_identical_colocated_plants() {
        let p = params();
        let s = 0.4;
        let th = PlantTraits::new([0.3, -0.2], 0.8, 1.0);
        let st = PopulationState::new(vec![th; 3], vec![s; 3], 0.0).unwrap();
        let expected = (s / p.s_min).ln() / (2.0 * p.log_range);
        for i in 0..3 {
            assert!((competition_index(&p, &st, i).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn index_matches_double_loop_oracle() {
        let p = params();
        let st = random_state(5, 7);
        for i in 0..5 {
            let mut acc = 0.0;
            for j in 0..5 {
                if j != i {
                    let d = st.traits[i].dist_sq(&st.traits[j]).sqrt();
                    acc += competition_potential(&p, st.sizes[i], st.sizes[j], d).unwrap();
                }
            }
            let oracle = acc / 4.0;
            assert!((competition_index(&p, &st, i).unwrap() - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn index_requires_two_plants() {
        let p = params();
        let st = PopulationState::new(vec![PlantTraits::new([0.0, 0.0], 0.8, 1.0)], vec![0.1], 0.0).unwrap();
        assert!(matches!(competition_index(&p, &st, 0), Err(Error::TooFewIndividuals { .. })));
    }

    #[test]
    fn rhs_equilibrium_without_competition() {
        let p = params();
        let st = PopulationState::new(
            vec![PlantTraits::new([0.0, 0.0], 0.8, 1.0), PlantTraits::new([5.0, 0.0], 0.8, 1.0)],
            vec![0.8, p.s_min],
            0.0,
        )
        .unwrap();
        assert_eq!(system_rhs(&p, &st).unwrap()[0], 0.0);
    }

    #[test]
    fn rhs_far_pair_matches_uncoupled_gompertz() {
        let p = params();
        let a = PlantTraits::new([0.0, 0.0], 0.8, 1.2);
        let b = PlantTraits::new([1e6 * p.sigma_x, 0.0], 0.7, 0.9);
        let st = PopulationState::new(vec![a, b], vec![0.1, 0.2], 0.0).unwrap();
        let rhs = system_rhs(&p, &st).unwrap();
        let g0 = crate::model::gompertz_rhs(&p, &a, 0.1);
        let g1 = crate::model::gompertz_rhs(&p, &b, 0.2);
        assert!(((rhs[0] - g0) / g0).abs() < 1e-6);
        assert!(((rhs[1] - g1) / g1).abs() < 1e-6);
    }

    #[test]
    fn measure_weights() {
        let st = random_state(2, 1);
        let m = snapshot_measure(&st);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|a| a.weight == 0.5));
        let st = random_state(7, 2);
        let m = snapshot_measure(&st);
        let total: f64 = m.iter().map(|a| a.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);
        for (a, th) in m.iter().zip(&st.traits) {
            assert_eq!(a.traits, *th);
        }
    }

    #[test]
    fn probe_bounds_shrink_to_limits() {
        let p = params();
        let (lo, hi) = probe_size_bounds(&p, 1_000_000);
        assert!((lo / p.s_min - 1.0).abs() < 1e-5);
        assert!((hi / (p.s_min * (3.0 * p.log_range).exp()) - 1.0).abs() < 1e-4);
    }
}
