//! Lagrangian approximation of the mean-field flow.
//!
//! The competition potential felt by a plant in the infinite population is
//! frozen on each interval `[t_k, t_{k+1})` and represented by a clamped
//! polynomial regression `C_k(s0, θ)` in transformed coordinates. Stage `k`
//! is fitted to Monte-Carlo potentials computed against a cloud of plants
//! whose sizes are transported by the stages already built. The flow itself
//! is then available in closed form:
//!
//! `ŝ(t, s0, θ) = s_m (s0/s_m)^{e^{−γt}} (S/s_m)^{1 − e^{−γt} − Ĉ(t, s0, θ)}`
//!
//! with `Ĉ` the exponentially weighted time integral of the stage potentials.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureSpec};
use crate::init::{sample_stream, surface_eval, Mu0Config, Sample, SampleStream};
use crate::lstsq::min_norm_lstsq;
use crate::model::{dist_sq, potential_from_logs, ModelParams, PlantTraits};
use crate::numeric::CompensatedSum;

/// Monte-Carlo estimate of the potential exerted on a plant of size `s` at
/// `x` by a cloud of `(s', x')` atoms: `(1/N) Σ C(s, s'_i, |x − x'_i|)`.
pub fn mc_potential(params: &ModelParams, s: f64, x: [f64; 2], cloud: &[(f64, [f64; 2])]) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::Empty("Monte-Carlo cloud"));
    }
    if !(s > 0.0) || cloud.iter().any(|(sp, _)| !(*sp > 0.0)) {
        return Err(Error::Domain("sizes must be strictly positive".into()));
    }
    let r = params.log_size(s);
    let acc: CompensatedSum = cloud
        .iter()
        .map(|&(sp, xp)| potential_from_logs(params, r, params.log_size(sp), params.spatial_factor(dist_sq(x, xp))))
        .collect();
    Ok(acc.value() / cloud.len() as f64)
}

/// Log-space cloud average used during training.
fn mc_potential_logs(params: &ModelParams, r: f64, x: [f64; 2], cloud_r: &[f64], cloud_x: &[[f64; 2]]) -> f64 {
    let acc: CompensatedSum = cloud_r
        .iter()
        .zip(cloud_x)
        .map(|(&rp, &xp)| potential_from_logs(params, r, rp, params.spatial_factor(dist_sq(x, xp))))
        .collect();
    acc.value() / cloud_r.len() as f64
}

/// One fitted piece of the piecewise-constant potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialStage {
    pub stage_index: usize,
    pub spec: FeatureSpec,
    pub beta: Vec<f64>,
    /// `None` when the targets are constant and R² is undefined.
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
    /// Numerical rank of the training design matrix.
    pub rank: usize,
}

/// Clamp to `[0, 1]`.
#[inline]
pub fn project_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

impl PotentialStage {
    /// Unclamped linear combination `β · f(s0, θ)`.
    pub fn raw_eval(&self, map: &FeatureMap, s0: f64, theta: &PlantTraits, buf: &mut Vec<f64>) -> Result<f64> {
        map.eval_plant(s0, theta, buf)?;
        Ok(self.beta.iter().zip(buf.iter()).map(|(b, f)| b * f).sum())
    }

    pub fn feature_map(&self) -> Result<FeatureMap> {
        FeatureMap::new(self.spec)
    }
}

/// Training or testing row: initial data and Monte-Carlo target.
pub type StageRow = (Sample, f64);

/// Coefficient of determination `1 − SS_res/SS_tot`; `None` if `SS_tot = 0`.
pub fn r_squared(targets: &[f64], predictions: &[f64]) -> Option<f64> {
    let n = targets.len() as f64;
    let mean = targets.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss_tot = targets.iter().map(|t| (t - mean) * (t - mean)).collect::<CompensatedSum>().value();
    let ss_res = targets
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p) * (t - p))
        .collect::<CompensatedSum>()
        .value();
    if ss_tot == 0.0 {
        None
    } else {
        Some(1.0 - ss_res / ss_tot)
    }
}

/// Fits one stage by least squares on the training rows and scores the
/// clamped predictions on both sets.
pub fn fit_stage(spec: FeatureSpec, stage_index: usize, training: &[StageRow], testing: &[StageRow]) -> Result<PotentialStage> {
    if training.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let map = FeatureMap::new(spec)?;
    let cols = map.dimension();
    let mut design = Vec::with_capacity(training.len() * cols);
    let mut buf = Vec::with_capacity(cols);
    for (sample, _) in training {
        map.eval_plant(sample.s0, &sample.traits, &mut buf)?;
        design.extend_from_slice(&buf);
    }
    let y: Vec<f64> = training.iter().map(|(_, c)| *c).collect();
    let sol = min_norm_lstsq(&design, cols, &y)?;
    let mut stage = PotentialStage {
        stage_index,
        spec,
        beta: sol.beta,
        r2_train: None,
        r2_test: None,
        rank: sol.rank,
    };
    let score = |rows: &[StageRow], buf: &mut Vec<f64>| -> Result<Option<f64>> {
        if rows.is_empty() {
            return Ok(None);
        }
        let mut pred = Vec::with_capacity(rows.len());
        for (sample, _) in rows {
            pred.push(project_unit(stage.raw_eval(&map, sample.s0, &sample.traits, buf)?));
        }
        let targets: Vec<f64> = rows.iter().map(|(_, c)| *c).collect();
        Ok(r_squared(&targets, &pred))
    };
    let r2_train = score(training, &mut buf)?;
    let r2_test = score(testing, &mut buf)?;
    stage.r2_train = r2_train;
    stage.r2_test = r2_test;
    Ok(stage)
}

/// Clamped stage potential `p_[0,1](β · f(s0, θ))`.
pub fn stage_potential_eval(stage: &PotentialStage, s0: f64, theta: &PlantTraits) -> Result<f64> {
    let map = stage.feature_map()?;
    let mut buf = Vec::with_capacity(map.dimension());
    Ok(project_unit(stage.raw_eval(&map, s0, theta, &mut buf)?))
}

/// Training settings of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Monte-Carlo cloud size `N`.
    pub cloud_size: usize,
    /// Size `K` of each of the training and testing sets.
    pub train_size: usize,
    /// Degree of the initial (arity-3) stage.
    pub degree_initial: usize,
    /// Degree of the later (arity-5) stages.
    pub degree_later: usize,
}

impl Default for TrainConfig {
    /// `Δt = 1`, `T = 10`, `N = K = 1000`, degrees 5 and 3.
    fn default() -> Self {
        Self {
            dt: 1.0,
            horizon: 10.0,
            cloud_size: 1000,
            train_size: 1000,
            degree_initial: 5,
            degree_later: 3,
        }
    }
}

impl TrainConfig {
    /// Number of stages `M = T/Δt`, which must be integral.
    pub fn stage_count(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidParams("dt and horizon must be positive".into()));
        }
        let m = self.horizon / self.dt;
        let rounded = m.round();
        if (m - rounded).abs() > 1e-9 * m.max(1.0) || rounded < 1.0 {
            return Err(Error::InvalidParams(format!(
                "horizon {} is not an integral multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(rounded as usize)
    }
}

const MODEL_FORMAT: &str = "plantmf-meanfield";
const MODEL_VERSION: u32 = 1;

/// Trained approximation of the mean-field flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldModel {
    pub format: String,
    pub version: u32,
    pub dt: f64,
    pub horizon: f64,
    pub train: TrainConfig,
    pub mu0: Mu0Config,
    pub stages: Vec<PotentialStage>,
    /// Hash of the experiment configuration that produced the model, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl MeanFieldModel {
    pub fn params(&self) -> &ModelParams {
        &self.mu0.params
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Stage start times `t_k = kΔt`.
    pub fn stage_times(&self) -> Vec<f64> {
        (0..self.stages.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MeanFieldModel = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Serialization(format!("unexpected model format '{}'", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(Error::Serialization(format!("unsupported model version {}", model.version)));
        }
        for (k, st) in model.stages.iter().enumerate() {
            st.spec.validate()?;
            if st.beta.len() != st.spec.dimension() {
                return Err(Error::Serialization(format!(
                    "stage {k}: {} coefficients for {} features",
                    st.beta.len(),
                    st.spec.dimension()
                )));
            }
        }
        Ok(model)
    }

    /// Writes `t,r2_train,r2_test`, one row per stage (undefined R² left empty).
    pub fn write_r2_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,r2_train,r2_test")?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (t, st) in self.stage_times().iter().zip(&self.stages) {
            writeln!(w, "{t},{},{}", fmt(st.r2_train), fmt(st.r2_test))?;
        }
        Ok(())
    }

    /// A model with all coefficients zero (no competition), sharing the
    /// stage layout of `self`.
    pub fn zeroed(&self) -> Self {
        let mut m = self.clone();
        for st in &mut m.stages {
            st.beta.iter_mut().for_each(|b| *b = 0.0);
        }
        m
    }
}

/// Weight of stage `[t_k, t_{k+1})` in `Ĉ(t)`, i.e. `γ ∫ 𝟙_{[t_k,t_{k+1})}(τ) e^{γ(τ−t)} dτ` over `[0, t]`.
#[inline]
fn stage_weight(gamma: f64, t: f64, t_k: f64, t_k1: f64) -> f64 {
    if gamma == 0.0 || t < t_k {
        0.0
    } else if t < t_k1 {
        // 1 − e^{γ(t_k − t)}
        -(gamma * (t_k - t)).exp_m1()
    } else {
        (gamma * (t_k1 - t)).exp() - (gamma * (t_k - t)).exp()
    }
}

/// `Ĉ(t) = Σ_k C_k w_k(t)` for given stage values.
fn integral_from_values(values: &[f64], dt: f64, gamma: f64, t: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (k, &c) in values.iter().enumerate() {
        let t_k = k as f64 * dt;
        if t < t_k {
            break;
        }
        acc.add(c * stage_weight(gamma, t, t_k, (k + 1) as f64 * dt));
    }
    acc.value()
}

/// Log-size of the flow from stage values: `e^{−γt} r0 + (1 − e^{−γt} − Ĉ) ρ`.
fn flow_log(params: &ModelParams, values: &[f64], dt: f64, t: f64, s0: f64, theta: &PlantTraits) -> f64 {
    let gamma = theta.growth_rate;
    let decay = (-gamma * t).exp();
    let grown = -(-gamma * t).exp_m1();
    let c_hat = integral_from_values(values, dt, gamma, t);
    decay * params.log_size(s0) + (grown - c_hat) * params.log_size(theta.asymptotic_size)
}

struct StageEvaluator {
    maps: Vec<FeatureMap>,
    buf: Vec<f64>,
}

impl StageEvaluator {
    fn new(stages: &[PotentialStage]) -> Result<Self> {
        Ok(Self {
            maps: stages.iter().map(|s| s.feature_map()).collect::<Result<_>>()?,
            buf: Vec::new(),
        })
    }

    /// Clamped potentials of the first `count` stages.
    fn values(&mut self, stages: &[PotentialStage], count: usize, s0: f64, theta: &PlantTraits) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for (st, map) in stages.iter().zip(&self.maps).take(count) {
            out.push(project_unit(st.raw_eval(map, s0, theta, &mut self.buf)?));
        }
        Ok(out)
    }
}

fn check_time(model: &MeanFieldModel, t: f64) -> Result<()> {
    let hi = model.horizon;
    if !(t >= 0.0 && t <= hi * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi });
    }
    Ok(())
}

/// Closed-form time integral `Ĉ(t, s0, θ)` of the piecewise-constant potential.
pub fn reconstructed_potential_integral(model: &MeanFieldModel, t: f64, s0: f64, theta: &PlantTraits) -> Result<f64> {
    check_time(model, t)?;
    if theta.growth_rate == 0.0 {
        return Ok(0.0);
    }
    let mut ev = StageEvaluator::new(&model.stages)?;
    let values = ev.values(&model.stages, model.stages.len(), s0, theta)?;
    Ok(integral_from_values(&values, model.dt, theta.growth_rate, t))
}

/// Approximate mean-field flow `ŝ(t, s0, θ)`.
pub fn flow_eval(model: &MeanFieldModel, t: f64, s0: f64, theta: &PlantTraits) -> Result<f64> {
    check_time(model, t)?;
    if !(s0 > 0.0 && theta.asymptotic_size > 0.0) {
        return Err(Error::Domain("sizes must be strictly positive".into()));
    }
    let params = model.params();
    if theta.growth_rate == 0.0 || t == 0.0 {
        return Ok(s0);
    }
    let mut ev = StageEvaluator::new(&model.stages)?;
    let values = ev.values(&model.stages, model.stages.len(), s0, theta)?;
    Ok(params.size_from_log(flow_log(params, &values, model.dt, t, s0, theta)))
}

/// Evaluates the flow of many plants at several times, building the
/// feature maps once.
pub fn flow_eval_many(model: &MeanFieldModel, times: &[f64], plants: &[(f64, PlantTraits)]) -> Result<Vec<Vec<f64>>> {
    for &t in times {
        check_time(model, t)?;
    }
    let params = model.params();
    let mut ev = StageEvaluator::new(&model.stages)?;
    let mut out = vec![Vec::with_capacity(plants.len()); times.len()];
    for (s0, theta) in plants {
        let values = ev.values(&model.stages, model.stages.len(), *s0, theta)?;
        for (row, &t) in out.iter_mut().zip(times) {
            row.push(if theta.growth_rate == 0.0 || t == 0.0 {
                *s0
            } else {
                params.size_from_log(flow_log(params, &values, model.dt, t, *s0, theta))
            });
        }
    }
    Ok(out)
}

/// Mean and pooled standard deviation of the cloud positions.
fn position_scale(samples: &[Sample]) -> ([f64; 2], f64) {
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.traits.position[0]).collect::<CompensatedSum>().value() / n;
    let my = samples.iter().map(|s| s.traits.position[1]).collect::<CompensatedSum>().value() / n;
    let var = samples
        .iter()
        .map(|s| {
            let dx = s.traits.position[0] - mx;
            let dy = s.traits.position[1] - my;
            0.5 * (dx * dx + dy * dy)
        })
        .collect::<CompensatedSum>()
        .value()
        / n;
    ([mx, my], var.sqrt())
}

/// Log-sizes of the given plants at `t_k`, transported by the first `k` stages.
fn transported_logs(
    params: &ModelParams,
    stages: &[PotentialStage],
    ev: &mut StageEvaluator,
    k: usize,
    dt: f64,
    plants: &[Sample],
) -> Result<Vec<f64>> {
    let t = k as f64 * dt;
    plants
        .iter()
        .map(|p| {
            if k == 0 || p.traits.growth_rate == 0.0 {
                return Ok(params.log_size(p.s0));
            }
            let values = ev.values(stages, k, p.s0, &p.traits)?;
            Ok(flow_log(params, &values, dt, t, p.s0, &p.traits))
        })
        .collect()
}

/// Monte-Carlo potential targets at stage `k` for a set of probe plants.
fn stage_targets(
    params: &ModelParams,
    probes: &[Sample],
    probe_r: &[f64],
    cloud_r: &[f64],
    cloud_x: &[[f64; 2]],
) -> Vec<StageRow> {
    probes
        .iter()
        .zip(probe_r)
        .map(|(p, &r)| (*p, mc_potential_logs(params, r, p.traits.position, cloud_r, cloud_x)))
        .collect()
}

/// Builds the stages `C_0, …, C_{M−1}` by recurrence.
///
/// The Monte-Carlo cloud is the population stream of `mu0` (so a population
/// drawn with the same seed contains the cloud as a prefix); training and
/// testing probes come from their own independent streams.
pub fn train(mu0: &Mu0Config, cfg: &TrainConfig) -> Result<MeanFieldModel> {
    mu0.validate()?;
    let m = cfg.stage_count()?;
    if cfg.cloud_size == 0 || cfg.train_size == 0 {
        return Err(Error::Empty("cloud and training sets must be nonempty"));
    }
    let params = mu0.params;
    let cloud = sample_stream(mu0, SampleStream::Population, cfg.cloud_size)?;
    let training = sample_stream(mu0, SampleStream::Training, cfg.train_size)?;
    let testing = sample_stream(mu0, SampleStream::Testing, cfg.train_size)?;
    let (center, spread) = position_scale(&cloud);
    let lengths = if spread > 0.0 { [spread, spread] } else { [mu0.position_spread; 2] };
    let cloud_x: Vec<[f64; 2]> = cloud.iter().map(|s| s.traits.position).collect();

    let mut stages: Vec<PotentialStage> = Vec::with_capacity(m);
    for k in 0..m {
        let spec = FeatureSpec {
            degree: if k == 0 { cfg.degree_initial } else { cfg.degree_later },
            arity: if k == 0 { 3 } else { 5 },
            center,
            lengths,
            dt: cfg.dt,
            params,
        };
        let mut ev = StageEvaluator::new(&stages)?;
        let cloud_r = transported_logs(&params, &stages, &mut ev, k, cfg.dt, &cloud)?;
        let train_r = transported_logs(&params, &stages, &mut ev, k, cfg.dt, &training)?;
        let test_r = transported_logs(&params, &stages, &mut ev, k, cfg.dt, &testing)?;
        let train_rows = stage_targets(&params, &training, &train_r, &cloud_r, &cloud_x);
        let test_rows = stage_targets(&params, &testing, &test_r, &cloud_r, &cloud_x);
        stages.push(fit_stage(spec, k, &train_rows, &test_rows)?);
    }

    Ok(MeanFieldModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        dt: cfg.dt,
        horizon: cfg.horizon,
        train: *cfg,
        mu0: mu0.clone(),
        stages,
        config_hash: None,
    })
}

/// Regular grid of positions: `steps` points per axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.x1_min, self.x1_max, self.x2_min, self.x2_max].iter().all(|v| v.is_finite())
            && self.x1_min <= self.x1_max
            && self.x2_min <= self.x2_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid grid {self:?}")))
        }
    }

    fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        match steps {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..steps)
                .map(|k| if k + 1 == steps { hi } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 })
                .collect(),
        }
    }

    /// Grid points, `x₂` outer and `x₁` inner.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let xs = Self::axis(self.x1_min, self.x1_max, self.steps);
        let ys = Self::axis(self.x2_min, self.x2_max, self.steps);
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect()
    }
}

/// Final-time flow of the mean plant at one grid position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub x: [f64; 2],
    /// Mean asymptotic size `S̄(x)`.
    pub big_s: f64,
    /// Mean growth rate `γ̄(x)`.
    pub gamma: f64,
    /// `ŝ(T, s̄, x, S̄(x), γ̄(x))`.
    pub s_final: f64,
    /// Whether `x` lies in the convex hull of the training cloud.
    pub in_cloud: bool,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain).
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Membership in a counter-clockwise convex polygon (boundary included).
pub fn in_convex_polygon(hull: &[[f64; 2]], x: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], x) >= 0.0)
}

/// Evaluates `ŝ(T, s̄, x, S̄(x), γ̄(x))` on a grid, with `s̄` the midpoint of
/// the initial-size law and `T` the model horizon.
pub fn potential_surface(model: &MeanFieldModel, grid: &GridSpec) -> Result<Vec<SurfaceRow>> {
    grid.validate()?;
    let mu0 = &model.mu0;
    let s_bar = mu0.s0_law.midpoint();
    let cloud = sample_stream(mu0, SampleStream::Population, model.train.cloud_size)?;
    let hull = convex_hull(&cloud.iter().map(|s| s.traits.position).collect::<Vec<_>>());
    let points = grid.points();
    let plants: Vec<(f64, PlantTraits)> = points
        .iter()
        .map(|&x| {
            let big_s = surface_eval(&mu0.size_surface, x);
            let gamma = surface_eval(&mu0.rate_surface, x);
            (s_bar, PlantTraits::new(x, big_s, gamma))
        })
        .collect();
    let finals = flow_eval_many(model, &[model.horizon], &plants)?.pop().unwrap_or_default();
    Ok(plants
        .iter()
        .zip(finals)
        .map(|((_, th), s_final)| SurfaceRow {
            x: th.position,
            big_s: th.asymptotic_size,
            gamma: th.growth_rate,
            s_final,
            in_cloud: in_convex_polygon(&hull, th.position),
        })
        .collect())
}

/// Writes `x1,x2,S_bar,gamma_bar,s_final,in_cloud`.
pub fn write_surface_csv<W: Write>(rows: &[SurfaceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "x1,x2,S_bar,gamma_bar,s_final,in_cloud")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.x[0], r.x[1], r.big_s, r.gamma, r.s_final, r.in_cloud as u8)?;
    }
    Ok(())
}
