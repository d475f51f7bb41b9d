//! Explicit Runge–Kutta integrators with continuous (dense) output.
//!
//! Two methods are provided: the classical fixed-step RK4 and the adaptive
//! Dormand–Prince 5(4) pair. Both record one interpolation segment per
//! accepted step so that the solution can be evaluated at any time in the
//! integration range. Segments share the representation
//! `y(t0 + θh) = r1 + θ(r2 + (1−θ)(r3 + θ(r4 + (1−θ) r5)))`, which is the
//! 4th-order continuous extension for Dormand–Prince and reduces to the cubic
//! Hermite interpolant (`r5 = 0`) for RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Fixed step for RK4; initial step guess for the adaptive method
    /// (non-positive selects an automatic guess).
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt_init: 1e-2,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            t_end: 10.0,
            snapshot_times: uniform_grid(10.0, 100),
        }
    }
}

/// `steps + 1` equally spaced times covering `[0, t_end]`, endpoints exact.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect();
    if let Some(last) = v.last_mut() {
        *last = t_end;
    }
    v
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be strictly positive".into()));
        }
        if self.method == Method::Rk4Fixed && !(self.dt_init > 0.0) {
            return Err(Error::InvalidParams("fixed-step RK4 needs dt_init > 0".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.snapshot_times {
            if !(t > prev) {
                return Err(Error::InvalidParams("snapshot times must be strictly increasing".into()));
            }
            if !(0.0..=self.t_end).contains(&t) {
                return Err(Error::InvalidParams(format!(
                    "snapshot time {t} outside [0, {}]",
                    self.t_end
                )));
            }
            prev = t;
        }
        Ok(())
    }
}

/// One interpolation segment covering `[t0, t0 + h]`.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    /// Five coefficient blocks of length `dim`, stored back to back.
    coeffs: Vec<f64>,
}

/// Continuous solution assembled from the accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    t_start: f64,
    t_end: f64,
    y_start: Vec<f64>,
    segments: Vec<Segment>,
    rhs_evals: usize,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn accepted_steps(&self) -> usize {
        self.segments.len()
    }

    pub fn rhs_evals(&self) -> usize {
        self.rhs_evals
    }

    /// Step boundaries `t_0 < t_1 < ... < t_end`.
    pub fn step_times(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.segments.len() + 1);
        v.push(self.t_start);
        v.extend(self.segments.iter().map(|s| s.t0 + s.h));
        v
    }

    fn locate(&self, t: f64) -> Result<Option<usize>> {
        let tol = 1e-12 * (1.0 + self.t_end.abs());
        if t < self.t_start - tol || t > self.t_end + tol {
            return Err(Error::OutOfRange {
                t,
                lo: self.t_start,
                hi: self.t_end,
            });
        }
        if self.segments.is_empty() {
            return Ok(None);
        }
        // first segment whose end is >= t
        let idx = self.segments.partition_point(|s| s.t0 + s.h < t);
        Ok(Some(idx.min(self.segments.len() - 1)))
    }

    /// Evaluates the full state at time `t`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim);
        match self.locate(t)? {
            None => out.copy_from_slice(&self.y_start),
            Some(k) => {
                let seg = &self.segments[k];
                let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
                let n = self.dim;
                let c = &seg.coeffs;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = interp(theta, c[i], c[n + i], c[2 * n + i], c[3 * n + i], c[4 * n + i]);
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Evaluates a single component at time `t`.
    pub fn eval_component(&self, t: f64, i: usize) -> Result<f64> {
        match self.locate(t)? {
            None => Ok(self.y_start[i]),
            Some(k) => {
                let seg = &self.segments[k];
                let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
                let n = self.dim;
                let c = &seg.coeffs;
                Ok(interp(theta, c[i], c[n + i], c[2 * n + i], c[3 * n + i], c[4 * n + i]))
            }
        }
    }
}

#[inline]
fn interp(theta: f64, r1: f64, r2: f64, r3: f64, r4: f64, r5: f64) -> f64 {
    let th1 = 1.0 - theta;
    r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))
}

/// Called after every accepted step with the step index, time and state.
/// Returning `true` signals that the state was modified in place.
pub trait StepMonitor {
    fn accept(&mut self, step: usize, t: f64, y: &mut [f64]) -> Result<bool>;
}

impl<F> StepMonitor for F
where
    F: FnMut(usize, f64, &mut [f64]) -> Result<bool>,
{
    fn accept(&mut self, step: usize, t: f64, y: &mut [f64]) -> Result<bool> {
        self(step, t, y)
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `cfg.t_end`.
pub fn solve<F, M>(mut rhs: F, t0: f64, y0: &[f64], cfg: &SolverConfig, mut monitor: M) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    M: StepMonitor,
{
    cfg.validate()?;
    if cfg.t_end < t0 {
        return Err(Error::InvalidParams(format!("t_end {} precedes t0 {t0}", cfg.t_end)));
    }
    match cfg.method {
        Method::Rk4Fixed => rk4(&mut rhs, t0, y0, cfg, &mut monitor),
        Method::Rk45Adaptive => dopri5(&mut rhs, t0, y0, cfg, &mut monitor),
    }
}

fn rk4<F, M>(rhs: &mut F, t0: f64, y0: &[f64], cfg: &SolverConfig, monitor: &mut M) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    M: StepMonitor,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        dim: n,
        t_start: t0,
        t_end: cfg.t_end,
        y_start: y0.to_vec(),
        segments: Vec::new(),
        rhs_evals: 0,
    };
    let span = cfg.t_end - t0;
    if span == 0.0 {
        return Ok(sol);
    }
    let steps = (span / cfg.dt_init - 1e-9).ceil().max(1.0) as usize;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    rhs(t0, &y, &mut k1)?;
    sol.rhs_evals += 1;
    for step in 0..steps {
        let t = t0 + span * step as f64 / steps as f64;
        let t_next = if step + 1 == steps {
            cfg.t_end
        } else {
            t0 + span * (step + 1) as f64 / steps as f64
        };
        let h = t_next - t;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(t_next, &tmp, &mut k4)?;
        let mut y_new = vec![0.0; n];
        for i in 0..n {
            y_new[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        monitor.accept(step, t_next, &mut y_new)?;
        let mut f_new = vec![0.0; n];
        rhs(t_next, &y_new, &mut f_new)?;
        sol.rhs_evals += 4;
        let mut coeffs = vec![0.0; 5 * n];
        for i in 0..n {
            let r2 = y_new[i] - y[i];
            let r3 = h * k1[i] - r2;
            coeffs[i] = y[i];
            coeffs[n + i] = r2;
            coeffs[2 * n + i] = r3;
            coeffs[3 * n + i] = r2 - h * f_new[i] - r3;
        }
        sol.segments.push(Segment { t0: t, h, coeffs });
        y = y_new;
        k1 = f_new;
    }
    Ok(sol)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn dopri5<F, M>(rhs: &mut F, t0: f64, y0: &[f64], cfg: &SolverConfig, monitor: &mut M) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    M: StepMonitor,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        dim: n,
        t_start: t0,
        t_end: cfg.t_end,
        y_start: y0.to_vec(),
        segments: Vec::new(),
        rhs_evals: 0,
    };
    let span = cfg.t_end - t0;
    if span == 0.0 {
        return Ok(sol);
    }
    let (rtol, atol) = (cfg.rel_tol, cfg.abs_tol);
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    rhs(t0, &y, &mut k1)?;
    sol.rhs_evals += 1;

    let mut h = if cfg.dt_init > 0.0 {
        cfg.dt_init.min(span)
    } else {
        initial_step(&y, &k1, rtol, atol).min(span)
    };
    let mut t = t0;
    let mut step = 0usize;
    let mut err_old: f64 = 1e-4;
    let h_floor = 1e-14 * (1.0 + cfg.t_end.abs());

    while t < cfg.t_end {
        let last = t + h >= cfg.t_end - 1e-12 * span;
        if last {
            h = cfg.t_end - t;
        }
        if h < h_floor {
            return Err(Error::StepUnderflow { t, h });
        }
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ys, &mut k2)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ys, &mut k3)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ys, &mut k4)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ys, &mut k5)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { cfg.t_end } else { t + h };
        rhs(t_new, &ys, &mut k6)?;
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &y_new, &mut k7)?;
        sol.rhs_evals += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            let mut coeffs = vec![0.0; 5 * n];
            for i in 0..n {
                let r2 = y_new[i] - y[i];
                let r3 = h * k1[i] - r2;
                coeffs[i] = y[i];
                coeffs[n + i] = r2;
                coeffs[2 * n + i] = r3;
                coeffs[3 * n + i] = r2 - h * k7[i] - r3;
                coeffs[4 * n + i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let modified = monitor.accept(step, t_new, &mut y_new)?;
            if modified {
                // keep the segment continuous with the clamped endpoint
                for i in 0..n {
                    coeffs[n + i] = y_new[i] - y[i];
                }
                rhs(t_new, &y_new, &mut k7)?;
                sol.rhs_evals += 1;
            }
            sol.segments.push(Segment { t0: t, h, coeffs });
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            step += 1;
            // PI step-size controller (Hairer's beta = 0.04)
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_old.powf(0.04);
            err_old = err.max(1e-4);
            h *= fac.clamp(0.2, 10.0);
        } else {
            let fac = 0.9 * err.powf(-0.2);
            h *= fac.clamp(0.2, 1.0);
        }
    }
    sol.t_end = t;
    Ok(sol)
}

fn initial_step(y: &[f64], f: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = atol + rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}
