//! Experiment configuration: a flat TOML file of dotted keys laid over the
//! built-in defaults (the reference parameter tables).
//!
//! ```toml
//! seed = 7
//! model.sigma_x = 0.5
//! init.s0_law.kind = "uniform"
//! init.s0_law.min = 0.1
//! init.s0_law.max = 0.3
//! solver.rel_tol = 1e-9
//! train.degree_later = 3
//! converge.n_list = [50, 100, 200, 400]
//! ```

use std::path::Path;

use plantmf::init::{InitialSizeLaw, SurfaceParams};
use plantmf::metrics::{ZMetricWeights, DEFAULT_MATCHING_CAP};
use plantmf::ode::uniform_grid;
use plantmf::{Method, ModelParams, Mu0Config, SolverConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// Initial-size law; when absent each subcommand picks its own default
    /// (point mass 0.1 for `simulate`, uniform on [0.1, 0.3] otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0_law: Option<InitialSizeLaw>,
    pub position_spread: f64,
    pub size_surface: SurfaceParams,
    pub rate_surface: SurfaceParams,
    pub size_sd: f64,
    pub rate_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    /// Number of equal intervals between recorded snapshots.
    pub snapshot_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    /// Position scale of the plant metric; defaults to the position spread.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    /// Rate scale of the plant metric; defaults to `1/γ_M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_r: Option<f64>,
    pub matching_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub n_list: Vec<usize>,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelParams,
    pub init: InitSection,
    pub solver: SolverSection,
    pub train: TrainConfig,
    pub metric: MetricSection,
    pub converge: ConvergeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t1 = Mu0Config::table1(0);
        let solver = SolverConfig::default();
        Self {
            seed: None,
            model: ModelParams::default(),
            init: InitSection {
                s0_law: None,
                position_spread: t1.position_spread,
                size_surface: t1.size_surface,
                rate_surface: t1.rate_surface,
                size_sd: t1.size_sd,
                rate_sd: t1.rate_sd,
            },
            solver: SolverSection {
                method: solver.method,
                dt_init: solver.dt_init,
                rel_tol: solver.rel_tol,
                abs_tol: solver.abs_tol,
                t_end: solver.t_end,
                snapshot_steps: 100,
            },
            train: TrainConfig::default(),
            metric: MetricSection {
                ell: None,
                tau_r: None,
                matching_cap: DEFAULT_MATCHING_CAP,
            },
            converge: ConvergeSection {
                n_list: vec![50, 100, 200, 400],
                t_grid: uniform_grid(10.0, 10),
            },
        }
    }
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Dotted paths of all leaves of `t` that are missing from `reference`.
fn unknown_keys(t: &Table, reference: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, reference.get(k)) {
            (_, None) => out.push(path),
            (Value::Table(sub), Some(Value::Table(rsub))) => unknown_keys(sub, rsub, &path, out),
            _ => {}
        }
    }
}

impl ExperimentConfig {
    /// Parses a config text over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let user: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))?;
        let mut merged = Table::try_from(Self::default()).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, &user);
        let cfg: Self = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))?;
        let resolved = Table::try_from(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &resolved, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the config file, or the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml_str(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: plantmf::Error| CliError::Config(e.to_string());
        self.model.validate().map_err(cfg_err)?;
        self.mu0(InitialSizeLaw::PointMass { value: 0.1 }, 0).validate().map_err(cfg_err)?;
        if let Some(law) = self.init.s0_law {
            self.mu0(law, 0).validate().map_err(cfg_err)?;
        }
        if self.solver.snapshot_steps == 0 {
            return Err(CliError::Config("solver.snapshot_steps must be at least 1".into()));
        }
        self.solver().validate().map_err(cfg_err)?;
        self.train.stage_count().map_err(cfg_err)?;
        self.weights(&self.mu0(InitialSizeLaw::PointMass { value: 0.1 }, 0))
            .validate()
            .map_err(cfg_err)?;
        parse_n_list_values(&self.converge.n_list)?;
        let g = &self.converge.t_grid;
        if g.is_empty() || g.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(
                "converge.t_grid must be nonempty, nonnegative and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// The initial distribution, using `default_law` unless the config sets one.
    pub fn mu0(&self, default_law: InitialSizeLaw, seed: u64) -> Mu0Config {
        Mu0Config {
            s0_law: self.init.s0_law.unwrap_or(default_law),
            position_spread: self.init.position_spread,
            size_surface: self.init.size_surface,
            rate_surface: self.init.rate_surface,
            size_sd: self.init.size_sd,
            rate_sd: self.init.rate_sd,
            params: self.model,
            seed,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver.method,
            dt_init: self.solver.dt_init,
            rel_tol: self.solver.rel_tol,
            abs_tol: self.solver.abs_tol,
            t_end: self.solver.t_end,
            snapshot_times: uniform_grid(self.solver.t_end, self.solver.snapshot_steps),
        }
    }

    pub fn weights(&self, mu0: &Mu0Config) -> ZMetricWeights {
        let d = ZMetricWeights::for_config(mu0);
        ZMetricWeights {
            s_m: d.s_m,
            ell: self.metric.ell.unwrap_or(d.ell),
            tau_r: self.metric.tau_r.unwrap_or(d.tau_r),
        }
    }

    /// The seed, which must come from the config or the command line.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (set `seed` in the config or pass --seed)".into()))
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn parse_n_list_values(v: &[usize]) -> Result<(), CliError> {
    if v.is_empty() || v[0] < 2 || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!(
            "population sizes must be at least 2 and strictly increasing, got {v:?}"
        )));
    }
    Ok(())
}

/// Parses a comma-separated, strictly increasing list of population sizes.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>, CliError> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("invalid --n-list '{s}': {e}")))?;
    parse_n_list_values(&v)?;
    Ok(v)
}

/// Parses `x1min,x1max,x2min,x2max,steps`.
pub fn parse_grid(s: &str) -> Result<plantmf::meanfield::GridSpec, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("invalid --grid '{s}': expected x1min,x1max,x2min,x2max,steps"));
    if parts.len() != 5 {
        return Err(bad());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    let grid = plantmf::meanfield::GridSpec {
        x1_min: f(0)?,
        x1_max: f(1)?,
        x2_min: f(2)?,
        x2_max: f(3)?,
        steps: parts[4].parse().map_err(|_| bad())?,
    };
    grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn dotted_overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 3\nmodel.sigma_x = 0.25\ninit.s0_law.kind = \"uniform\"\ninit.s0_law.min = 0.1\ninit.s0_law.max = 0.2\nsolver.method = \"rk4-fixed\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.model.sigma_x, 0.25);
        assert_eq!(cfg.init.s0_law, Some(InitialSizeLaw::Uniform { min: 0.1, max: 0.2 }));
        assert_eq!(cfg.solver.method, Method::Rk4Fixed);
        assert_eq!(cfg.model.log_range, 3.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ExperimentConfig::from_toml_str("model.sigma_y = 1.0"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("colour = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("model.sigma_x = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("train.dt = 0.3").is_err());
        assert!(ExperimentConfig::from_toml_str("converge.n_list = [100, 50]").is_err());
    }

    #[test]
    fn n_list_and_grid_parsing() {
        assert_eq!(parse_n_list("50,100, 200").unwrap(), vec![50, 100, 200]);
        assert!(parse_n_list("50,50").is_err());
        assert!(parse_n_list("100,50").is_err());
        assert!(parse_n_list("a").is_err());
        assert_eq!(parse_grid("-1,1,-2,2,5").unwrap().steps, 5);
        assert!(parse_grid("-1,1,-2,2").is_err());
        assert!(parse_grid("1,-1,-2,2,5").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
    }
}
