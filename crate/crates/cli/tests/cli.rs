//! End-to-end behaviour of the `plantmf` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plantmf::meanfield::{train, MeanFieldModel};
use plantmf::model::gompertz_closed_form;
use plantmf::{Mu0Config, PlantTraits, TrainConfig};
use tempfile::TempDir;

fn plantmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plantmf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn small_model(dir: &Path, zero: bool) -> PathBuf {
    let cfg = TrainConfig {
        cloud_size: 200,
        train_size: 200,
        ..TrainConfig::default()
    };
    let mut m = train(&Mu0Config::table2(5), &cfg).unwrap();
    if zero {
        m = m.zeroed();
    }
    let p = dir.join(if zero { "zero.json" } else { "model.json" });
    fs::write(&p, m.to_json().unwrap()).unwrap();
    p
}

#[test]
fn simulate_writes_headed_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "seed = 9\n");
    let out = dir.path().join("sim");
    let o = plantmf(&["simulate", "--config", s(&cfg), "--n", "12", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# config_hash=") && first.ends_with(" seed=9"));
    assert_eq!(csv.lines().nth(1).unwrap(), "t,plant_id,s,x1,x2,S,gamma,C_index");
    assert_eq!(data_rows(&csv).len(), 12 * 101);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["invariants_hold"], true);
    assert_eq!(diag["seed"], 9);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(plantmf(&["simulate", "--config", s(&cfg), "--n", "5", "--seed", "2", "--out", s(&a)]).status.success());
    assert!(plantmf(&["simulate", "--n", "5", "--seed", "2", "--out", s(&b)]).status.success());
    let ta = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let tb = fs::read_to_string(b.join("trajectory.csv")).unwrap();
    assert!(ta.lines().next().unwrap().ends_with("seed=2"));
    assert_eq!(data_rows(&ta), data_rows(&tb));
}

#[test]
fn far_separated_pair_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "seed = 4\ninit.position_spread = 1e6\n");
    let out = dir.path().join("pair");
    assert!(plantmf(&["simulate", "--config", s(&cfg), "--n", "2", "--out", s(&out)]).status.success());
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut worst: f64 = 0.0;
    for r in data_rows(&csv) {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        let th = PlantTraits::new([v[3], v[4]], v[5], v[6]);
        let exact = gompertz_closed_form(&th, 0.1, v[0]);
        worst = worst.max((v[2] - exact).abs() / exact);
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    // missing seed, unknown key, bad value: configuration errors
    assert_eq!(plantmf(&["simulate", "--out", s(&out)]).status.code(), Some(2));
    let bad = write_config(dir.path(), "seed = 1\nmodel.colour = 3\n");
    assert_eq!(plantmf(&["simulate", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    let neg = write_config(dir.path(), "seed = 1\nmodel.sigma_r = -1.0\n");
    assert_eq!(plantmf(&["simulate", "--config", s(&neg), "--out", s(&out)]).status.code(), Some(2));
    // malformed list and missing model
    let ok = write_config(dir.path(), "seed = 1\n");
    assert_eq!(
        plantmf(&["converge", "--config", s(&ok), "--self-compare", "--n-list", "100,50", "--out", s(&out)]).status.code(),
        Some(2)
    );
    assert_eq!(
        plantmf(&["converge", "--config", s(&ok), "--model", "missing.json", "--out", s(&out)]).status.code(),
        Some(2)
    );
    // a solver that cannot make progress is a numerical failure
    let stiff = write_config(dir.path(), "seed = 1\nsolver.method = \"rk4-fixed\"\nsolver.dt_init = 5.0\n");
    assert_eq!(plantmf(&["simulate", "--config", s(&stiff), "--n", "20", "--out", s(&out)]).status.code(), Some(3));
}

#[test]
fn self_comparison_reports_zero_distances() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\n");
    let out = dir.path().join("c");
    let o = plantmf(&["converge", "--config", s(&cfg), "--self-compare", "--n-list", "50", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.contains("N,t,w1_size,w1_full,flow_gap,bound_value"));
    for r in data_rows(&csv) {
        assert_eq!(r[0], "50");
        assert_eq!((r[2].as_str(), r[3].as_str(), r[4].as_str()), ("0", "0", "0"));
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(json["reports"][0]["N"], 50);
}

#[test]
fn potential_dump_rows() {
    let dir = TempDir::new().unwrap();
    let model = small_model(dir.path(), false);
    let out = dir.path().join("empty");
    assert!(plantmf(&["potential-dump", "--model", s(&model), "--grid", "0,1,0,1,0", "--out", s(&out)]).status.success());
    let csv = fs::read_to_string(out.join("surface.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 0);
    assert!(csv.contains("x1,x2,S_bar,gamma_bar,s_final,in_cloud"));

    // far from both surface extrema the mean asymptotic size is the offset
    let out = dir.path().join("far");
    assert!(plantmf(&["potential-dump", "--model", s(&model), "--grid", "-40,-30,25,35,3", "--out", s(&out)]).status.success());
    for r in data_rows(&fs::read_to_string(out.join("surface.csv")).unwrap()) {
        assert_eq!(r[2], "0.75");
        assert_eq!(r[5], "0");
    }
}

#[test]
fn zero_model_surface_is_competition_free() {
    let dir = TempDir::new().unwrap();
    let model_path = small_model(dir.path(), true);
    let model = MeanFieldModel::from_json(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let out = dir.path().join("z");
    assert!(plantmf(&["potential-dump", "--model", s(&model_path), "--grid", "-2,2,-2,2,9", "--out", s(&out)]).status.success());
    let s_bar = model.mu0.s0_law.midpoint();
    for r in data_rows(&fs::read_to_string(out.join("surface.csv")).unwrap()) {
        let v: Vec<f64> = r[..5].iter().map(|x| x.parse().unwrap()).collect();
        let exact = gompertz_closed_form(&PlantTraits::new([v[0], v[1]], v[2], v[3]), s_bar, model.horizon);
        assert!((v[4] - exact).abs() < 1e-6);
    }
}

#[test]
fn zero_degree_training_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 2\ntrain.degree_later = 0\ntrain.cloud_size = 200\ntrain.train_size = 200\n",
    );
    let out = dir.path().join("t");
    let o = plantmf(&["train-meanfield", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&fs::read_to_string(out.join("r2.csv")).unwrap());
    assert_eq!(rows.len(), 10);
    assert!(MeanFieldModel::from_json(&fs::read_to_string(out.join("model.json")).unwrap()).is_ok());
}
