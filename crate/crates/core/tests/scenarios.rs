use std::path::{Path, PathBuf};

use lhp_core::scenario::export::TRAJECTORY_COLUMNS;
use lhp_core::scenario::{env_overrides, run_scenario, Manifest, Mode, RunConfig, Status};

fn scenario(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file)
}

fn shortened(file: &str, t_end: f64, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&scenario(file)).unwrap();
    cfg.t_end_s = t_end;
    cfg.output.dir = Some(dir.to_path_buf());
    cfg
}

fn header(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn shipped_scenarios_validate() {
    for f in ["openloop_steps.toml", "staircase_control.toml"] {
        let cfg = RunConfig::load(&scenario(f)).unwrap();
        cfg.validate().unwrap();
        assert!(cfg.input_profile().is_ok(), "{f}");
    }
}

#[test]
fn open_loop_run_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&shortened("openloop_steps.toml", 120.0, dir.path()), Mode::OpenLoop).unwrap();
    assert_eq!(m.status, Status::Ok);
    assert_eq!(m.files, ["trajectory.csv", "manifest.json"]);
    assert_eq!(m.diagnostics.as_ref().unwrap().samples, 121);
    assert_eq!(header(&dir.path().join("trajectory.csv")), TRAJECTORY_COLUMNS);

    // The heater step at 100 s warms the chamber.
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let t_cc: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((t_cc[100] - t_cc[0]).abs() < 1e-9);
    assert!(t_cc[120] > t_cc[100] + 1e-3);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema"], "lhp-manifest/1");
    assert_eq!(manifest["status"], "ok");
}

#[test]
fn manifest_replays_its_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = shortened("staircase_control.toml", 3.0, a.path());
    let first: Manifest = run_scenario(&cfg, Mode::ClosedLoop).unwrap();
    assert_eq!(first.files, ["trajectory.csv", "control.csv", "manifest.json"]);

    let mut replayed = RunConfig::load(&a.path().join("manifest.json")).unwrap();
    assert_eq!(replayed, cfg);
    replayed.output.dir = Some(b.path().to_path_buf());
    let second = run_scenario(&replayed, Mode::ClosedLoop).unwrap();
    assert_eq!(second.initial_state, first.initial_state);
    for f in ["trajectory.csv", "control.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn environment_overrides_nested_keys() {
    let vars = [
        ("LHP_T_END_S", "5"),
        ("LHP_INTEGRATOR__STEP_S", "0.05"),
        ("LHP_PROFILE__0__Q_EVAP_W", "55"),
        ("PATH", "/bin"),
    ]
    .map(|(k, v)| (k.to_owned(), v.to_owned()));
    let overrides = env_overrides(vars);
    assert_eq!(overrides.len(), 3);
    let text = std::fs::read_to_string(scenario("openloop_steps.toml")).unwrap();
    let cfg = RunConfig::from_toml_str(&text, &overrides).unwrap();
    assert_eq!(cfg.t_end_s, 5.0);
    assert_eq!(cfg.integrator.step_s, 0.05);
    assert_eq!(cfg.profile[0].Q_evap_W, 55.0);
}

#[test]
fn numerical_failure_is_recorded_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "flooded"
t_end_s = 10.0
[[profile]]
t_s = 0.0
Q_evap_W = 60.0
T_sink_K = 350.0
"#;
    let mut cfg = RunConfig::from_toml_str(text, &[]).unwrap();
    cfg.output.dir = Some(dir.path().to_path_buf());
    let m = run_scenario(&cfg, Mode::OpenLoop).unwrap();
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.errors.len(), 1);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn equilibrium_mode_reports_stable_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&shortened("openloop_steps.toml", 1.0, dir.path()), Mode::Equilibrium).unwrap();
    let eq = m.equilibrium.unwrap();
    assert!(eq.equilibrium.residual_norm < 1e-9);
    // One zero eigenvalue belongs to the neutral chamber liquid volume.
    let mut re: Vec<f64> = eq.eigenvalues.iter().map(|e| e.0).collect();
    re.sort_by(f64::total_cmp);
    assert!(re[..3].iter().all(|&r| r < 0.0), "{re:?}");
    assert!(re[3].abs() < 1e-6, "{re:?}");
}

#[test]
fn lambda_sweep_reports_each_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shortened("staircase_control.toml", 10.0, dir.path());
    cfg.sweep.lambdas_per_s = vec![0.5, 2.0];
    cfg.integrator.step_s = 0.02;
    let m = run_scenario(&cfg, Mode::SweepLambda).unwrap();
    assert_eq!(m.status, Status::Ok);
    assert_eq!(m.sweep.len(), 2);
    assert!(m.sweep.iter().all(|r| r.completed));
}
