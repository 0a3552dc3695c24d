use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file)
}

fn lhp(args: &[&str], env: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lhp"))
        .env_clear()
        .envs(env.iter().copied())
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SHORT: &str = r#"
name = "short"
t_end_s = 3.0
[integrator]
method = "rkc"
[[profile]]
t_s = 0.0
Q_evap_W = 60.0
T_sink_K = 273.15
Q_cc_W = 4.653
"#;

#[test]
fn props_writes_one_row_per_degree() {
    let out = lhp(&["props", "--from-degc", "-10", "--to-degc", "10"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "T_degC,T,p_sat,rho_l,rho_v,cp_l,cp_v,dh_v,mu_l,sigma");
    assert_eq!(lines.count(), 21);
}

#[test]
fn props_outside_correlation_range_is_a_numerical_failure() {
    let out = lhp(&["props", "--from-degc", "-60", "--to-degc", "0"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_params_reports_identified_values() {
    let out = lhp(&["fit-params", scenario("reference_op.toml").to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let k_2phi = v["k_2phi_W_per_m2K"].as_f64().unwrap();
    assert!((k_2phi / 1064.0 - 1.0).abs() < 0.05, "{k_2phi}");
    assert!(v["residual_norm"].as_f64().unwrap() < 1e-9);
}

#[test]
fn sim_writes_artifacts_under_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out_dir = dir.path().join("out");
    let out = lhp(&["sim", &cfg, "--out-dir", out_dir.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("short: ok"));
    for f in ["trajectory.csv", "manifest.json"] {
        assert!(out_dir.join("short").join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("short/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn environment_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out_dir = dir.path().join("out");
    let out = lhp(&["sim", &cfg, "--out-dir", out_dir.to_str().unwrap()], &[("LHP_T_END_S", "1")]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("short/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_error_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SHORT.replace("t_end_s = 3.0", "t_end_s = 3.0\nbogus = 1"));
    let out = lhp(&["sim", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("bogus"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(lhp(&["sim", missing.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", &SHORT.replace("T_sink_K = 273.15", "T_sink_K = 350.0"));
    let out_dir = dir.path().join("out");
    let out = lhp(&["sim", &cfg, "--out-dir", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out_dir.join("short/manifest.json").exists());
}

#[test]
fn config_error_outranks_numerical_failure_in_a_batch() {
    let dir = tempfile::tempdir().unwrap();
    let named = |name: &str| SHORT.replace("\"short\"", &format!("{name:?}"));
    let hot = write(dir.path(), "hot.toml", &named("hot").replace("T_sink_K = 273.15", "T_sink_K = 350.0"));
    let bad = write(dir.path(), "bad.toml", &named("bad").replace("t_end_s = 3.0", "t_end_s = -1.0"));
    let ok = write(dir.path(), "ok.toml", &named("ok"));
    let out_dir = dir.path().join("out");
    let out = lhp(
        &["sim", &hot, &bad, &ok, "--jobs", "3", "--out-dir", out_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}
