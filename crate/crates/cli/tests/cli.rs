use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const PLANT: &str = r#"
[plant]
type = "linear"
mass = 3.0
motor_inertia = 3.0
stiffness = 1e6
damping = 1.0
"#;

fn impctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impctl")).args(args).output().expect("binary runs")
}

/// Writes `toml` into a fresh directory and runs `command` on it.
fn run(command: &str, toml: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, toml).unwrap();
    let out = out_dir(&dir);
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = impctl(&args);
    (dir, output)
}

fn out_dir(dir: &TempDir) -> PathBuf {
    dir.path().join("out")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// `quantity → value` for 1×1 entries of synth.csv.
fn synth_value(dir: &TempDir, quantity: &str) -> f64 {
    let (_, rows) = read_csv(&out_dir(dir).join("synth.csv"));
    rows.iter()
        .find(|r| r[0] == quantity && r[1] == "1" && r[2] == "1")
        .unwrap_or_else(|| panic!("{quantity} missing"))[3]
        .parse()
        .unwrap()
}

fn reference_config() -> String {
    impedance_cli::experiments::reference_single_joint().to_toml().unwrap()
}

#[test]
fn plant_shaping_needs_no_feedback() {
    let cfg = format!("{PLANT}\n[controller]\ninertia = 3.0\nstiffness = 1e6\n");
    let (dir, o) = run("synth", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(synth_value(&dir, "force_gain").abs() < 1e-12);
    assert!(synth_value(&dir, "joint_torque_gain").abs() < 1e-12);
    assert!((synth_value(&dir, "input_gain") - 1.0).abs() < 1e-12);
}

#[test]
fn force_feedback_scales_inertia_and_stiffness() {
    let cfg = format!("{PLANT}\n[controller]\nforce_gain = 0.9\njoint_torque_gain = 0.0\n");
    let (dir, o) = run("synth", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!((synth_value(&dir, "shaped_inertia") - 0.3 / 1.9).abs() < 1e-12);
    assert!((synth_value(&dir, "shaped_stiffness") - 1e5).abs() < 1e-6);
    assert!((synth_value(&dir, "shaped_damping") - 0.1).abs() < 1e-12);
    assert!((synth_value(&dir, "force_gain_interval_lower") + 1.0).abs() < 1e-12);
    assert!((synth_value(&dir, "force_gain_interval_upper") - 1.0).abs() < 1e-12);
}

#[test]
fn infeasible_force_gain_is_a_configuration_error() {
    let cfg = format!("{PLANT}\n[controller]\nforce_gain = 1.5\njoint_torque_gain = 0.0\n");
    let (_, o) = run("synth", &cfg, &[]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn malformed_config_is_rejected() {
    let (_, o) = run("synth", "[plant]\ntype = \"linear\"\nmass = 3.0\n", &[]);
    assert_eq!(code(&o), 2);
    let cfg = format!("{PLANT}\n[controller]\ninertia = 3.0\nstiffness = 1e6\nforce_gain = 0.5\n");
    let (_, o) = run("synth", &cfg, &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bode_output_is_complete_and_reproducible() {
    let cfg = reference_config();
    let (a, o) = run("bode", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (b, _) = run("bode", &cfg, &[]);
    let path = out_dir(&a).join("bode.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text, fs::read_to_string(out_dir(&b).join("bode.csv")).unwrap());

    let (header, rows) = read_csv(&path);
    assert_eq!(header, ["system_id", "omega_rad_s", "mag_db", "phase_deg", "err"]);
    // nine gain combinations and the target, 400 frequencies each
    assert_eq!(rows.len(), 4000);
    assert_eq!(rows.iter().filter(|r| r[0] == "target").count(), 400);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert_eq!(rows[0][1], "1.0000000000000000e-2");
}

#[test]
fn grid_points_override_resizes_the_sweep() {
    let (dir, o) = run("bode", &reference_config(), &["--grid-points", "50"]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&out_dir(&dir).join("bode.csv"));
    assert_eq!(rows.len(), 500);
}

#[test]
fn pole_zero_map_lists_target_roots() {
    let (dir, o) = run("pzmap", &reference_config(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out_dir(&dir).join("pzmap.csv"));
    assert_eq!(header, ["system_id", "kind", "re", "im"]);
    let target = |kind: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r[0] == "target" && r[1] == kind)
            .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap()))
            .collect()
    };
    let zeros = target("zero");
    assert_eq!(zeros.len(), 1);
    assert!(zeros[0].0.abs() < 1e-12 && zeros[0].1.abs() < 1e-12);
    // 3s² + 10s + 100
    let (re, im) = (-10.0 / 6.0, (1200.0f64 - 100.0).sqrt() / 6.0);
    let poles = target("pole");
    assert_eq!(poles.len(), 2);
    for sign in [-1.0, 1.0] {
        assert!(poles.iter().any(|p| (p.0 - re).abs() < 1e-9 && (p.1 - sign * im).abs() < 1e-9));
    }
}

#[test]
fn resting_simulation_stays_at_rest() {
    let cfg = format!(
        "{PLANT}\n[controller]\nforce_gain = 0.5\njoint_torque_gain = 1.0\n\n[sim]\ndt = 2.5e-5\nhorizon = 0.1\n\n[sim.input]\nkind = \"zero\"\n"
    );
    let (dir, o) = run("simulate", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out_dir(&dir).join("sim.csv"));
    assert_eq!(
        header.join(","),
        "t,q_1,phi_1,p_1,z_1,tau_1,tau_e_1,tau_u_1,H,supply,passivity_residual"
    );
    assert_eq!(rows.len(), 4001);
    for col in 1..header.len() {
        assert!(rows.iter().all(|r| r[col] == rows[0][col]), "column {} varies", header[col]);
    }
}

#[test]
fn step_size_above_stability_cap_is_refused() {
    let cfg = format!("{PLANT}\n[sim]\ndt = 1e-3\nhorizon = 0.1\n\n[sim.input]\nkind = \"zero\"\n");
    let (_, o) = run("simulate", &cfg, &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_passes_on_reference_configuration() {
    let (dir, o) = run("verify", &reference_config(), &["--samples", "20"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    for name in ["gain_consistency", "round_trip", "equivalence", "passivity_audit", "positive_real"] {
        assert!(stdout.lines().any(|l| l.starts_with(&format!("PASS {name} "))), "{name}: {stdout}");
    }
    let (header, _) = read_csv(&out_dir(&dir).join("verify.csv"));
    assert_eq!(header, ["check", "passed", "value", "threshold"]);
}

#[test]
fn verify_flags_inconsistent_input_gain() {
    let cfg = format!("{PLANT}\n[controller]\nforce_gain = 0.9\njoint_torque_gain = 4.0\ninput_gain = 6.0\n");
    let (_, o) = run("verify", &cfg, &["--samples", "5"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL gain_consistency"));
}

#[test]
fn negative_damping_is_a_configuration_error() {
    let cfg = PLANT.replace("damping = 1.0", "damping = -1.0");
    let (_, o) = run("verify", &cfg, &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn reproduce_writes_every_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundle");
    let o = impctl(&["reproduce", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["single_joint.toml", "two_link.toml", "bode.csv", "pzmap.csv", "summary.csv", "two_link/sim_summary.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let (_, rows) = read_csv(&out.join("summary.csv"));
    assert!(rows.iter().all(|r| r[1] == "true"), "{rows:?}");
}
