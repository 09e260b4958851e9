use std::path::PathBuf;

use eqf_core::sim::{format_sig, generate_truth, records_csv, rmse_tail, run, write_outputs, Scenario};
use eqf_core::systems::{build_system, SystemParams};
use nalgebra::{DVector, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

const SPIN: &str = r#"
group = "so3"
duration = 3.141592653589793
dt = 1e-4
seed = 1
init_error = [0.0, 0.0, 0.0]
input_noise_std = [0.0, 0.0, 0.0]
meas_noise_std = [0.0, 0.0, 0.0]

[system]
id = "so3_left"

[input_signal]
kind = "constant"
value = [0.0, 0.0, 1.0]

[measurement]
model = "direction"
directions = [[1.0, 0.0, 0.0]]

[filter]
p_diag = [0.1, 0.1, 0.1]
q_diag = [0.1, 0.1, 0.1]
sigma0_diag = [1.0, 1.0, 1.0]
"#;

#[test]
fn constant_spin_reaches_half_turn() {
    let sc = Scenario::from_toml_str(SPIN).unwrap();
    let prep = sc.prepare().unwrap();
    let traj = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(sc.seed)).unwrap();
    let x = traj.states.last().unwrap();
    let t = prep.steps as f64 * sc.dt;
    let rz = Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
    let got = x.matrix().fixed_view::<3, 3>(0, 0).into_owned();
    assert!((got - rz).norm() < 1e-9);
    let half_turn = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
    let err = x.matrix().fixed_view::<3, 3>(0, 0).transpose() * half_turn;
    let angle = ((err.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    assert!(angle < 1e-3, "{angle}");
}

#[test]
fn truth_is_deterministic_in_the_seed() {
    let sc = Scenario::load(scenario_path("so3_gyro_noisy.toml")).unwrap();
    let prep = sc.prepare().unwrap();
    let a = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let c = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert!(a.states.iter().zip(&b.states).all(|(x, y)| x.matrix() == y.matrix()));
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.outputs, b.outputs);
    assert_ne!(a.inputs, c.inputs);
    assert!(a.states.iter().zip(&c.states).all(|(x, y)| x.matrix() == y.matrix()));
}

#[test]
fn noise_only_touches_observations() {
    let sc = Scenario::load(scenario_path("so3_gyro_noisy.toml")).unwrap();
    let prep = sc.prepare().unwrap();
    let traj = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let spec = prep.spec.clone();
    for k in 0..20 {
        let lam = prep.system.lift(&traj.states[k], &traj.clean_inputs[k]).unwrap();
        let next = &traj.states[k] * &spec.exp(&(lam * sc.dt));
        assert!((next.matrix() - traj.states[k + 1].matrix()).norm() < 1e-14);
        let dv = (&traj.inputs[k] - &traj.clean_inputs[k]).norm();
        assert!(dv > 0.0 && dv < 0.1);
        let dy = (&traj.outputs[k] - prep.model.eval(&traj.states[k])).norm();
        assert!(dy > 0.0 && dy < 0.2);
    }
}

#[test]
fn report_rmse_is_recomputable_from_csv() {
    let sc = Scenario::load(scenario_path("so3_gyro_noisy.toml")).unwrap();
    let report = run(&sc).unwrap();
    let dir = tempdir();
    write_outputs(&report, 3, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,eps_1,eps_2,eps_3,err_norm,sigma_trace");
    let errs: Vec<f64> = lines.map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), report.steps);
    let tail = &errs[errs.len() / 2..];
    let recomputed = (tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt();
    assert!((recomputed - report.rmse_tail).abs() <= 1e-10 * report.rmse_tail.max(1e-300));
    assert_eq!(rmse_tail(&report.records), report.rmse_tail);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rmse_tail"].as_f64().unwrap(), report.rmse_tail);
    assert_eq!(json["steps"].as_u64().unwrap(), 1000);
    assert_eq!(json["status"], "completed");
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("eqf-sim-test-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn csv_uses_twelve_significant_digits() {
    let sc = Scenario::load(scenario_path("so3_gyro_clean.toml")).unwrap();
    let report = run(&sc).unwrap();
    let csv = records_csv(&report.records, 3);
    for line in csv.lines().skip(1).take(50) {
        for field in line.split(',') {
            let x: f64 = field.parse().unwrap();
            assert_eq!(field, format_sig(x));
            let digits = field
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(|c| c.is_ascii_digit())
                .collect::<String>();
            assert!(digits.trim_start_matches('0').len() <= 12, "{field}");
        }
    }
}

#[test]
fn curved_with_zero_alpha_behaves_like_left() {
    let left = build_system("so3_left", &SystemParams::default()).unwrap();
    let flat = build_system("so3_curved", &SystemParams { alpha: Some(0.0), n: None }).unwrap();
    let x = left.spec().exp(&DVector::from_vec(vec![0.2, -1.0, 0.5]));
    assert_eq!(left.lift_matrix(&x), flat.lift_matrix(&x));

    let sc = Scenario::load(scenario_path("so3_gyro_noisy.toml")).unwrap();
    let mut curved = Scenario::load(scenario_path("so3_curved.toml")).unwrap();
    curved.system.alpha = Some(0.0);
    let (a, b) = (run(&sc).unwrap(), run(&curved).unwrap());
    assert_eq!(records_csv(&a.records, 3), records_csv(&b.records, 3));
}

#[test]
fn failed_run_is_reported() {
    let text = std::fs::read_to_string(scenario_path("so3_gyro_clean.toml")).unwrap();
    let bad = text.replace(
        "q_diag = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1]",
        "q_diag = [1e-300, 1e-300, 1e-300, 1e-300, 1e-300, 1e-300]",
    );
    let report = run(&Scenario::from_toml_str(&bad).unwrap()).unwrap();
    match &report.status {
        eqf_core::sim::RunStatus::Failed { step, .. } => assert_eq!(report.steps, *step),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn monte_carlo_seeds_change_the_noise_only() {
    let sc = Scenario::load(scenario_path("so3_gyro_noisy.toml")).unwrap();
    let (a, b) = (run(&sc.with_seed(42)).unwrap(), run(&sc.with_seed(43)).unwrap());
    assert_eq!(a.seed, 42);
    assert_eq!(b.seed, 43);
    assert_ne!(records_csv(&a.records, 3), records_csv(&b.records, 3));
    assert!(a.rmse_tail < 0.05 && b.rmse_tail < 0.05);
}
