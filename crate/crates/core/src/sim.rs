//! Scenario-driven simulation: ground truth with noisy inputs and outputs,
//! filter execution and error metrics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eqf::{filter_step, ErrorDynamics, ErrorRecord, FilterParams, FilterState, Linearisation, MeasurementModel, RiccatiForm};
use crate::error::{Error, Result};
use crate::kinematics::KinematicSystem;
use crate::lie::{GroupElement, GroupKind, SpecRef};
use crate::systems::{build_measurement, build_system, group_spec, lookup, MeasurementConfig, SystemParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub id: String,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
}

/// Per-component input signal; frequencies in Hz, phases in radians.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    Constant {
        value: Vec<f64>,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
    },
}

impl InputSignal {
    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Constant { value } => value.len(),
            InputSignal::Sinusoid { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match self {
            InputSignal::Constant { value } => DVector::from_column_slice(value),
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => DVector::from_fn(amplitude.len(), |i, _| {
                amplitude[i] * (2.0 * std::f64::consts::PI * frequency[i] * t + phase[i]).sin()
            }),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub p_diag: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub sigma0_diag: Vec<f64>,
    #[serde(default)]
    pub linearisation: Linearisation,
    #[serde(default)]
    pub riccati_form: RiccatiForm,
    #[serde(default)]
    pub error_dynamics: ErrorDynamics,
    pub fd_step: Option<f64>,
    pub sigma_floor: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub group: String,
    pub system: SystemConfig,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub init_error: Vec<f64>,
    pub input_signal: InputSignal,
    pub input_noise_std: Vec<f64>,
    pub measurement: MeasurementConfig,
    pub meas_noise_std: Vec<f64>,
    pub filter: FilterConfig,
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Scenario(format!("`{what}` has {got} entries, expected {expected}")));
    }
    Ok(())
}

/// A scenario with its system, measurement model and filter parameters built.
#[derive(Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub spec: SpecRef,
    pub system: KinematicSystem,
    pub model: MeasurementModel,
    pub params: FilterParams,
    pub steps: usize,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Validates every constraint and builds the runtime pieces.
    pub fn prepare(&self) -> Result<Prepared> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Scenario("`dt` must be positive".into()));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::Scenario("`duration` must be at least `dt`".into()));
        }
        let entry = lookup(&self.system.id)?;
        if entry.group != self.group {
            return Err(Error::Scenario(format!(
                "system `{}` lives on `{}`, scenario says `{}`",
                self.system.id, entry.group, self.group
            )));
        }
        let spec = group_spec(&self.group, self.system.n)?;
        let system = build_system(
            &self.system.id,
            &SystemParams {
                alpha: self.system.alpha,
                n: self.system.n,
            },
        )?;
        let model = build_measurement(&self.measurement, &spec)?;
        let (n, p, m) = (spec.algebra_dim(), system.input_dim(), model.dim());

        check_len("init_error", self.init_error.len(), n)?;
        check_len("input_signal", self.input_signal.dim(), p)?;
        if let InputSignal::Sinusoid { frequency, phase, .. } = &self.input_signal {
            check_len("input_signal.frequency", frequency.len(), p)?;
            check_len("input_signal.phase", phase.len(), p)?;
        }
        check_len("input_noise_std", self.input_noise_std.len(), p)?;
        check_len("meas_noise_std", self.meas_noise_std.len(), m)?;
        check_len("filter.p_diag", self.filter.p_diag.len(), n)?;
        check_len("filter.q_diag", self.filter.q_diag.len(), m)?;
        check_len("filter.sigma0_diag", self.filter.sigma0_diag.len(), n)?;
        if self.input_noise_std.iter().chain(&self.meas_noise_std).any(|s| !(*s >= 0.0)) {
            return Err(Error::Scenario("noise standard deviations must be non-negative".into()));
        }
        let f = &self.filter;
        if f.p_diag.iter().chain(&f.q_diag).chain(&f.sigma0_diag).any(|d| !(*d > 0.0)) {
            return Err(Error::Scenario("filter diagonals must be positive".into()));
        }

        let mut params = FilterParams::from_diagonals(&f.p_diag, &f.q_diag, &f.sigma0_diag)?;
        params.linearisation = f.linearisation;
        params.riccati_form = f.riccati_form;
        params.error_dynamics = f.error_dynamics;
        if let Some(s) = f.fd_step {
            if !(s > 0.0) {
                return Err(Error::Scenario("`filter.fd_step` must be positive".into()));
            }
            params.fd_step = s;
        }
        if let Some(s) = f.sigma_floor {
            if !(s > 0.0) {
                return Err(Error::Scenario("`filter.sigma_floor` must be positive".into()));
            }
            params.sigma_floor = s;
        }

        Ok(Prepared {
            scenario: self.clone(),
            spec,
            system,
            model,
            params,
            steps: self.steps(),
        })
    }

    /// Same scenario with another seed (Monte Carlo runs use `seed + run index`).
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Ground truth `X_k` (steps + 1 states) and what the filter sees at each step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<GroupElement>,
    pub clean_inputs: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

fn noise<R: Rng>(rng: &mut R, std: &[f64]) -> DVector<f64> {
    DVector::from_fn(std.len(), |i, _| std[i] * rng.sample::<f64, _>(StandardNormal))
}

/// `X_{k+1} = X_k · exp(dt · Λ(X_k, v_k))` from `X_0 = I`, with input and
/// measurement noise drawn from `rng` in a fixed order.
pub fn generate_truth<R: Rng>(prep: &Prepared, rng: &mut R) -> Result<Trajectory> {
    let sc = &prep.scenario;
    let dt = sc.dt;
    let mut x = prep.spec.identity();
    let mut states = Vec::with_capacity(prep.steps + 1);
    let mut clean_inputs = Vec::with_capacity(prep.steps);
    let mut inputs = Vec::with_capacity(prep.steps);
    let mut outputs = Vec::with_capacity(prep.steps);
    for k in 0..prep.steps {
        let t = k as f64 * dt;
        let v = sc.input_signal.at(t);
        inputs.push(&v + noise(rng, &sc.input_noise_std));
        outputs.push(prep.model.eval(&x) + noise(rng, &sc.meas_noise_std));
        let lam = prep.system.lift(&x, &v)?;
        let next = &x * &prep.spec.exp(&(lam * dt));
        states.push(std::mem::replace(&mut x, next));
        clean_inputs.push(v);
        if (k + 1) % 100 == 0 {
            x = prep.spec.project(x.matrix())?;
        }
    }
    states.push(x);
    Ok(Trajectory {
        states,
        clean_inputs,
        inputs,
        outputs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { step: usize, message: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub system: String,
    pub seed: u64,
    pub rmse_tail: f64,
    pub final_err: f64,
    /// Rotation angle of the final error `X·X̂⁻¹` (rad).
    pub final_rotation_err: f64,
    /// `‖t − t̂‖` at the end, for groups with a translation part.
    pub final_translation_err: Option<f64>,
    pub steps: usize,
    pub min_sigma_eig: f64,
    pub wall_time: f64,
    #[serde(flatten)]
    pub status: RunStatus,
    #[serde(skip)]
    pub records: Vec<ErrorRecord>,
}

/// RMS of `err_norm` over the final half of the records.
pub fn rmse_tail(records: &[ErrorRecord]) -> f64 {
    let tail = &records[records.len() / 2..];
    if tail.is_empty() {
        return 0.0;
    }
    (tail.iter().map(|r| r.err_norm * r.err_norm).sum::<f64>() / tail.len() as f64).sqrt()
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

pub fn run(scenario: &Scenario) -> Result<RunReport> {
    run_prepared(&scenario.prepare()?)
}

pub fn run_prepared(prep: &Prepared) -> Result<RunReport> {
    let clock = Stopwatch::start();
    let sc = &prep.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let truth = generate_truth(prep, &mut rng)?;

    let init = DVector::from_column_slice(&sc.init_error);
    let xhat0 = &prep.spec.exp(&(-init)) * &truth.states[0];
    let mut state = FilterState::new(xhat0, &prep.params);
    let mut records = Vec::with_capacity(prep.steps);
    let mut status = RunStatus::Completed;
    let mut min_eig = f64::INFINITY;

    for k in 0..prep.steps {
        let stepped = filter_step(
            &state,
            &prep.system,
            &prep.model,
            &truth.inputs[k],
            &truth.outputs[k],
            sc.dt,
            &prep.params,
        )
        .and_then(|next| {
            let rec = ErrorRecord::new((k + 1) as f64 * sc.dt, &truth.states[k + 1], &next.xhat, &next.sigma)?;
            Ok((next, rec))
        });
        match stepped {
            Ok((next, rec)) => {
                min_eig = min_eig.min(crate::linalg::min_eigenvalue(&next.sigma));
                state = next;
                records.push(rec);
            }
            Err(e) => {
                log::warn!("run failed at step {k}: {e}");
                status = RunStatus::Failed {
                    step: k,
                    message: e.to_string(),
                };
                break;
            }
        }
    }

    let x_final = &truth.states[records.len()];
    let err = crate::eqf::state_error(x_final, &state.xhat)?;
    let final_translation_err = match prep.spec.kind() {
        GroupKind::Se3 | GroupKind::Rn(_) => Some((x_final.translation() - state.xhat.translation()).norm()),
        _ => None,
    };
    Ok(RunReport {
        system: sc.system.id.clone(),
        seed: sc.seed,
        rmse_tail: rmse_tail(&records),
        final_err: records.last().map_or(0.0, |r| r.err_norm),
        final_rotation_err: err.rotation_angle(),
        final_translation_err,
        steps: records.len(),
        min_sigma_eig: min_eig,
        wall_time: clock.elapsed(),
        status,
        records,
    })
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    const P: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..P).contains(&exp) {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn records_csv(records: &[ErrorRecord], n: usize) -> String {
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",eps_{i}");
    }
    out.push_str(",err_norm,sigma_trace\n");
    for r in records {
        out.push_str(&format_sig(r.t));
        for e in &r.eps {
            out.push(',');
            out.push_str(&format_sig(*e));
        }
        let _ = writeln!(out, ",{},{}", format_sig(r.err_norm), format_sig(r.sigma_trace));
    }
    out
}

/// Writes `records.csv` and `report.json` into `dir`.
pub fn write_outputs(report: &RunReport, n: usize, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("records.csv"), records_csv(&report.records, n))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

/// Σ stays symmetric with the smallest eigenvalue at or above the floor.
pub fn sigma_is_spd(sigma: &DMatrix<f64>, floor: f64) -> bool {
    sigma == &sigma.transpose() && crate::linalg::min_eigenvalue(sigma) >= floor * (1.0 - 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLEAN: &str = r#"
group = "so3"
duration = 1.0
dt = 0.01
seed = 7
init_error = [0.0, 0.0, 0.0]
input_noise_std = [0.0, 0.0, 0.0]
meas_noise_std = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]

[system]
id = "so3_left"

[input_signal]
kind = "constant"
value = [0.0, 0.0, 0.0]

[measurement]
model = "direction"
directions = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]

[filter]
p_diag = [1e-6, 1e-6, 1e-6]
q_diag = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
sigma0_diag = [1.0, 1.0, 1.0]
"#;

    #[test]
    fn format_sig_matches_printf_g() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(0.01), "0.01");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e+14");
        assert_eq!(format_sig(1.5e-7), "1.5e-07");
        assert_eq!(format_sig(0.0001234), "0.0001234");
        assert_eq!(format_sig(999999999999.5), "1e+12");
    }

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let sc = Scenario::from_toml_str(CLEAN).unwrap();
        assert_eq!(sc.steps(), 100);
        sc.prepare().unwrap();
        let typo = CLEAN.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(Scenario::from_toml_str(&typo).is_err());
        let typo = CLEAN.replace("p_diag", "p_diag_x");
        assert!(Scenario::from_toml_str(&typo).is_err());
    }

    #[test]
    fn validation_errors() {
        let bad_dt = CLEAN.replace("dt = 0.01", "dt = 0.0");
        assert!(Scenario::from_toml_str(&bad_dt).unwrap().prepare().is_err());
        let bad_len = CLEAN.replace("init_error = [0.0, 0.0, 0.0]", "init_error = [0.0]");
        assert!(Scenario::from_toml_str(&bad_len).unwrap().prepare().is_err());
        let bad_group = CLEAN.replace("group = \"so3\"", "group = \"se3\"");
        assert!(Scenario::from_toml_str(&bad_group).unwrap().prepare().is_err());
        let neg = CLEAN.replace("input_noise_std = [0.0, 0.0, 0.0]", "input_noise_std = [0.0, -1.0, 0.0]");
        assert!(Scenario::from_toml_str(&neg).unwrap().prepare().is_err());
        let zero_q = CLEAN.replace("q_diag = [1.0, 1.0", "q_diag = [0.0, 1.0");
        assert!(Scenario::from_toml_str(&zero_q).unwrap().prepare().is_err());
    }

    #[test]
    fn zero_input_truth_is_constant() {
        let prep = Scenario::from_toml_str(CLEAN).unwrap().prepare().unwrap();
        let traj = generate_truth(&prep, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(traj.states.len(), 101);
        for x in &traj.states {
            assert_eq!(x.matrix(), prep.spec.identity().matrix());
        }
    }

    #[test]
    fn converged_start_stays_converged() {
        let report = run(&Scenario::from_toml_str(CLEAN).unwrap()).unwrap();
        assert_eq!(report.status, RunStatus::Completed);
        assert_eq!(report.steps, 100);
        assert!(report.rmse_tail < 1e-6);
    }

    #[test]
    fn rmse_tail_over_final_half() {
        let recs: Vec<_> = (0..4)
            .map(|i| ErrorRecord {
                t: i as f64,
                eps: vec![],
                err_norm: i as f64,
                sigma_trace: 0.0,
            })
            .collect();
        assert!((rmse_tail(&recs) - ((4.0 + 9.0) / 2.0f64).sqrt()).abs() < 1e-15);
        assert_eq!(rmse_tail(&[]), 0.0);
    }
}
