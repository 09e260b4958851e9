//! Browser bindings: scenario simulation, invariance classification and
//! extension reduction, each returning JSON text.

use eqf_core::classify::{classify_invariance, decompose, reduce_group_affine_extension, Sampling};
use eqf_core::sim::{run, Scenario};
use eqf_core::systems::{build_system, registry, SystemParams};
use eqf_core::Error;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Bundled scenarios, `(name, toml)`.
pub const PRESETS: [(&str, &str); 4] = [
    ("so3_gyro_clean", include_str!("../../../scenarios/so3_gyro_clean.toml")),
    ("so3_gyro_noisy", include_str!("../../../scenarios/so3_gyro_noisy.toml")),
    ("so3_curved", include_str!("../../../scenarios/so3_curved.toml")),
    ("se3_pose", include_str!("../../../scenarios/se3_pose.toml")),
];

pub fn simulate_json(scenario_toml: &str) -> Result<String, Error> {
    let sc = Scenario::from_toml_str(scenario_toml)?;
    let report = run(&sc)?;
    let n = sc.init_error.len();
    let eps: Vec<Vec<f64>> = (0..n).map(|i| report.records.iter().map(|r| r.eps[i]).collect()).collect();
    let out = json!({
        "report": report,
        "t": report.records.iter().map(|r| r.t).collect::<Vec<_>>(),
        "err_norm": report.records.iter().map(|r| r.err_norm).collect::<Vec<_>>(),
        "sigma_trace": report.records.iter().map(|r| r.sigma_trace).collect::<Vec<_>>(),
        "eps": eps,
    });
    Ok(out.to_string())
}

fn params(alpha: Option<f64>, n: Option<usize>) -> SystemParams {
    SystemParams { alpha, n }
}

pub fn classify_json(system: &str, alpha: Option<f64>, samples: usize, tol: f64, seed: u64) -> Result<String, Error> {
    let sys = build_system(system, &params(alpha, None))?;
    let s = Sampling::new(samples, tol, seed);
    let invariance = classify_invariance(&sys, &s)?;
    let decomposition = match decompose(&sys, &s) {
        Ok(d) => json!(d.summary()),
        Err(Error::NotInvariant { .. }) => Value::Null,
        Err(e) => return Err(e),
    };
    Ok(json!({ "invariance": invariance, "decomposition": decomposition }).to_string())
}

pub fn extend_json(system: &str, alpha: Option<f64>, samples: usize, tol: f64, seed: u64) -> Result<String, Error> {
    let sys = build_system(system, &params(alpha, None))?;
    let s = Sampling::new(samples, tol, seed);
    Ok(serde_json::to_string(&reduce_group_affine_extension(&sys, &s)?.summary(&s))?)
}

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub fn simulate(scenario_toml: &str) -> Result<String, JsValue> {
    simulate_json(scenario_toml).map_err(js_err)
}

#[wasm_bindgen]
pub fn classify(system: &str, alpha: Option<f64>, samples: usize, tol: f64, seed: u32) -> Result<String, JsValue> {
    classify_json(system, alpha, samples, tol, seed.into()).map_err(js_err)
}

#[wasm_bindgen]
pub fn extend(system: &str, alpha: Option<f64>, samples: usize, tol: f64, seed: u32) -> Result<String, JsValue> {
    extend_json(system, alpha, samples, tol, seed.into()).map_err(js_err)
}

#[wasm_bindgen]
pub fn list_systems() -> String {
    let v: Vec<Value> = registry()
        .iter()
        .map(|e| json!({ "id": e.id, "group": e.group, "doc": e.doc }))
        .collect();
    Value::Array(v).to_string()
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Option<String> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| t.to_string())
}

#[wasm_bindgen]
pub fn preset_names() -> String {
    Value::Array(PRESETS.iter().map(|(n, _)| json!(n)).collect()).to_string()
}
