//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions return library results so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers turn errors into JavaScript exceptions and
//! structured results into JSON strings.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rank1_sparse::bounds::{binomial, brute_force_opt, BoundCertificate};
use rank1_sparse::experiments::{generate, SyntheticSpec};
use rank1_sparse::formulations::{solve_relaxation, RelaxationKind, RelaxationSpec, SolveOptions};
use rank1_sparse::instance::{diagonal_dominance, gram, ResponseColumn};
use rank1_sparse::penalty::{penalty_surface, rho_mc_plus_2d, rho_r1_2d, rho_r1_branch, Penalty2DParams};
use rank1_sparse::{Error, HyperParams, RegressionInstance, Result};

/// Largest dimension accepted in the browser.
pub const MAX_P: usize = 12;
/// Largest number of supports enumerated for the exact optimum.
pub const MAX_ENUMERATED: u128 = 5_000;

/// Interleaved `(ρ_MC+, ρ_R1)` pairs, row-major with `β₁` varying slowest.
pub fn surface_values(delta1: f64, delta2: f64, kappa: f64, extent: f64, steps: usize) -> Result<Vec<f64>> {
    let params = Penalty2DParams::new(delta1, delta2, kappa)?;
    let points = penalty_surface(&params, extent, steps)?;
    Ok(points.iter().flat_map(|pt| [pt.rho_mc_plus, pt.rho_r1]).collect())
}

pub fn point_values(beta1: f64, beta2: f64, delta1: f64, delta2: f64, kappa: f64) -> Result<Value> {
    let params = Penalty2DParams::new(delta1, delta2, kappa)?;
    let beta = [beta1, beta2];
    Ok(json!({
        "quad": params.quad(beta),
        "rho_mc_plus": rho_mc_plus_2d(beta, &params),
        "rho_r1": rho_r1_2d(beta, &params),
        "branch": rho_r1_branch(beta, &params),
    }))
}

pub fn synthetic_text(n: usize, p: usize, s: usize, rho: f64, snr: f64, seed: u64) -> Result<String> {
    if p > MAX_P {
        return Err(Error::InvalidArgument(format!("the demo accepts at most {MAX_P} features")));
    }
    let data = generate(&SyntheticSpec { n, p, s, rho, snr, seed })?;
    let mut buf = Vec::new();
    data.train.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn parse(csv: &str) -> Result<RegressionInstance> {
    let inst = RegressionInstance::from_csv_str(csv, &ResponseColumn::Last)?.standardize()?;
    if inst.p() > MAX_P {
        return Err(Error::InvalidArgument(format!("the demo accepts at most {MAX_P} features, got {}", inst.p())));
    }
    Ok(inst)
}

/// Relaxation bound, rounded solution and, when cheap, the exact optimum.
pub fn bound_report(csv: &str, kind: &str, lambda: f64, mu: f64, k: usize) -> Result<Value> {
    let inst = parse(csv)?;
    let hyper = HyperParams::new(lambda, mu, k);
    hyper.validate(inst.p())?;
    let spec = RelaxationSpec::new(kind.parse::<RelaxationKind>()?, hyper);
    let opts = SolveOptions { tol: 1e-7, ..SolveOptions::default() };
    let sol = solve_relaxation(&inst, spec, &opts)?;
    let cert = BoundCertificate::from_solution(&sol, &inst, None)?;
    let optimum = if binomial(inst.p(), k) <= MAX_ENUMERATED {
        let bf = brute_force_opt(&inst, &hyper)?;
        json!({ "nu": bf.nu, "support": bf.support })
    } else {
        Value::Null
    };
    Ok(json!({
        "n": inst.n(),
        "p": inst.p(),
        "columns": inst.column_names,
        "certificate": cert,
        "z": sol.z,
        "iterations": sol.iterations,
        "optimum": optimum,
    }))
}

pub fn dominance_value(csv: &str, lambda: f64) -> Result<f64> {
    let inst = parse(csv)?;
    diagonal_dominance(&gram(&inst, lambda))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn penalty_surface_values(delta1: f64, delta2: f64, kappa: f64, extent: f64, steps: usize) -> std::result::Result<Vec<f64>, JsError> {
    surface_values(delta1, delta2, kappa, extent, steps).map_err(js)
}

#[wasm_bindgen]
pub fn penalty_point(beta1: f64, beta2: f64, delta1: f64, delta2: f64, kappa: f64) -> std::result::Result<String, JsError> {
    point_values(beta1, beta2, delta1, delta2, kappa).map(|v| v.to_string()).map_err(js)
}

#[wasm_bindgen]
pub fn synthetic_csv(n: usize, p: usize, s: usize, rho: f64, snr: f64, seed: u32) -> std::result::Result<String, JsError> {
    synthetic_text(n, p, s, rho, snr, seed as u64).map_err(js)
}

#[wasm_bindgen]
pub fn relaxation_bound(csv: &str, kind: &str, lambda: f64, mu: f64, k: usize) -> std::result::Result<String, JsError> {
    bound_report(csv, kind, lambda, mu, k).map(|v| v.to_string()).map_err(js)
}

#[wasm_bindgen]
pub fn diagonal_dominance_percent(csv: &str, lambda: f64) -> std::result::Result<f64, JsError> {
    dominance_value(csv, lambda).map(|v| 100.0 * v).map_err(js)
}
