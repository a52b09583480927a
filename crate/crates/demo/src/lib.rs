//! Browser bindings: simulate-and-estimate, error bounds, and `c_{α,s}`.
//! Every entry point takes and returns JSON strings so the page stays plain JS.

use arrival_mle::basis::{gram_summary, BasisSpec, PreparedBasis};
use arrival_mle::bounds::{c_alpha_s, theorem_bound};
use arrival_mle::likelihood::{LikelihoodContext, Observations, Regularization};
use arrival_mle::process::{sample_arrivals, RngSeed};
use arrival_mle::solver::{estimate_mle, ConstraintSet, SolveOptions};
use serde_json::json;
use wasm_bindgen::prelude::*;

const CURVE_POINTS: usize = 200;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_coeffs(text: &str, spec: &BasisSpec) -> Result<Vec<f64>, JsError> {
    let x: Vec<f64> = serde_json::from_str(text).map_err(|e| fail(format!("coefficients: {e}")))?;
    if x.len() != spec.n() {
        return Err(fail(format!(
            "expected {} coefficients, got {}",
            spec.n(),
            x.len()
        )));
    }
    Ok(x)
}

/// Samples arrivals from the model at `coeffs`, fits the MLE, and returns
/// events, estimate, and both intensity curves on a uniform grid.
#[wasm_bindgen]
pub fn simulate_and_estimate(
    model: &str,
    coeffs: &str,
    seed: u64,
    nonneg: bool,
) -> Result<String, JsError> {
    let spec = BasisSpec::from_json(model).map_err(fail)?;
    let x_bar = parse_coeffs(coeffs, &spec)?;
    let events = sample_arrivals(&spec, &x_bar, None, RngSeed::new(seed)).map_err(fail)?;
    let basis = PreparedBasis::new(spec.clone()).map_err(fail)?;
    let ctx = LikelihoodContext::new(&basis, Observations::Events(&events), Regularization::None)
        .map_err(fail)?;
    let constraints = ConstraintSet {
        nonnegative: nonneg,
        ..ConstraintSet::default()
    };
    let r = estimate_mle(&ctx, &constraints, None, &SolveOptions::default()).map_err(fail)?;
    let grid = spec.domain.grid(CURVE_POINTS);
    let curve = |x: &[f64]| -> Result<Vec<f64>, JsError> {
        grid.iter()
            .map(|&t| spec.eval_intensity(x, t).map_err(fail))
            .collect()
    };
    let error = r
        .x_hat
        .iter()
        .zip(&x_bar)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(json!({
        "events": events.coordinates(),
        "x_hat": r.x_hat,
        "nll": r.nll_value,
        "converged": r.converged,
        "iterations": r.iterations,
        "error": error,
        "grid": grid,
        "true_intensity": curve(&x_bar)?,
        "estimated_intensity": curve(&r.x_hat)?,
    })
    .to_string())
}

/// Full-support error bound for the model given intensity range and `ζ`.
#[wasm_bindgen]
pub fn error_bound(model: &str, r_min: f64, r_max: f64, zeta: f64) -> Result<String, JsError> {
    let spec = BasisSpec::from_json(model).map_err(fail)?;
    let summary = gram_summary(&spec, None).map_err(fail)?;
    let report = theorem_bound(&summary, r_min, r_max, zeta, None).map_err(fail)?;
    serde_json::to_string(&json!({
        "report": report,
        "trace": summary.trace,
        "sigma_min": summary.sigma_min,
        "sup_norm_2inf": summary.sup_norm_2inf,
    }))
    .map_err(fail)
}

/// The constant `c_{α,s}`; pass `Infinity` for the limit.
#[wasm_bindgen]
pub fn bound_constant(alpha: f64, s: usize) -> Result<f64, JsError> {
    c_alpha_s(alpha, s).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{"domain": {"lower": 0, "upper": 1}, "offset": {"kind": "constant", "value": 5},
        "elements": [{"kind": "gaussian", "center": 0.25, "width": 0.1}, {"kind": "gaussian", "center": 0.75, "width": 0.1}]}"#;

    #[test]
    fn simulate_and_estimate_round_trips() {
        let out: serde_json::Value =
            serde_json::from_str(&simulate_and_estimate(MODEL, "[80, 40]", 7, true).unwrap())
                .unwrap();
        assert_eq!(out["converged"], true);
        assert_eq!(out["x_hat"].as_array().unwrap().len(), 2);
        assert_eq!(out["grid"].as_array().unwrap().len(), CURVE_POINTS);
        let a = simulate_and_estimate(MODEL, "[80, 40]", 7, true).unwrap();
        let b = simulate_and_estimate(MODEL, "[80, 40]", 7, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_bound_reports_probability() {
        let out: serde_json::Value =
            serde_json::from_str(&error_bound(MODEL, 5.0, 90.0, 3.0).unwrap()).unwrap();
        let p = out["report"]["probability"].as_f64().unwrap();
        assert!((p - (1.0 - 5.0 * (-3.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn bound_constant_limit() {
        assert!(
            (bound_constant(f64::INFINITY, 1).unwrap() - 10.0 * 2f64.sqrt() / 3.0).abs() < 1e-12
        );
    }
}
