//! Browser bindings: simulate a catalog scenario, detect breaks, and export
//! the contrast curve behind the slope heuristic.
//!
//! Results cross the boundary as JSON strings. The plain functions are the
//! same operations without the `wasm_bindgen` wrapper, for native callers.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use countbreaks::{
    build_ml_matrix, detect_with_matrix, dp_solve, parse_counts, scenario_library, simulate_piecewise,
    slope_heuristic, DetectionConfig, FamilyKind, MeanFamily, PenaltySpec,
};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn setup(series: &str, family: &str, penalty: PenaltySpec) -> Result<(Vec<u64>, MeanFamily, DetectionConfig), String> {
    let y = parse_counts(series).map_err(err)?;
    let kind: FamilyKind = family.parse().map_err(err)?;
    let cfg = DetectionConfig::for_length(y.len(), penalty).map_err(err)?;
    if y.len() < 2 * cfg.u_min {
        return Err(format!("series of length {} is too short: at least {} values are needed", y.len(), 2 * cfg.u_min));
    }
    Ok((y, MeanFamily::new(kind), cfg))
}

/// One integer per line.
pub fn simulate_text(scenario: &str, n: usize, seed: u64) -> Result<String, String> {
    let lib = scenario_library();
    let cfg = lib.get(&scenario.to_ascii_uppercase()).ok_or_else(|| {
        let names: Vec<&str> = lib.keys().map(String::as_str).collect();
        format!("unknown scenario '{scenario}'; available: {}", names.join(", "))
    })?;
    let y = simulate_piecewise(&cfg.clone().with_n(n).with_seed(seed)).map_err(err)?;
    Ok(y.iter().map(|v| format!("{v}\n")).collect())
}

#[derive(Serialize)]
struct SegmentOut<'a> {
    start: usize,
    end: usize,
    theta: &'a [f64],
    std_errors: Option<&'a [f64]>,
}

pub fn detect_json(series: &str, family: &str, penalty: &str) -> Result<String, String> {
    let penalty: PenaltySpec = penalty.parse().map_err(err)?;
    let (y, fam, cfg) = setup(series, family, penalty)?;
    let ml = build_ml_matrix(&y, &fam, &cfg).map_err(err)?;
    let d = detect_with_matrix(&ml, &y, &fam, &cfg).map_err(err)?;
    let seg = &d.segmentation;
    let segments: Vec<SegmentOut> = seg
        .per_segment
        .iter()
        .zip(&seg.covariances)
        .map(|(f, c)| SegmentOut {
            start: f.range.start,
            end: f.range.end,
            theta: &f.theta_hat,
            std_errors: c.as_ref().map(|c| c.std_errors.as_slice()),
        })
        .collect();
    let curve: Vec<f64> = d.min_contrast.iter().map(|c| -c).collect();
    Ok(json!({
        "n": y.len(),
        "family": fam.kind().name(),
        "k_hat": seg.k_hat,
        "breaks": seg.breaks,
        "segments": segments,
        "kappa": d.kappa,
        "penalty": d.penalty.name(),
        "neg_min_qlik": curve,
    })
    .to_string())
}

pub fn contrast_curve_json(series: &str, family: &str) -> Result<String, String> {
    let (y, fam, cfg) = setup(series, family, PenaltySpec::Slope)?;
    let ml = build_ml_matrix(&y, &fam, &cfg).map_err(err)?;
    let contrast = dp_solve(&ml, 0.0, cfg.k_max).map_err(err)?.final_costs();
    let fit = slope_heuristic(&contrast).ok();
    let curve: Vec<f64> = contrast.iter().map(|c| -c).collect();
    Ok(json!({ "k_max": cfg.k_max, "u_min": cfg.u_min, "neg_min_qlik": curve, "slope": fit }).to_string())
}

#[wasm_bindgen]
pub fn simulate(scenario: &str, n: usize, seed: u32) -> Result<String, JsError> {
    simulate_text(scenario, n, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn detect(series: &str, family: &str, penalty: &str) -> Result<String, JsError> {
    detect_json(series, family, penalty).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn contrast_curve(series: &str, family: &str) -> Result<String, JsError> {
    contrast_curve_json(series, family).map_err(|e| JsError::new(&e))
}
