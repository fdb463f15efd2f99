//! WebAssembly bindings for the browser demo. Each entry point takes and
//! returns JSON text so the page can stay plain JavaScript.

use qvar_core::convexity_lab::{polyconvexity_certificate, rank_one_min};
use qvar_core::equiint::{biting_truncations, SampledFunctionSeq, TailSchedule};
use qvar_core::integrands::QuadraticIntegrand;
use qvar_core::qspace::{metric_g, optimal_matching, QPoint};
use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
struct MetricInput {
    t1: Vec<Vec<f64>>,
    t2: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct FormInput {
    m: usize,
    n: usize,
    matrix: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct SpikeInput {
    levels: u32,
    #[serde(default)]
    c: Option<f64>,
}

fn qpoint(pts: &[Vec<f64>]) -> Result<QPoint, String> {
    let n = pts.first().map(Vec::len).ok_or("empty Q-point")?;
    QPoint::new(n, pts).map_err(|e| e.to_string())
}

/// `{"t1": [[..], ..], "t2": [[..], ..]}` to the distance and an optimal matching.
pub fn metric_json(input: &str) -> Result<String, String> {
    let inp: MetricInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let (a, b) = (qpoint(&inp.t1)?, qpoint(&inp.t2)?);
    let g = metric_g(&a, &b).map_err(|e| e.to_string())?;
    let (matching, _) = optimal_matching(&a, &b).map_err(|e| e.to_string())?;
    Ok(json!({ "G": g, "matching": matching }).to_string())
}

/// Rank-one minimum and polyconvexity certificate of a quadratic form.
pub fn rank_one_json(input: &str) -> Result<String, String> {
    let inp: FormInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let f = QuadraticIntegrand::from_rows(inp.m, inp.n, &inp.matrix).map_err(|e| e.to_string())?;
    let r1 = rank_one_min(&f);
    let cert = polyconvexity_certificate(&f);
    Ok(json!({ "rank_one_min": r1, "polyconvexity": cert }).to_string())
}

/// Biting truncations of the spike family `g_k = k·1_{[0,1/k]}`, `k = 2^e`.
pub fn spikes_json(input: &str) -> Result<String, String> {
    let inp: SpikeInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    if inp.levels > 16 {
        return Err("levels must be at most 16".into());
    }
    let cells = 1usize << inp.levels;
    let samples = (0..=inp.levels)
        .map(|e| {
            let k = 1usize << e;
            (0..cells).map(|c| if c < cells / k { k as f64 } else { 0.0 }).collect()
        })
        .collect();
    let seq = SampledFunctionSeq::new(1.0, samples, 1.0).map_err(|e| e.to_string())?;
    let schedule = match inp.c {
        Some(c) => TailSchedule { c },
        None => TailSchedule::calibrated(&seq),
    };
    let rep = biting_truncations(&seq, schedule).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&rep).map_err(|e| e.to_string())?)
}

#[wasm_bindgen]
pub fn metric(input: &str) -> Result<String, JsValue> {
    metric_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rank_one(input: &str) -> Result<String, JsValue> {
    rank_one_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn spikes(input: &str) -> Result<String, JsValue> {
    spikes_json(input).map_err(|e| JsValue::from_str(&e))
}
