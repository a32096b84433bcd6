//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export has a plain-Rust twin returning `Result<_, String>` so the
//! logic is testable natively; the exported wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use densratio::kl;
use densratio::toy::{self, MixtureWorld, TrainConfig};
use densratio::Flavor;

fn ring(k: usize, radius: f64) -> Result<MixtureWorld, String> {
    MixtureWorld::ring(k, 2, radius, toy::world::DEFAULT_VARIANCE).map_err(|e| e.to_string())
}

/// Row-major `resolution²` grid of `p(i | t_label)/p(i)` over `[-extent, extent]²`.
pub fn true_grid(k: usize, radius: f64, label: usize, extent: f64, resolution: usize) -> Result<Vec<f64>, String> {
    let world = ring(k, radius)?;
    let grid = toy::ratio_grid(&world, None, label, extent, resolution).map_err(|e| e.to_string())?;
    Ok(grid.iter().map(|g| g.true_ratio).collect())
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
    pub losses: Vec<f64>,
    pub r2: f64,
    pub pearson: Option<f64>,
    pub logit_scale: f64,
}

/// Train a small encoder pair on the ring world and grid both ratio maps.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    flavor: &str,
    k: usize,
    radius: f64,
    steps: usize,
    seed: u64,
    label: usize,
    extent: f64,
    resolution: usize,
) -> Result<Comparison, String> {
    let world = ring(k, radius)?;
    let flavor: Flavor = flavor.parse().map_err(|e: densratio::Error| e.to_string())?;
    let cfg = TrainConfig { flavor, steps, batch: 128, seed, ..Default::default() };
    let out = toy::train(&world, &cfg, None).map_err(|e| e.to_string())?;
    let grid = toy::ratio_grid(&world, Some(&out.model), label, extent, resolution).map_err(|e| e.to_string())?;
    let report = toy::evaluate(&out.model, &world, 1000, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
    Ok(Comparison {
        truth: grid.iter().map(|g| g.true_ratio).collect(),
        predicted: grid.iter().map(|g| g.predicted_ratio.unwrap_or(f64::NAN)).collect(),
        losses: out.losses,
        r2: report.r2,
        pearson: report.pearson,
        logit_scale: report.logit_scale,
    })
}

/// `[D_KL, D_KLR]` of one query from its scores against the references.
pub fn divergences(scores: &[f64]) -> Result<[f64; 2], String> {
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err("scores must be a non-empty list of finite numbers".into());
    }
    Ok([kl::d_kl_from_scores(scores), kl::d_klr_from_scores(scores)])
}

#[wasm_bindgen(js_name = trueRatioGrid)]
pub fn true_ratio_grid(k: usize, radius: f64, label: usize, extent: f64, resolution: usize) -> Result<Vec<f64>, JsError> {
    true_grid(k, radius, label, extent, resolution).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`Comparison`].
#[wasm_bindgen(js_name = trainAndCompare)]
#[allow(clippy::too_many_arguments)]
pub fn train_and_compare(
    flavor: &str,
    k: usize,
    radius: f64,
    steps: usize,
    seed: u32,
    label: usize,
    extent: f64,
    resolution: usize,
) -> Result<String, JsError> {
    let c = compare(flavor, k, radius, steps, seed as u64, label, extent, resolution).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&c).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = scoreDivergences)]
pub fn score_divergences(scores: Vec<f64>) -> Result<Vec<f64>, JsError> {
    divergences(&scores).map(|d| d.to_vec()).map_err(|e| JsError::new(&e))
}
