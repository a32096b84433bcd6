use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::model::DualEncoder;
use super::world::MixtureWorld;
use crate::error::{Error, Result};
use crate::ratio::{Calibration, Flavor};
use crate::stats::{log_mean_exp_weighted, mse, pearson, r_squared};

/// Predicted `log p(i | t_k) / p(i)` for every image (rows) and label (columns).
///
/// `label_weights` is the label distribution over which the empirical
/// normalizer averages; it is ignored by the other calibrations.
pub fn predict_log_ratios(
    model: &DualEncoder,
    images: ArrayView2<f64>,
    calibration: Calibration,
    label_weights: &[f64],
) -> Result<Array2<f64>> {
    if images.ncols() != model.d() {
        return Err(Error::contract("image dimension does not match the model"));
    }
    if label_weights.len() != model.k {
        return Err(Error::contract("label weights must have one entry per label"));
    }
    let a = model.logit_scale();
    let mut s = model.embed_images(images).dot(&model.label_table().t()) * a;
    match calibration {
        Calibration::EmpiricalZ => {
            for mut row in s.outer_iter_mut() {
                let lz = log_mean_exp_weighted(row.as_slice().expect("standard layout"), label_weights);
                row.mapv_inplace(|v| v - lz);
            }
        }
        Calibration::NuEb => {
            let shift = model.nu.ln() + if model.flavor == Flavor::SigmoidContrastive { model.bias } else { 0.0 };
            s.mapv_inplace(|v| v + shift);
        }
        Calibration::None => {}
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_images: usize,
    pub n_predictions: usize,
    pub calibration: Calibration,
    pub r2: f64,
    pub mse: f64,
    pub pearson: Option<f64>,
    pub logit_scale: f64,
    pub bias: f64,
}

/// Compare predicted and analytic ratios over `n` fresh test images and all labels.
pub fn evaluate(model: &DualEncoder, world: &MixtureWorld, n: usize, seed: u64) -> Result<EvalReport> {
    evaluate_with(model, world, n, seed, model.flavor.default_calibration())
}

pub fn evaluate_with(
    model: &DualEncoder,
    world: &MixtureWorld,
    n: usize,
    seed: u64,
    calibration: Calibration,
) -> Result<EvalReport> {
    if model.k != world.k || model.d() != world.d {
        return Err(Error::contract("model and world disagree on k or d"));
    }
    let (labels, images) = world.sample_pairs(n, seed)?;
    let mut freq = vec![0.0; world.k];
    for &l in &labels {
        freq[l] += 1.0;
    }
    let pred = predict_log_ratios(model, images.view(), calibration, &freq)?;
    let mut truth = Vec::with_capacity(n * world.k);
    let mut predicted = Vec::with_capacity(n * world.k);
    for (r, img) in images.outer_iter().enumerate() {
        for k in 0..world.k {
            truth.push(world.log_true_ratio(img, k).exp());
            predicted.push(pred[[r, k]].exp());
        }
    }
    Ok(EvalReport {
        n_images: n,
        n_predictions: truth.len(),
        calibration,
        r2: r_squared(&truth, &predicted),
        mse: mse(&truth, &predicted),
        pearson: pearson(&truth, &predicted),
        logit_scale: model.logit_scale(),
        bias: model.bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub label: usize,
    pub true_ratio: f64,
    pub predicted_ratio: Option<f64>,
}

/// Ratios for one label over a `resolution × resolution` grid of a 2-D world.
///
/// Predictions use the world priors as the normalizing label distribution.
pub fn ratio_grid(
    world: &MixtureWorld,
    model: Option<&DualEncoder>,
    label: usize,
    extent: f64,
    resolution: usize,
) -> Result<Vec<GridPoint>> {
    if world.d != 2 {
        return Err(Error::contract("grids need a 2-D world"));
    }
    if label >= world.k || resolution < 2 || !(extent > 0.0) {
        return Err(Error::contract("grid needs a valid label, resolution ≥ 2 and extent > 0"));
    }
    let step = 2.0 * extent / (resolution - 1) as f64;
    let mut pts = Array2::zeros((resolution * resolution, 2));
    for iy in 0..resolution {
        for ix in 0..resolution {
            let r = iy * resolution + ix;
            pts[[r, 0]] = -extent + ix as f64 * step;
            pts[[r, 1]] = -extent + iy as f64 * step;
        }
    }
    let pred = match model {
        Some(m) => Some(predict_log_ratios(m, pts.view(), m.flavor.default_calibration(), &world.priors)?),
        None => None,
    };
    Ok(pts
        .outer_iter()
        .enumerate()
        .map(|(r, p)| GridPoint {
            x: p[0],
            y: p[1],
            label,
            true_ratio: world.log_true_ratio(p, label).exp(),
            predicted_ratio: pred.as_ref().map(|m| m[[r, label]].exp()),
        })
        .collect())
}

pub fn write_grid_csv<W: Write>(w: &mut W, grid: &[GridPoint]) -> Result<()> {
    writeln!(w, "x,y,label,true_ratio,predicted_ratio")?;
    for g in grid {
        let pred = g.predicted_ratio.map_or(String::new(), |p| p.to_string());
        writeln!(w, "{},{},{},{},{}", g.x, g.y, g.label, g.true_ratio, pred)?;
    }
    Ok(())
}
