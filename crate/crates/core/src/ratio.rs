//! Scores as log density ratios.
//!
//! For a softmax-contrastive model the score `a·⟨v_t, v_i⟩` equals
//! `log p(t|i)/p(t) + log Z(i)`; the per-image constant is recovered from a
//! reference text set (`EmpiricalZ`). For a sigmoid-contrastive model trained
//! with `ν` negatives per positive, the optimum satisfies `Z(i)⁻¹ = ν·e^b`
//! (`NuEb`).

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metric::{MetricKind, MetricVector};
use crate::stats::log_mean_exp;

/// Logit scale used for importance weights when none is given.
pub const DEFAULT_IWL_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// InfoNCE / CLIP: batch softmax in both directions.
    SoftmaxContrastive,
    /// NCE / SigLIP: independent logistic terms with a learned bias.
    SigmoidContrastive,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::SoftmaxContrastive => "softmax_contrastive",
            Flavor::SigmoidContrastive => "sigmoid_contrastive",
        }
    }

    pub fn default_calibration(self) -> Calibration {
        match self {
            Flavor::SoftmaxContrastive => Calibration::EmpiricalZ,
            Flavor::SigmoidContrastive => Calibration::NuEb,
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_contrastive" | "softmax" | "clip" => Ok(Flavor::SoftmaxContrastive),
            "sigmoid_contrastive" | "sigmoid" | "siglip" => Ok(Flavor::SigmoidContrastive),
            other => Err(Error::contract(format!("unknown flavor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Divide `e^score` by its mean over the provided text set.
    EmpiricalZ,
    /// Multiply `e^(a⟨·,·⟩ + b)` by `ν`.
    NuEb,
    /// Raw `e^score`.
    None,
}

impl Calibration {
    pub fn as_str(self) -> &'static str {
        match self {
            Calibration::EmpiricalZ => "empirical_z",
            Calibration::NuEb => "nu_eb",
            Calibration::None => "none",
        }
    }
}

impl std::str::FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical_z" => Ok(Calibration::EmpiricalZ),
            "nu_eb" => Ok(Calibration::NuEb),
            "none" => Ok(Calibration::None),
            other => Err(Error::contract(format!("unknown calibration {other:?}"))),
        }
    }
}

/// Turns inner products into log-ratio scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub logit_scale: f64,
    /// Ignored by the softmax flavor.
    pub logit_bias: f64,
    pub flavor: Flavor,
    /// Negatives per positive; only the sigmoid flavor uses it.
    pub nu: u32,
}

impl ScoreModel {
    pub fn softmax(logit_scale: f64) -> Result<Self> {
        Self::new(logit_scale, 0.0, Flavor::SoftmaxContrastive, 1)
    }

    pub fn sigmoid(logit_scale: f64, logit_bias: f64, nu: u32) -> Result<Self> {
        Self::new(logit_scale, logit_bias, Flavor::SigmoidContrastive, nu)
    }

    pub fn new(logit_scale: f64, logit_bias: f64, flavor: Flavor, nu: u32) -> Result<Self> {
        if !(logit_scale > 0.0 && logit_scale.is_finite()) {
            return Err(Error::contract(format!(
                "logit scale must be positive, got {logit_scale}"
            )));
        }
        if !logit_bias.is_finite() {
            return Err(Error::contract("logit bias must be finite"));
        }
        if nu == 0 {
            return Err(Error::contract("nu must be at least 1"));
        }
        Ok(Self {
            logit_scale,
            logit_bias,
            flavor,
            nu,
        })
    }

    /// The additive term applied on top of `a·⟨·,·⟩`.
    pub fn effective_bias(&self) -> f64 {
        match self.flavor {
            Flavor::SoftmaxContrastive => 0.0,
            Flavor::SigmoidContrastive => self.logit_bias,
        }
    }

    /// Score from a precomputed inner product.
    #[inline]
    pub fn score_from_dot(&self, dot: f64) -> f64 {
        self.logit_scale * dot + self.effective_bias()
    }

    /// `# key=value` lines for output headers.
    pub fn header_lines(&self) -> Vec<(String, String)> {
        vec![
            ("logit_scale".into(), self.logit_scale.to_string()),
            ("logit_bias".into(), self.logit_bias.to_string()),
            ("flavor".into(), self.flavor.as_str().into()),
            ("nu".into(), self.nu.to_string()),
        ]
    }
}

fn dot_checked(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.dot(&b))
}

/// `a·⟨v_t, v_i⟩`, plus `b` for the sigmoid flavor.
pub fn score(v_t: ArrayView1<f64>, v_i: ArrayView1<f64>, model: &ScoreModel) -> Result<f64> {
    Ok(model.score_from_dot(dot_checked(v_t, v_i)?))
}

/// Score matrix with entry `(t, i)`.
pub fn score_matrix(
    texts: &EmbeddingMatrix,
    images: &EmbeddingMatrix,
    model: &ScoreModel,
) -> Result<Array2<f64>> {
    if texts.dim() != images.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: texts {} vs images {}",
            texts.dim(),
            images.dim()
        )));
    }
    let dots = texts.rows().dot(&images.rows().t());
    Ok(dots.mapv(|d| model.score_from_dot(d)))
}

/// Log of the calibrated ratio for one column of scores.
pub fn calibrate_log_ratios(scores: &[f64], model: &ScoreModel, calibration: Calibration) -> Vec<f64> {
    match calibration {
        Calibration::EmpiricalZ => {
            let log_z = log_mean_exp(scores);
            scores.iter().map(|s| s - log_z).collect()
        }
        Calibration::NuEb => {
            // Softmax scores carry no bias; add it back so ν·e^(a⟨⟩+b) holds for both flavors.
            let extra = model.logit_bias - model.effective_bias();
            let log_nu = (model.nu as f64).ln();
            scores.iter().map(|s| s + extra + log_nu).collect()
        }
        Calibration::None => scores.to_vec(),
    }
}

/// Estimated `p(t|i)/p(t)` for every text `t` (rows) and image `i` (columns).
pub fn ratio_matrix(
    texts: &EmbeddingMatrix,
    images: &EmbeddingMatrix,
    model: &ScoreModel,
    calibration: Calibration,
) -> Result<Array2<f64>> {
    if texts.n() == 0 && calibration == Calibration::EmpiricalZ {
        return Err(Error::contract("empirical Z needs at least one text"));
    }
    let scores = score_matrix(texts, images, model)?;
    let mut out = Array2::zeros(scores.dim());
    for (col_in, mut col_out) in scores.columns().into_iter().zip(out.columns_mut()) {
        let col: Vec<f64> = col_in.to_vec();
        for (o, lr) in col_out
            .iter_mut()
            .zip(calibrate_log_ratios(&col, model, calibration))
        {
            *o = lr.exp();
        }
    }
    Ok(out)
}

/// Unnormalized importance weight `exp(a·⟨u_image, u_prompt⟩)` for covariate
/// shift towards the images a prompt describes.
pub fn iwl_weight(u_image: ArrayView1<f64>, u_prompt: ArrayView1<f64>, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::contract("importance-weight scale must be positive"));
    }
    Ok((scale * dot_checked(u_image, u_prompt)?).exp())
}

/// Importance weights for every image against one prompt embedding.
pub fn iwl_weights(
    images: &EmbeddingMatrix,
    prompt: ArrayView1<f64>,
    scale: f64,
) -> Result<MetricVector> {
    let values = (0..images.n())
        .map(|k| iwl_weight(images.row(k), prompt, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(
        MetricVector::new(images.ids().to_vec(), values, MetricKind::IwlWeight, images.modality())?
            .with_param("logit_scale", scale),
    )
}

/// Long-format ratio CSV: `text_id,image_id,value` with a parameter header.
pub fn write_ratio_csv<W: Write>(
    w: &mut W,
    texts: &EmbeddingMatrix,
    images: &EmbeddingMatrix,
    ratios: &Array2<f64>,
    model: &ScoreModel,
    calibration: Calibration,
) -> Result<()> {
    for (k, v) in model.header_lines() {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "# calibration={}", calibration.as_str())?;
    writeln!(w, "text_id,image_id,value")?;
    for (t, tid) in texts.ids().iter().enumerate() {
        for (i, iid) in images.ids().iter().enumerate() {
            writeln!(w, "{tid},{iid},{}", ratios[[t, i]])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Modality;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(n: usize, d: usize, seed: u64, modality: Modality) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        EmbeddingMatrix::from_rows(rows, modality)
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn score_identical_and_orthogonal() {
        let m = ScoreModel::softmax(10.0).unwrap();
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(score(e1.view(), e1.view(), &m).unwrap(), 10.0);
        assert_eq!(score(e1.view(), e2.view(), &m).unwrap(), 0.0);
        let s = ScoreModel::sigmoid(10.0, -3.0, 7).unwrap();
        assert_eq!(score(e1.view(), e1.view(), &s).unwrap(), 7.0);
        assert!(score(e1.view(), array![1.0, 0.0, 0.0].view(), &m)
            .unwrap_err()
            .is_contract());
    }

    #[test]
    fn softmax_ignores_bias() {
        let m = ScoreModel::new(5.0, 3.0, Flavor::SoftmaxContrastive, 1).unwrap();
        assert_eq!(m.score_from_dot(1.0), 5.0);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(ScoreModel::softmax(0.0).unwrap_err().is_contract());
        assert!(ScoreModel::softmax(-1.0).is_err());
    }

    #[test]
    fn empirical_z_uniform_and_single_text() {
        let m = ScoreModel::softmax(10.0).unwrap();
        let texts = EmbeddingMatrix::from_rows(
            array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
            Modality::Text,
        );
        // duplicate rows are fine; IDs differ
        let texts = texts.unwrap();
        let images = unit_rows(4, 2, 1, Modality::Image);
        let r = ratio_matrix(&texts, &images, &m, Calibration::EmpiricalZ).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));

        let one = unit_rows(1, 2, 2, Modality::Text);
        let r = ratio_matrix(&one, &images, &m, Calibration::EmpiricalZ).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empirical_z_columns_average_to_one_at_large_scale() {
        let m = ScoreModel::softmax(100.0).unwrap();
        let texts = unit_rows(200, 16, 3, Modality::Text);
        let images = unit_rows(30, 16, 4, Modality::Image);
        let r = ratio_matrix(&texts, &images, &m, Calibration::EmpiricalZ).unwrap();
        for col in r.columns() {
            assert!((col.mean().unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nu_eb_and_none() {
        let m = ScoreModel::sigmoid(2.0, -1.0, 4).unwrap();
        let texts = EmbeddingMatrix::from_rows(array![[1.0, 0.0]], Modality::Text).unwrap();
        let images = EmbeddingMatrix::from_rows(array![[1.0, 0.0]], Modality::Image).unwrap();
        let r = ratio_matrix(&texts, &images, &m, Calibration::NuEb).unwrap();
        assert!((r[[0, 0]] - 4.0 * (2.0f64 - 1.0).exp()).abs() < 1e-12);
        let r = ratio_matrix(&texts, &images, &m, Calibration::None).unwrap();
        assert!((r[[0, 0]] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn iwl_weight_values() {
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        let w = iwl_weight(e1.view(), e1.view(), DEFAULT_IWL_SCALE).unwrap();
        assert!((w - 22026.465794806718).abs() < 1e-9);
        assert_eq!(iwl_weight(e1.view(), e2.view(), 3.7).unwrap(), 1.0);
    }

    proptest::proptest! {
        #[test]
        fn score_symmetric_and_scale_equivariant(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            scale in 0.1f64..100.0,
            c in 0.1f64..10.0,
        ) {
            let va = ndarray::Array1::from(a);
            let vb = ndarray::Array1::from(b);
            let m = ScoreModel::softmax(scale).unwrap();
            let s1 = score(va.view(), vb.view(), &m).unwrap();
            let s2 = score(vb.view(), va.view(), &m).unwrap();
            proptest::prop_assert_eq!(s1, s2);
            let mc = ScoreModel::softmax(scale * c).unwrap();
            let s3 = score(va.view(), vb.view(), &mc).unwrap();
            proptest::prop_assert!((s3 - c * s1).abs() <= 1e-9 * (1.0 + s3.abs()));
        }

        #[test]
        fn ratio_monotone_in_inner_product(seed in 0u64..1000, scale in 0.5f64..50.0) {
            let texts = unit_rows(12, 5, seed, Modality::Text);
            let images = unit_rows(3, 5, seed + 1, Modality::Image);
            let m = ScoreModel::softmax(scale).unwrap();
            let r = ratio_matrix(&texts, &images, &m, Calibration::EmpiricalZ).unwrap();
            let dots = texts.rows().dot(&images.rows().t());
            for i in 0..3 {
                for t in 0..12 {
                    for u in 0..12 {
                        if dots[[t, i]] > dots[[u, i]] + 1e-12 {
                            proptest::prop_assert!(r[[t, i]] > r[[u, i]]);
                        }
                    }
                }
                // argmax preserved under rescaling
                let mc = ScoreModel::softmax(scale * 3.0).unwrap();
                let rc = ratio_matrix(&texts, &images, &mc, Calibration::EmpiricalZ).unwrap();
                let argmax = |m: &Array2<f64>| (0..12).max_by(|&x, &y| m[[x, i]].total_cmp(&m[[y, i]])).unwrap();
                proptest::prop_assert_eq!(argmax(&r), argmax(&rc));
            }
        }
    }
}
