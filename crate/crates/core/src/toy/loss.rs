//! Batch contrastive losses on unit embeddings, with gradients.
//!
//! Both losses take per-pair weights `w_j`. With all weights equal to one they
//! are the usual symmetric softmax loss and the pairwise sigmoid loss.
//!
//! | flavor  | per-pair term |
//! |---------|---------------|
//! | softmax | `w_j (lse_k S[j,k] − S[j,j] + lse_k S[k,j] − S[j,j])` |
//! | sigmoid | `w_j Σ_k softplus(−y_jk S[j,k])`, `y = ±1` |
//!
//! `S[j,k] = a⟨image_j, text_k⟩ (+ b for sigmoid)`; the loss is the mean over `j`.

use ndarray::{Array1, Array2, Axis};

use crate::ratio::Flavor;

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_images: Array2<f64>,
    pub d_texts: Array2<f64>,
    pub d_log_scale: f64,
    pub d_bias: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(s: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut p = s.clone();
    let mut lse = Array1::zeros(s.nrows());
    for (mut row, l) in p.outer_iter_mut().zip(lse.iter_mut()) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
        *l = m + z.ln();
    }
    (p, lse)
}

/// Loss and gradients with respect to both embedding batches, the log scale
/// and the bias. `images` and `texts` are aligned: row `j` of each is pair `j`.
pub fn contrastive(
    images: &Array2<f64>,
    texts: &Array2<f64>,
    log_scale: f64,
    bias: f64,
    flavor: Flavor,
    weights: &[f64],
) -> LossGrad {
    let n = images.nrows();
    debug_assert_eq!(weights.len(), n);
    let a = log_scale.exp();
    let dots = images.dot(&texts.t());
    let w = Array1::from(weights.to_vec());
    let inv_n = 1.0 / n as f64;
    let (loss, d_s, d_bias) = match flavor {
        Flavor::SoftmaxContrastive => {
            let s = &dots * a;
            let (p_row, lse_row) = softmax_rows(&s);
            let st = s.t().to_owned();
            let (p_col_t, lse_col) = softmax_rows(&st);
            let mut loss = 0.0;
            for j in 0..n {
                loss += w[j] * (lse_row[j] + lse_col[j] - 2.0 * s[[j, j]]);
            }
            let mut d_s = &p_row * &w.view().insert_axis(Axis(1));
            d_s += &(&p_col_t.t() * &w.view().insert_axis(Axis(0)));
            for j in 0..n {
                d_s[[j, j]] -= 2.0 * w[j];
            }
            (loss * inv_n, d_s * inv_n, 0.0)
        }
        Flavor::SigmoidContrastive => {
            let mut loss = 0.0;
            let mut d_s = Array2::zeros((n, n));
            for j in 0..n {
                for k in 0..n {
                    let s = a * dots[[j, k]] + bias;
                    let (y, target) = if j == k { (1.0, 1.0) } else { (-1.0, 0.0) };
                    loss += w[j] * softplus(-y * s);
                    d_s[[j, k]] = w[j] * (sigmoid(s) - target);
                }
            }
            let d_s = d_s * inv_n;
            let d_bias = d_s.sum();
            (loss * inv_n, d_s, d_bias)
        }
    };
    let d_images = d_s.dot(texts) * a;
    let d_texts = d_s.t().dot(images) * a;
    let d_log_scale = a * (&d_s * &dots).sum();
    LossGrad { loss, d_images, d_texts, d_log_scale, d_bias }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rows(v: Array2<f64>) -> Array2<f64> {
        let n = v.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        &v / &n.insert_axis(Axis(1))
    }

    #[test]
    fn softmax_loss_at_uniform_scores() {
        // identical embeddings everywhere → every softmax uniform
        let e = unit_rows(Array2::ones((6, 3)));
        let g = contrastive(&e, &e, 0.0, 0.0, Flavor::SoftmaxContrastive, &[1.0; 6]);
        assert!((g.loss - 2.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_loss_oracle() {
        let imgs = unit_rows(Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let txts = unit_rows(Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        let (ls, b) = (1.5f64, -0.7);
        let g = contrastive(&imgs, &txts, ls, b, Flavor::SigmoidContrastive, &[2.0, 0.5]);
        let a = ls.exp();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = [[a * r + b, b], [a * r + b, a + b]];
        let lsp = |x: f64| (1.0 + x.exp()).ln();
        let expected = (2.0 * (lsp(-s[0][0]) + lsp(s[0][1])) + 0.5 * (lsp(s[1][0]) + lsp(-s[1][1]))) / 2.0;
        assert!((g.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn weights_scale_linearly() {
        let imgs = unit_rows(Array2::from_shape_fn((4, 3), |(i, j)| ((i * 5 + j) as f64).sin()));
        let txts = unit_rows(Array2::from_shape_fn((4, 3), |(i, j)| ((i * 7 + 2 * j) as f64).cos()));
        for flavor in [Flavor::SoftmaxContrastive, Flavor::SigmoidContrastive] {
            let one = contrastive(&imgs, &txts, 1.0, -1.0, flavor, &[1.0; 4]);
            let three = contrastive(&imgs, &txts, 1.0, -1.0, flavor, &[3.0; 4]);
            assert!((three.loss - 3.0 * one.loss).abs() < 1e-12);
            assert!((three.d_log_scale - 3.0 * one.d_log_scale).abs() < 1e-12);
        }
    }
}
