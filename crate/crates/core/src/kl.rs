//! Per-sample divergence metrics.
//!
//! With `s_t = a·⟨v_t, v_i⟩` over a reference set of the other modality:
//!
//! ```text
//! D_KL(i)  = Σ_t softmax(s)_t · s_t − log( (1/|D|) Σ_t e^{s_t} )      = KL(p(·|i) ‖ p(·))
//! D_KLR(i) = log( (1/|D|) Σ_t e^{s_t} ) − (1/|D|) Σ_t s_t              = KL(p(·) ‖ p(·|i))
//! ```
//!
//! The second-order (exponential-family) approximations use reference moments:
//!
//! ```text
//! D_C(i) = a² ‖v_i − v̂_I‖²
//! D_W(i) = a² (v_i − v̂_I)ᵀ Ĝ_T (v_i − v̂_I)
//! ```
//!
//! and the same with modalities swapped for text queries. Covariances use the
//! biased `1/n` estimator.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Modality};
use crate::error::{Error, Result};
use crate::metric::{MetricKind, MetricVector};
use crate::par;
use crate::ratio::ScoreModel;
use crate::stats;

/// Information gain from raw scores against a uniform empirical marginal.
pub fn d_kl_from_scores(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut t) = (0.0, 0.0);
    for &s in scores {
        let c = s - m;
        let e = c.exp();
        z += e;
        t += c * e;
    }
    t / z - (z / scores.len() as f64).ln()
}

/// Reverse divergence from raw scores; nonnegative by Jensen.
pub fn d_klr_from_scores(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut c_sum) = (0.0, 0.0);
    for &s in scores {
        let c = s - m;
        z += c.exp();
        c_sum += c;
    }
    let n = scores.len() as f64;
    (z / n).ln() - c_sum / n
}

/// Scores whose reference rows carry multiplicities (bootstrap resamples).
///
/// `shifted[t] = s_t − m` and `expd[t] = e^{shifted[t]}` are precomputed so
/// that many weight vectors can be evaluated cheaply against one query.
#[derive(Debug, Clone)]
pub struct ShiftedScores {
    pub shifted: Vec<f64>,
    pub expd: Vec<f64>,
}

impl ShiftedScores {
    pub fn new(scores: &[f64]) -> Self {
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = scores.iter().map(|s| s - m).collect();
        let expd = shifted.iter().map(|c| c.exp()).collect();
        Self { shifted, expd }
    }

    /// `(D_KL, D_KLR)` with reference multiplicities `weights` (Σ weights > 0).
    ///
    /// Only valid when the score range is below ~700 so that no present term
    /// underflows relative to the shared maximum.
    pub fn weighted(&self, weights: &[f64]) -> (f64, f64) {
        let (mut z, mut t, mut c_sum, mut n) = (0.0, 0.0, 0.0, 0.0);
        for ((&w, &c), &e) in weights.iter().zip(&self.shifted).zip(&self.expd) {
            if w == 0.0 {
                continue;
            }
            let we = w * e;
            z += we;
            t += we * c;
            c_sum += w * c;
            n += w;
        }
        let log_mean_z = (z / n).ln();
        (t / z - log_mean_z, log_mean_z - c_sum / n)
    }
}

fn check_query(query: ArrayView1<f64>, refs: &EmbeddingMatrix) -> Result<()> {
    if query.len() != refs.dim() {
        return Err(Error::contract(format!(
            "query dimension {} != reference dimension {}",
            query.len(),
            refs.dim()
        )));
    }
    Ok(())
}

fn scores_against(query: ArrayView1<f64>, refs: &EmbeddingMatrix, model: &ScoreModel) -> Vec<f64> {
    refs.rows()
        .dot(&query)
        .iter()
        .map(|&d| model.logit_scale * d)
        .collect()
}

/// `D_KL` of one query against a reference set of the other modality.
///
/// Scores are `a·⟨·,·⟩` without bias; an additive bias cancels in both terms.
pub fn d_kl(query: ArrayView1<f64>, refs: &EmbeddingMatrix, model: &ScoreModel) -> Result<f64> {
    check_query(query, refs)?;
    Ok(d_kl_from_scores(&scores_against(query, refs, model)))
}

/// `D_KLR` of one query against a reference set of the other modality.
pub fn d_klr(query: ArrayView1<f64>, refs: &EmbeddingMatrix, model: &ScoreModel) -> Result<f64> {
    check_query(query, refs)?;
    Ok(d_klr_from_scores(&scores_against(query, refs, model)))
}

/// Means and covariances of text and image reference sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean_text: Array1<f64>,
    pub mean_image: Array1<f64>,
    pub cov_text: Array2<f64>,
    pub cov_image: Array2<f64>,
    pub count_text: usize,
    pub count_image: usize,
}

/// Weighted mean and biased covariance of the rows of `x`.
pub fn weighted_moments(x: ndarray::ArrayView2<f64>, weights: Option<&[f64]>) -> (Array1<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    let mut mean = Array1::<f64>::zeros(d);
    for (row, &wi) in x.outer_iter().zip(&w) {
        if wi != 0.0 {
            mean.scaled_add(wi, &row);
        }
    }
    mean /= total;
    let mut centered = x.to_owned();
    for (mut row, &wi) in centered.outer_iter_mut().zip(&w) {
        row -= &mean;
        row *= wi.sqrt();
    }
    let mut cov = centered.t().dot(&centered) / total;
    // enforce exact symmetry
    let t = cov.t().to_owned();
    cov = (&cov + &t) * 0.5;
    (mean, cov)
}

impl MomentSummary {
    pub fn new(texts: &EmbeddingMatrix, images: &EmbeddingMatrix) -> Result<Self> {
        Self::weighted(texts, images, None, None)
    }

    /// Moments with optional per-row multiplicities for each side.
    pub fn weighted(
        texts: &EmbeddingMatrix,
        images: &EmbeddingMatrix,
        text_weights: Option<&[f64]>,
        image_weights: Option<&[f64]>,
    ) -> Result<Self> {
        if texts.dim() != images.dim() {
            return Err(Error::contract(format!(
                "text dimension {} != image dimension {}",
                texts.dim(),
                images.dim()
            )));
        }
        let (mean_text, cov_text) = weighted_moments(texts.rows(), text_weights);
        let (mean_image, cov_image) = weighted_moments(images.rows(), image_weights);
        Ok(Self {
            mean_text,
            mean_image,
            cov_text,
            cov_image,
            count_text: texts.n(),
            count_image: images.n(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_text.len()
    }

    pub fn mean(&self, modality: Modality) -> &Array1<f64> {
        match modality {
            Modality::Image => &self.mean_image,
            Modality::Text => &self.mean_text,
        }
    }

    pub fn cov(&self, modality: Modality) -> &Array2<f64> {
        match modality {
            Modality::Image => &self.cov_image,
            Modality::Text => &self.cov_text,
        }
    }
}

fn check_summary(query: ArrayView1<f64>, summary: &MomentSummary) -> Result<()> {
    if query.len() != summary.dim() {
        return Err(Error::contract(format!(
            "query dimension {} != summary dimension {}",
            query.len(),
            summary.dim()
        )));
    }
    Ok(())
}

/// `a²·‖query − v̂‖²` with the mean of the query's own modality.
pub fn d_c(
    query: ArrayView1<f64>,
    summary: &MomentSummary,
    modality: Modality,
    scale: f64,
) -> Result<f64> {
    check_summary(query, summary)?;
    let diff = &query - summary.mean(modality);
    Ok(scale * scale * diff.dot(&diff))
}

/// `a²·(query − v̂)ᵀ Ĝ (query − v̂)` with the query-modality mean and the
/// other modality's covariance.
pub fn d_w(
    query: ArrayView1<f64>,
    summary: &MomentSummary,
    modality: Modality,
    scale: f64,
) -> Result<f64> {
    check_summary(query, summary)?;
    let diff = &query - summary.mean(modality);
    let g = summary.cov(modality.other());
    Ok(scale * scale * diff.dot(&g.dot(&diff)))
}

/// Mean cosine similarity of each row to every other row.
pub fn conformity(m: &EmbeddingMatrix) -> Result<MetricVector> {
    let n = m.n();
    if n < 2 {
        return Err(Error::contract("conformity needs at least two samples"));
    }
    let rows = m.rows();
    let norms: Vec<f64> = rows.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut unit = rows.to_owned();
    for (mut r, &nr) in unit.outer_iter_mut().zip(&norms) {
        if nr == 0.0 {
            return Err(Error::data("zero-norm row in conformity"));
        }
        r /= nr;
    }
    let total = unit.sum_axis(Axis(0));
    let values = unit
        .outer_iter()
        .map(|r| (r.dot(&total) - r.dot(&r)) / (n - 1) as f64)
        .collect();
    MetricVector::new(m.ids().to_vec(), values, MetricKind::Conformity, m.modality())
}

/// Which reference sets a metric reads.
///
/// `other` is the opposite modality (scores for `D_KL`/`D_KLR`, covariance for
/// `D_W`); `same` supplies the mean for `D_C`/`D_W`.
#[derive(Debug, Clone, Copy)]
pub struct References<'a> {
    pub other: &'a EmbeddingMatrix,
    pub same: &'a EmbeddingMatrix,
}

impl<'a> References<'a> {
    pub fn summary(&self, query_modality: Modality) -> Result<MomentSummary> {
        match query_modality {
            Modality::Image => MomentSummary::new(self.other, self.same),
            Modality::Text => MomentSummary::new(self.same, self.other),
        }
    }
}

/// Evaluate one divergence metric for every query row.
pub fn compute_metric(
    kind: MetricKind,
    queries: &EmbeddingMatrix,
    refs: References<'_>,
    model: &ScoreModel,
) -> Result<MetricVector> {
    if refs.other.n() == 0 || refs.same.n() == 0 {
        return Err(Error::contract("reference set is empty"));
    }
    if queries.dim() != refs.other.dim() || queries.dim() != refs.same.dim() {
        return Err(Error::contract("queries and references differ in dimension"));
    }
    let modality = queries.modality();
    let a = model.logit_scale;
    let values: Vec<f64> = match kind {
        MetricKind::DKl | MetricKind::DKlr => {
            let scores = queries.rows().dot(&refs.other.rows().t()) * a;
            par::map_range(queries.n(), |q| {
                let row = scores.row(q);
                let row = row.as_slice().expect("standard layout");
                if kind == MetricKind::DKl {
                    d_kl_from_scores(row)
                } else {
                    d_klr_from_scores(row)
                }
            })
        }
        MetricKind::DC | MetricKind::DW => {
            let summary = refs.summary(modality)?;
            par::map_range(queries.n(), |q| {
                let v = queries.row(q);
                if kind == MetricKind::DC {
                    d_c(v, &summary, modality, a)
                } else {
                    d_w(v, &summary, modality, a)
                }
                .expect("dimensions checked above")
            })
        }
        other => {
            return Err(Error::contract(format!(
                "{other} is not a reference-based divergence"
            )))
        }
    };
    Ok(
        MetricVector::new(queries.ids().to_vec(), values, kind, modality)?
            .with_param("logit_scale", a)
            .with_param("refs_other_n", refs.other.n())
            .with_param("refs_same_n", refs.same.n()),
    )
}

/// Symmetric Pearson matrix with metric labels; `None` marks undefined entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a][b]
    }
}

/// Pairwise Pearson correlations of metrics sharing one ID list.
pub fn metric_correlations(metrics: &[MetricVector]) -> Result<CorrelationMatrix> {
    if let Some(first) = metrics.first() {
        for m in &metrics[1..] {
            if m.ids != first.ids {
                return Err(Error::contract(format!(
                    "metric {} does not share the ID order of {}",
                    m.kind, first.kind
                )));
            }
        }
    }
    let k = metrics.len();
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let r = if a == b {
                stats::pearson(&metrics[a].values, &metrics[a].values).map(|_| 1.0)
            } else {
                stats::pearson(&metrics[a].values, &metrics[b].values)
            };
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    let labels = metrics
        .iter()
        .map(|m| format!("{}:{}", m.kind, m.modality))
        .collect();
    Ok(CorrelationMatrix { labels, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, d: usize, seed: u64, modality: Modality) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        EmbeddingMatrix::from_rows(rows, modality).unwrap().normalize().unwrap()
    }

    /// Exact KL between the finite distributions p(t|i) ∝ e^{s_t}/n and uniform p(t).
    fn discrete_kl(scores: &[f64]) -> f64 {
        let n = scores.len() as f64;
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter()
            .map(|wi| {
                let p = wi / z;
                if p == 0.0 {
                    0.0
                } else {
                    p * (p / (1.0 / n)).ln()
                }
            })
            .sum()
    }

    fn discrete_klr(scores: &[f64]) -> f64 {
        let n = scores.len() as f64;
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|wi| (1.0 / n) * ((1.0 / n) / (wi / z)).ln()).sum()
    }

    #[test]
    fn two_point_values() {
        let s = [0.0, 3f64.ln()];
        let kl = d_kl_from_scores(&s);
        assert!((kl - 0.130812035941137).abs() < 1e-12, "{kl}");
        assert!((kl - discrete_kl(&s)).abs() < 1e-15);
        let klr = d_klr_from_scores(&s);
        assert!((klr - 0.143841036225890).abs() < 1e-12, "{klr}");
        assert!((klr - discrete_klr(&s)).abs() < 1e-15);
    }

    #[test]
    fn equal_scores_give_zero() {
        let s = [4.2; 7];
        assert_eq!(d_klr_from_scores(&s), 0.0);
        assert_eq!(d_kl_from_scores(&s), 0.0);
    }

    #[test]
    fn identical_refs_zero_via_embeddings() {
        let refs = EmbeddingMatrix::from_rows(array![[0.6, 0.8], [0.6, 0.8], [0.6, 0.8]], Modality::Text)
            .unwrap();
        let model = ScoreModel::softmax(100.0).unwrap();
        let q = array![1.0, 0.0];
        assert_eq!(d_kl(q.view(), &refs, &model).unwrap(), 0.0);
        assert_eq!(d_klr(q.view(), &refs, &model).unwrap(), 0.0);
        assert!(d_kl(array![1.0].view(), &refs, &model).unwrap_err().is_contract());
    }

    #[test]
    fn weighted_matches_repeated_rows() {
        let s = [0.3, -1.0, 2.5, 0.0];
        let w = [2.0, 0.0, 1.0, 3.0];
        let repeated = [0.3, 0.3, 2.5, 0.0, 0.0, 0.0];
        let (kl, klr) = ShiftedScores::new(&s).weighted(&w);
        assert!((kl - d_kl_from_scores(&repeated)).abs() < 1e-14);
        assert!((klr - d_klr_from_scores(&repeated)).abs() < 1e-14);
    }

    #[test]
    fn d_c_zero_at_mean_and_scales_quadratically() {
        let texts = unit(20, 4, 1, Modality::Text);
        let images = unit(20, 4, 2, Modality::Image);
        let s = MomentSummary::new(&texts, &images).unwrap();
        let mean = s.mean_image.clone();
        assert_eq!(d_c(mean.view(), &s, Modality::Image, 7.0).unwrap(), 0.0);
        assert_eq!(d_w(mean.view(), &s, Modality::Image, 7.0).unwrap(), 0.0);
        let q = images.row(3);
        let one = d_c(q, &s, Modality::Image, 3.0).unwrap();
        let two = d_c(q, &s, Modality::Image, 6.0).unwrap();
        assert!((two - 4.0 * one).abs() < 1e-12 * two);
    }

    #[test]
    fn d_w_identity_cov_reduces_to_d_c() {
        let texts = unit(10, 3, 4, Modality::Text);
        let images = unit(10, 3, 5, Modality::Image);
        let mut s = MomentSummary::new(&texts, &images).unwrap();
        s.cov_text = Array2::eye(3);
        for q in images.rows().outer_iter() {
            let w = d_w(q, &s, Modality::Image, 2.5).unwrap();
            let c = d_c(q, &s, Modality::Image, 2.5).unwrap();
            assert!((w - c).abs() < 1e-12);
        }
    }

    #[test]
    fn d_w_matches_double_loop() {
        let texts = unit(200, 16, 6, Modality::Text);
        let images = unit(200, 16, 7, Modality::Image);
        let s = MomentSummary::new(&texts, &images).unwrap();
        // brute-force moments and quadratic form
        let d = 16;
        let n = 200.0;
        let mut mt = vec![0.0; d];
        let mut mi = vec![0.0; d];
        for k in 0..200 {
            for j in 0..d {
                mt[j] += texts.row(k)[j] / n;
                mi[j] += images.row(k)[j] / n;
            }
        }
        let mut g = vec![vec![0.0; d]; d];
        for k in 0..200 {
            for a in 0..d {
                for b in 0..d {
                    g[a][b] += (texts.row(k)[a] - mt[a]) * (texts.row(k)[b] - mt[b]) / n;
                }
            }
        }
        for q in 0..20 {
            let v = images.row(q);
            let mut brute = 0.0;
            for a in 0..d {
                for b in 0..d {
                    brute += (v[a] - mi[a]) * g[a][b] * (v[b] - mi[b]);
                }
            }
            brute *= 100.0;
            let got = d_w(v, &s, Modality::Image, 10.0).unwrap();
            assert!((got - brute).abs() <= 1e-9 * brute.abs().max(1e-300), "{got} vs {brute}");
        }
    }

    #[test]
    fn covariance_symmetric_and_psd() {
        let texts = unit(50, 8, 9, Modality::Text);
        let images = unit(30, 8, 10, Modality::Image);
        let s = MomentSummary::new(&texts, &images).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for g in [&s.cov_text, &s.cov_image] {
            for a in 0..8 {
                for b in 0..8 {
                    assert!((g[[a, b]] - g[[b, a]]).abs() <= 1e-12);
                }
            }
            for _ in 0..100 {
                let p = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));
                assert!(p.dot(&g.dot(&p)) >= -1e-8);
            }
        }
    }

    #[test]
    fn conformity_cases() {
        let m = EmbeddingMatrix::from_rows(array![[1.0, 0.0], [1.0, 0.0]], Modality::Image).unwrap();
        let c = conformity(&m).unwrap();
        assert!(c.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let m = EmbeddingMatrix::from_rows(array![[1.0, 0.0], [0.0, 1.0]], Modality::Image).unwrap();
        assert_eq!(conformity(&m).unwrap().values, vec![0.0, 0.0]);
        let m = EmbeddingMatrix::from_rows(array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], Modality::Image)
            .unwrap();
        let c = conformity(&m).unwrap().values;
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15 && c[2].abs() < 1e-15);
        let one = EmbeddingMatrix::from_rows(array![[1.0, 0.0]], Modality::Image).unwrap();
        assert!(conformity(&one).unwrap_err().is_contract());
    }

    #[test]
    fn correlations_shape_and_undefined() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let a = MetricVector::new(ids.clone(), vec![1.0, 2.0, 3.0, 5.0, 8.0], MetricKind::DC, Modality::Image)
            .unwrap();
        let b = MetricVector::new(
            ids.clone(),
            a.values.iter().map(|v| 2.0 - 3.0 * v).collect(),
            MetricKind::Conformity,
            Modality::Image,
        )
        .unwrap();
        let c = MetricVector::new(ids, vec![1.0; 5], MetricKind::DKl, Modality::Image).unwrap();
        let m = metric_correlations(&[a, b, c]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert!((m.get(0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_eq!(m.get(2, 2), None);
        assert_eq!(m.get(0, 2), None);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("null"));
    }

    #[test]
    fn d_c_and_conformity_are_affine() {
        let images = unit(150, 6, 12, Modality::Image);
        let texts = unit(150, 6, 13, Modality::Text);
        let model = ScoreModel::softmax(100.0).unwrap();
        let dc = compute_metric(
            MetricKind::DC,
            &images,
            References { other: &texts, same: &images },
            &model,
        )
        .unwrap();
        let conf = conformity(&images).unwrap();
        let r = stats::pearson(&dc.values, &conf.values).unwrap();
        assert!((r + 1.0).abs() < 1e-6, "{r}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(200))]
        #[test]
        fn kl_matches_discrete_oracle_and_is_permutation_invariant(
            scores in proptest::collection::vec(-30.0f64..30.0, 1..40),
            rot in 0usize..40,
        ) {
            let kl = d_kl_from_scores(&scores);
            proptest::prop_assert!((kl - discrete_kl(&scores)).abs() < 1e-12);
            let klr = d_klr_from_scores(&scores);
            proptest::prop_assert!(klr >= -1e-9);
            let mut permuted = scores.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.reverse();
            proptest::prop_assert!((d_kl_from_scores(&permuted) - kl).abs() < 1e-12);
            proptest::prop_assert!((d_klr_from_scores(&permuted) - klr).abs() < 1e-12);
        }

        #[test]
        fn d_c_ranking_invariant_under_scale(seed in 0u64..500, c in 0.1f64..20.0) {
            let images = unit(25, 5, seed, Modality::Image);
            let texts = unit(25, 5, seed + 7, Modality::Text);
            let refs = References { other: &texts, same: &images };
            let a = compute_metric(MetricKind::DC, &images, refs, &ScoreModel::softmax(2.0).unwrap()).unwrap();
            let b = compute_metric(MetricKind::DC, &images, refs, &ScoreModel::softmax(2.0 * c).unwrap()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                proptest::prop_assert!((y - c * c * x).abs() <= 1e-9 * y.abs().max(1e-12));
            }
            let order = |v: &[f64]| {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&p, &q| v[p].total_cmp(&v[q]));
                idx
            };
            proptest::prop_assert_eq!(order(&a.values), order(&b.values));
        }
    }
}
