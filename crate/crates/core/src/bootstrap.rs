//! Finite-sample error of the divergence estimators, by bootstrap.
//!
//! For a query `i` with full-sample estimate `D̂(i)` and resample estimates
//! `D̂(i; b)`, `b = 1..B`:
//!
//! ```text
//! Bias(i)     = mean_b D̂(i;b) − D̂(i)
//! Variance(i) = mean_b (D̂(i;b) − D̄(i))²
//! RMSE(i)     = sqrt(Variance(i) + Bias(i)²)
//! ```
//!
//! Resamples draw reference *pairs* with replacement, so text and image sides
//! share one multiplicity vector. Resample `b` uses a ChaCha8 generator seeded
//! with `seed` on stream `b`, so results do not depend on scheduling.

use std::io::Write;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, PairedCorpus};
use crate::error::{Error, Result};
use crate::kl::{self, MomentSummary, References, ShiftedScores};
use crate::metric::MetricKind;
use crate::par;
use crate::ratio::ScoreModel;
use crate::stats;

/// Generator family recorded in every report.
pub const GENERATOR: &str = "chacha8 (rand_chacha), seed_from_u64(seed), stream = resample index";

/// Per-query bootstrap error summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub ids: Vec<String>,
    /// Full-sample estimates `D̂(i)`.
    pub estimate: Vec<f64>,
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Standard deviation of `D̂(i)` across queries.
    pub scale: f64,
    pub resamples: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub metric: MetricKind,
    pub model: ScoreModel,
    pub generator: String,
    pub warnings: Vec<String>,
}

impl BootstrapReport {
    /// Aggregate a `queries × B` replicate matrix against full-sample estimates.
    pub fn aggregate(estimate: &[f64], replicates: &Array2<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let b = replicates.ncols() as f64;
        let mut bias = Vec::with_capacity(estimate.len());
        let mut variance = Vec::with_capacity(estimate.len());
        let mut rmse = Vec::with_capacity(estimate.len());
        for (row, &est) in replicates.outer_iter().zip(estimate) {
            let mean = row.sum() / b;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / b;
            let bi = mean - est;
            bias.push(bi);
            variance.push(var);
            rmse.push((var + bi * bi).sqrt());
        }
        (bias, variance, rmse)
    }

    fn over_scale(&self, x: f64, power: i32) -> f64 {
        if self.scale > 0.0 {
            x / self.scale.powi(power)
        } else {
            f64::NAN
        }
    }

    pub fn bias_over_scale(&self) -> Vec<f64> {
        self.bias.iter().map(|&b| self.over_scale(b, 1)).collect()
    }

    pub fn variance_over_scale2(&self) -> Vec<f64> {
        self.variance.iter().map(|&v| self.over_scale(v, 2)).collect()
    }

    pub fn rmse_over_scale(&self) -> Vec<f64> {
        self.rmse.iter().map(|&r| self.over_scale(r, 1)).collect()
    }

    /// JSON header describing the run.
    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({
            "B": self.resamples,
            "n": self.sample_size,
            "seed": self.seed,
            "metric": self.metric,
            "model": self.model,
            "generator": self.generator,
            "scale": self.scale,
            "warnings": self.warnings,
        })
    }

    /// CSV with a single `# {json header}` first line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# {}", self.header())?;
        writeln!(
            w,
            "id,estimate,bias,variance,rmse,bias_over_scale,var_over_scale2,rmse_over_scale"
        )?;
        let (bs, vs, rs) = (
            self.bias_over_scale(),
            self.variance_over_scale2(),
            self.rmse_over_scale(),
        );
        for i in 0..self.ids.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.ids[i],
                self.estimate[i],
                self.bias[i],
                self.variance[i],
                self.rmse[i],
                bs[i],
                vs[i],
                rs[i]
            )?;
        }
        Ok(())
    }
}

/// Multiplicities of one with-replacement resample of `n` items.
pub fn resample_counts(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

fn references<'a>(queries: &EmbeddingMatrix, refs: &'a PairedCorpus) -> References<'a> {
    let modality = queries.modality();
    References {
        other: refs.side(modality.other()),
        same: refs.side(modality),
    }
}

fn validate(
    queries: &EmbeddingMatrix,
    refs: &PairedCorpus,
    metric: MetricKind,
    resamples: usize,
) -> Result<()> {
    if !MetricKind::DIVERGENCES.contains(&metric) {
        return Err(Error::contract(format!("cannot bootstrap metric {metric}")));
    }
    if resamples < 2 {
        return Err(Error::contract("bootstrap needs at least two resamples"));
    }
    if refs.n() == 0 {
        return Err(Error::contract("empty reference set"));
    }
    if queries.dim() != refs.dim() {
        return Err(Error::contract("queries and references differ in dimension"));
    }
    Ok(())
}

/// `queries × B` matrix of resample estimates `D̂(i; b)`.
pub fn bootstrap_replicates(
    queries: &EmbeddingMatrix,
    refs: &PairedCorpus,
    metric: MetricKind,
    model: &ScoreModel,
    resamples: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    validate(queries, refs, metric, resamples)?;
    let n = refs.n();
    let counts: Vec<Vec<f64>> = par::map_range(resamples, |b| resample_counts(n, seed, b as u64));
    let r = references(queries, refs);
    let modality = queries.modality();
    let a = model.logit_scale;
    let mut out = Array2::zeros((queries.n(), resamples));
    match metric {
        MetricKind::DKl | MetricKind::DKlr => {
            let want_kl = metric == MetricKind::DKl;
            // Scores span at most 2a; beyond ~700 a shared max could underflow a resample.
            let shared_max = 2.0 * a < 700.0;
            let rows: Vec<Vec<f64>> = par::map_range(queries.n(), |q| {
                let scores: Vec<f64> = r
                    .other
                    .rows()
                    .dot(&queries.row(q))
                    .iter()
                    .map(|d| a * d)
                    .collect();
                let shifted = ShiftedScores::new(&scores);
                counts
                    .iter()
                    .map(|w| {
                        let (kl, klr) = if shared_max {
                            shifted.weighted(w)
                        } else {
                            let present: Vec<f64> = scores
                                .iter()
                                .zip(w)
                                .filter(|(_, &c)| c > 0.0)
                                .map(|(&s, _)| s)
                                .collect();
                            let ws: Vec<f64> = w.iter().copied().filter(|&c| c > 0.0).collect();
                            ShiftedScores::new(&present).weighted(&ws)
                        };
                        if want_kl {
                            kl
                        } else {
                            klr
                        }
                    })
                    .collect()
            });
            for (q, row) in rows.into_iter().enumerate() {
                for (b, v) in row.into_iter().enumerate() {
                    out[[q, b]] = v;
                }
            }
        }
        MetricKind::DC | MetricKind::DW => {
            let (texts, images) = (&refs.texts, &refs.images);
            let cols: Vec<Result<Vec<f64>>> = par::map_range(resamples, |b| {
                let w = &counts[b];
                let summary = MomentSummary::weighted(texts, images, Some(w), Some(w))?;
                (0..queries.n())
                    .map(|q| {
                        if metric == MetricKind::DC {
                            kl::d_c(queries.row(q), &summary, modality, a)
                        } else {
                            kl::d_w(queries.row(q), &summary, modality, a)
                        }
                    })
                    .collect()
            });
            for (b, col) in cols.into_iter().enumerate() {
                for (q, v) in col?.into_iter().enumerate() {
                    out[[q, b]] = v;
                }
            }
        }
        _ => unreachable!("validated above"),
    }
    Ok(out)
}

/// Bootstrap one metric for every query against a paired reference set.
pub fn bootstrap(
    queries: &EmbeddingMatrix,
    refs: &PairedCorpus,
    metric: MetricKind,
    model: &ScoreModel,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    validate(queries, refs, metric, resamples)?;
    let mut warnings = Vec::new();
    if metric == MetricKind::DW && refs.n() < refs.dim() {
        let msg = format!(
            "{} reference pairs for dimension {}: covariance is rank-deficient",
            refs.n(),
            refs.dim()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let full = kl::compute_metric(metric, queries, references(queries, refs), model)?;
    let replicates = bootstrap_replicates(queries, refs, metric, model, resamples, seed)?;
    let (bias, variance, rmse) = BootstrapReport::aggregate(&full.values, &replicates);
    let scale = stats::std_dev(&full.values);
    Ok(BootstrapReport {
        ids: queries.ids().to_vec(),
        estimate: full.values,
        bias,
        variance,
        rmse,
        scale,
        resamples,
        sample_size: refs.n(),
        seed,
        metric,
        model: *model,
        generator: GENERATOR.to_string(),
        warnings,
    })
}

/// One row of a sample-size sweep: distribution of `RMSE(i)/scale` pooled
/// over queries and repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// For each size `n`, draw `repeats` reference subsets of `n` pairs (without
/// replacement), bootstrap inside each, and summarize relative RMSE.
#[allow(clippy::too_many_arguments)]
pub fn sample_size_sweep(
    queries: &EmbeddingMatrix,
    refs: &PairedCorpus,
    metric: MetricKind,
    model: &ScoreModel,
    sizes: &[usize],
    repeats: usize,
    resamples: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if repeats == 0 {
        return Err(Error::contract("repeats must be positive"));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > refs.n()) {
        return Err(Error::contract(format!(
            "sample size {bad} outside 1..={}",
            refs.n()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut rel = Vec::with_capacity(repeats * queries.n());
        for r in 0..repeats {
            let subset_seed = mix_seed(seed, n as u64, r as u64);
            let sub = if n == refs.n() && repeats == 1 {
                refs.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(subset_seed);
                let picks = index::sample(&mut rng, refs.n(), n).into_vec();
                refs.select_pairs(&picks)?
            };
            let boot_seed = if n == refs.n() && repeats == 1 { seed } else { subset_seed };
            let report = bootstrap(queries, &sub, metric, model, resamples, boot_seed)?;
            rel.extend(report.rmse_over_scale().into_iter().filter(|v| v.is_finite()));
        }
        if rel.is_empty() {
            return Err(Error::data(format!(
                "no finite relative RMSE at n = {n} (zero spread across queries)"
            )));
        }
        rel.sort_by(f64::total_cmp);
        rows.push(SweepRow {
            n,
            median: stats::quantile_sorted(&rel, 0.5),
            q1: stats::quantile_sorted(&rel, 0.25),
            q3: stats::quantile_sorted(&rel, 0.75),
            count: rel.len(),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "n,median,q1,q3")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, r.median, r.q1, r.q3)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{clustered_pairs, SynthConfig};

    fn corpus(n: usize, seed: u64) -> PairedCorpus {
        clustered_pairs(&SynthConfig {
            n,
            dim: 8,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn counts_sum_to_n_and_streams_differ() {
        let a = resample_counts(50, 9, 0);
        let b = resample_counts(50, 9, 1);
        assert_eq!(a.iter().sum::<f64>(), 50.0);
        assert_ne!(a, b);
        assert_eq!(a, resample_counts(50, 9, 0));
    }

    #[test]
    fn single_reference_has_no_error() {
        let refs = corpus(1, 1);
        let queries = corpus(5, 2).images;
        let model = ScoreModel::softmax(100.0).unwrap();
        let rep = bootstrap(&queries, &refs, MetricKind::DKlr, &model, 10, 0).unwrap();
        assert!(rep.bias.iter().all(|&b| b == 0.0));
        assert!(rep.variance.iter().all(|&v| v == 0.0));
        assert!(rep.rmse.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn decomposition_holds_for_all_metrics() {
        let refs = corpus(120, 3);
        let queries = corpus(30, 4).images;
        let model = ScoreModel::softmax(50.0).unwrap();
        for metric in MetricKind::DIVERGENCES {
            let rep = bootstrap(&queries, &refs, metric, &model, 20, 5).unwrap();
            let reps = bootstrap_replicates(&queries, &refs, metric, &model, 20, 5).unwrap();
            for i in 0..rep.ids.len() {
                assert!(rep.variance[i] >= 0.0);
                let lhs = rep.rmse[i] * rep.rmse[i];
                let rhs = rep.variance[i] + rep.bias[i] * rep.bias[i];
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1e-300));
                // direct mean squared deviation from the full-sample estimate
                let direct = reps
                    .row(i)
                    .iter()
                    .map(|x| (x - rep.estimate[i]).powi(2))
                    .sum::<f64>()
                    / 20.0;
                assert!((direct - lhs).abs() <= 1e-9 * lhs.max(1e-12), "{metric}: {direct} vs {lhs}");
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let refs = corpus(80, 6);
        let queries = corpus(10, 7).texts;
        let model = ScoreModel::softmax(30.0).unwrap();
        let a = bootstrap(&queries, &refs, MetricKind::DKl, &model, 8, 42).unwrap();
        let b = bootstrap(&queries, &refs, MetricKind::DKl, &model, 8, 42).unwrap();
        assert_eq!(a.bias, b.bias);
        assert_eq!(a.variance, b.variance);
        let c = bootstrap(&queries, &refs, MetricKind::DKl, &model, 8, 43).unwrap();
        assert_ne!(a.bias, c.bias);
    }

    #[test]
    fn rank_deficient_covariance_warns() {
        let refs = corpus(5, 8);
        let queries = corpus(5, 9).images;
        let model = ScoreModel::softmax(10.0).unwrap();
        let rep = bootstrap(&queries, &refs, MetricKind::DW, &model, 4, 0).unwrap();
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn invalid_inputs() {
        let refs = corpus(10, 1);
        let queries = corpus(3, 2).images;
        let model = ScoreModel::softmax(10.0).unwrap();
        assert!(bootstrap(&queries, &refs, MetricKind::DKl, &model, 1, 0)
            .unwrap_err()
            .is_contract());
        assert!(bootstrap(&queries, &refs, MetricKind::Conformity, &model, 5, 0)
            .unwrap_err()
            .is_contract());
        assert!(
            sample_size_sweep(&queries, &refs, MetricKind::DKl, &model, &[11], 1, 5, 0)
                .unwrap_err()
                .is_contract()
        );
    }

    #[test]
    fn degenerate_sweep_is_plain_bootstrap() {
        let refs = corpus(60, 10);
        let queries = corpus(20, 11).images;
        let model = ScoreModel::softmax(40.0).unwrap();
        let rows =
            sample_size_sweep(&queries, &refs, MetricKind::DKlr, &model, &[60], 1, 10, 3).unwrap();
        let rep = bootstrap(&queries, &refs, MetricKind::DKlr, &model, 10, 3).unwrap();
        let mut rel = rep.rmse_over_scale();
        rel.sort_by(f64::total_cmp);
        assert_eq!(rows[0].median, stats::quantile_sorted(&rel, 0.5));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let refs = corpus(20, 1);
        let queries = corpus(4, 2).images;
        let model = ScoreModel::softmax(10.0).unwrap();
        let rep = bootstrap(&queries, &refs, MetricKind::DC, &model, 3, 0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: serde_json::Value =
            serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
        assert_eq!(header["B"], 3);
        assert_eq!(lines.count(), 5);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn decomposition_and_nonnegative_variance(
            n in 2usize..40,
            b in 2usize..12,
            seed in 0u64..1000,
            which in 0usize..4,
            scale in 1.0f64..100.0,
        ) {
            let refs = corpus(n, seed);
            let queries = corpus(6, seed + 1).images;
            let model = ScoreModel::softmax(scale).unwrap();
            let metric = MetricKind::DIVERGENCES[which];
            let rep = bootstrap(&queries, &refs, metric, &model, b, seed).unwrap();
            for i in 0..rep.ids.len() {
                proptest::prop_assert!(rep.variance[i] >= 0.0);
                let lhs = rep.rmse[i] * rep.rmse[i];
                let rhs = rep.variance[i] + rep.bias[i] * rep.bias[i];
                proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
            }
        }

        #[test]
        fn counts_are_a_resample(n in 1usize..200, seed: u64, stream in 0u64..100) {
            let c = resample_counts(n, seed, stream);
            proptest::prop_assert_eq!(c.len(), n);
            proptest::prop_assert_eq!(c.iter().sum::<f64>(), n as f64);
            proptest::prop_assert!(c.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
        }
    }
}
