//! Metric-based filtering of a paired pool into kept-ID manifests.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Equal values ordered by ID ascending.
    ById,
    /// Equal values keep corpus order.
    Stable,
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "by_id" => Ok(TieRule::ById),
            "stable" => Ok(TieRule::Stable),
            other => Err(Error::contract(format!("unknown tie rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub value: f64,
    pub rank: usize,
}

/// Kept samples in descending metric order; `rank` starts at 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut *w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Plain list, one ID per line.
    pub fn write_ids<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in &self.entries {
            writeln!(w, "{}", e.id)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        Ok(Self {
            entries,
            warnings: Vec::new(),
        })
    }

    fn renumber(mut self) -> Self {
        for (rank, e) in self.entries.iter_mut().enumerate() {
            e.rank = rank;
        }
        self
    }
}

/// Number of samples kept out of `n`: `⌈keep_fraction·n⌉`.
///
/// A relative slack of 1e-12 absorbs representation error, so `0.3·10`
/// (which evaluates to 3.0000000000000004) keeps 3, not 4.
pub fn kept_count(n: usize, keep_fraction: f64) -> Result<usize> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::contract(format!(
            "keep fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let exact = keep_fraction * n as f64;
    let k = (exact - exact * 1e-12).ceil() as usize;
    Ok(k.min(n))
}

fn aligned_values(ids: &[String], metric: &MetricVector) -> Result<Vec<f64>> {
    let lookup: HashMap<&str, f64> = metric
        .ids
        .iter()
        .map(String::as_str)
        .zip(metric.values.iter().copied())
        .collect();
    let corpus: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if corpus.len() != ids.len() {
        return Err(Error::contract("corpus IDs are not unique"));
    }
    if lookup.len() != metric.ids.len() || corpus.len() != lookup.len()
        || corpus.iter().any(|id| !lookup.contains_key(id))
    {
        let metric_ids: HashSet<&str> = lookup.keys().copied().collect();
        let diff: BTreeSet<&str> = corpus.symmetric_difference(&metric_ids).copied().collect();
        return Err(Error::contract(format!(
            "metric IDs do not match corpus IDs; symmetric difference: {:?}",
            diff
        )));
    }
    Ok(ids.iter().map(|id| lookup[id.as_str()]).collect())
}

fn ranked(ids: &[String], values: &[f64], tie_rule: TieRule) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    match tie_rule {
        TieRule::ById => order.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then_with(|| ids[a].cmp(&ids[b]))
        }),
        // sort_by is stable, so equal values stay in corpus order
        TieRule::Stable => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    order
}

/// Keep the `⌈keep_fraction·n⌉` highest-valued samples of the corpus `ids`.
pub fn rank_and_filter(
    ids: &[String],
    metric: &MetricVector,
    keep_fraction: f64,
    tie_rule: TieRule,
) -> Result<Manifest> {
    let values = aligned_values(ids, metric)?;
    let k = kept_count(ids.len(), keep_fraction)?;
    let entries = ranked(ids, &values, tie_rule)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, i)| ManifestEntry {
            id: ids[i].clone(),
            value: values[i],
            rank,
        })
        .collect();
    Ok(Manifest {
        entries,
        warnings: Vec::new(),
    })
}

/// Keep samples with `value ≥ min_value`, in descending order.
pub fn threshold_filter(
    ids: &[String],
    metric: &MetricVector,
    min_value: f64,
    tie_rule: TieRule,
) -> Result<Manifest> {
    let values = aligned_values(ids, metric)?;
    let entries: Vec<ManifestEntry> = ranked(ids, &values, tie_rule)
        .into_iter()
        .filter(|&i| values[i] >= min_value)
        .map(|i| ManifestEntry {
            id: ids[i].clone(),
            value: values[i],
            rank: 0,
        })
        .collect();
    Ok(Manifest {
        entries,
        warnings: Vec::new(),
    }
    .renumber())
}

/// One filtering stage.
#[derive(Debug, Clone)]
pub enum Filter {
    TopFraction {
        metric: MetricVector,
        keep_fraction: f64,
        tie_rule: TieRule,
    },
    Threshold {
        metric: MetricVector,
        min_value: f64,
        tie_rule: TieRule,
    },
}

impl Filter {
    /// Apply to a subset of corpus IDs. The metric may cover more IDs than the subset.
    pub fn apply(&self, ids: &[String]) -> Result<Manifest> {
        let (metric, tie_rule) = match self {
            Filter::TopFraction { metric, tie_rule, .. } | Filter::Threshold { metric, tie_rule, .. } => {
                (metric, *tie_rule)
            }
        };
        let restricted = restrict(metric, ids)?;
        match self {
            Filter::TopFraction { keep_fraction, .. } => {
                rank_and_filter(ids, &restricted, *keep_fraction, tie_rule)
            }
            Filter::Threshold { min_value, .. } => {
                threshold_filter(ids, &restricted, *min_value, tie_rule)
            }
        }
    }
}

fn restrict(metric: &MetricVector, ids: &[String]) -> Result<MetricVector> {
    let lookup = metric.by_id();
    let values = ids
        .iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::contract(format!("metric has no value for {id:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    MetricVector::new(ids.to_vec(), values, metric.kind, metric.modality)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposeMode {
    /// Every filter sees the full corpus; keep IDs present in all results.
    Intersection,
    /// Each filter sees the survivors of the previous one.
    Sequential,
}

impl std::str::FromStr for ComposeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(ComposeMode::Intersection),
            "sequential" => Ok(ComposeMode::Sequential),
            other => Err(Error::contract(format!("unknown compose mode {other:?}"))),
        }
    }
}

/// Intersect already computed manifests. Order and values follow the last one.
pub fn intersect_manifests(manifests: &[Manifest]) -> Result<Manifest> {
    let last = manifests
        .last()
        .ok_or_else(|| Error::contract("no manifests to compose"))?;
    let sets: Vec<HashSet<&str>> = manifests
        .iter()
        .map(|m| m.entries.iter().map(|e| e.id.as_str()).collect())
        .collect();
    let entries = last
        .entries
        .iter()
        .filter(|e| sets.iter().all(|s| s.contains(e.id.as_str())))
        .cloned()
        .collect();
    Ok(flag_empty(
        Manifest {
            entries,
            warnings: Vec::new(),
        }
        .renumber(),
    ))
}

fn flag_empty(mut m: Manifest) -> Manifest {
    if m.is_empty() {
        let msg = "composed filter kept no samples".to_string();
        log::warn!("{msg}");
        m.warnings.push(msg);
    }
    m
}

/// Run several filters over one corpus.
pub fn compose_filters(ids: &[String], filters: &[Filter], mode: ComposeMode) -> Result<Manifest> {
    if filters.is_empty() {
        return Err(Error::contract("no filters to compose"));
    }
    match mode {
        ComposeMode::Intersection => {
            let manifests = filters
                .iter()
                .map(|f| f.apply(ids))
                .collect::<Result<Vec<_>>>()?;
            intersect_manifests(&manifests)
        }
        ComposeMode::Sequential => {
            let mut survivors = ids.to_vec();
            let mut current = Manifest::default();
            for f in filters {
                if survivors.is_empty() {
                    current = Manifest::default();
                    break;
                }
                current = f.apply(&survivors)?;
                survivors = current.ids();
            }
            Ok(flag_empty(current))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Modality;
    use crate::metric::MetricKind;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i:05}")).collect()
    }

    fn metric(ids: &[String], values: Vec<f64>) -> MetricVector {
        MetricVector::new(ids.to_vec(), values, MetricKind::DKl, Modality::Image).unwrap()
    }

    #[test]
    fn keep_all_sorted_descending() {
        let ids = ids(5);
        let m = metric(&ids, vec![0.3, 0.9, 0.1, 0.5, 0.7]);
        let man = rank_and_filter(&ids, &m, 1.0, TieRule::ById).unwrap();
        assert_eq!(man.ids(), vec!["id00001", "id00004", "id00003", "id00000", "id00002"]);
        assert_eq!(man.entries[4].rank, 4);
    }

    #[test]
    fn quota_uses_ceiling() {
        assert_eq!(kept_count(1000, 0.25).unwrap(), 250);
        assert_eq!(kept_count(10, 0.3).unwrap(), 3);
        assert_eq!(kept_count(10, 0.31).unwrap(), 4);
        assert_eq!(kept_count(3, 0.01).unwrap(), 1);
        assert!(kept_count(3, 0.0).unwrap_err().is_contract());
        assert!(kept_count(3, 1.5).is_err());
    }

    #[test]
    fn constant_metric_by_id_keeps_smallest_ids() {
        let mut ids = ids(1000);
        ids.reverse();
        let m = metric(&ids, vec![2.0; 1000]);
        let man = rank_and_filter(&ids, &m, 0.25, TieRule::ById).unwrap();
        assert_eq!(man.len(), 250);
        let mut expected: Vec<String> = ids.clone();
        expected.sort();
        expected.truncate(250);
        assert_eq!(man.ids(), expected);
        // stable keeps corpus order instead
        let man = rank_and_filter(&ids, &m, 0.25, TieRule::Stable).unwrap();
        assert_eq!(man.ids(), ids[..250].to_vec());
    }

    #[test]
    fn id_mismatch_lists_difference() {
        let ids = ids(3);
        let other = vec!["id00000".to_string(), "id00001".into(), "zzz".into()];
        let m = metric(&other, vec![1.0, 2.0, 3.0]);
        let err = rank_and_filter(&ids, &m, 0.5, TieRule::ById).unwrap_err();
        let msg = err.to_string();
        assert!(err.is_contract());
        assert!(msg.contains("id00002") && msg.contains("zzz"), "{msg}");
    }

    #[test]
    fn refilter_at_one_is_identity() {
        let ids = ids(40);
        let m = metric(&ids, (0..40).map(|i| ((i * 7) % 13) as f64).collect());
        let first = rank_and_filter(&ids, &m, 0.3, TieRule::ById).unwrap();
        let again = Filter::TopFraction {
            metric: m.clone(),
            keep_fraction: 1.0,
            tie_rule: TieRule::ById,
        }
        .apply(&first.ids())
        .unwrap();
        assert_eq!(again, first);
    }

    #[test]
    fn compose_single_and_disjoint() {
        let ids = ids(10);
        let up = metric(&ids, (0..10).map(|i| i as f64).collect());
        let down = metric(&ids, (0..10).map(|i| -(i as f64)).collect());
        let top = Filter::TopFraction {
            metric: up.clone(),
            keep_fraction: 0.3,
            tie_rule: TieRule::ById,
        };
        let single = compose_filters(&ids, std::slice::from_ref(&top), ComposeMode::Intersection).unwrap();
        assert_eq!(single, top.apply(&ids).unwrap());
        let bottom = Filter::TopFraction {
            metric: down,
            keep_fraction: 0.3,
            tie_rule: TieRule::ById,
        };
        let empty = compose_filters(&ids, &[top, bottom], ComposeMode::Intersection).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.warnings.len(), 1);
    }

    #[test]
    fn sequential_threshold_then_top_half() {
        let ids = ids(1000);
        let align = metric(&ids, (0..1000).map(|i| i as f64).collect());
        let info = metric(&ids, (0..1000).map(|i| ((i * 37) % 1000) as f64).collect());
        let mut sorted = align.values.clone();
        sorted.sort_by(f64::total_cmp);
        let median = crate::stats::quantile_sorted(&sorted, 0.5);
        let filters = [
            Filter::Threshold {
                metric: align,
                min_value: median,
                tie_rule: TieRule::ById,
            },
            Filter::TopFraction {
                metric: info,
                keep_fraction: 0.5,
                tie_rule: TieRule::ById,
            },
        ];
        let out = compose_filters(&ids, &filters, ComposeMode::Sequential).unwrap();
        assert_eq!(out.len(), 250);
    }

    #[test]
    fn jsonl_round_trip() {
        let ids = ids(4);
        let m = metric(&ids, vec![1.0, 4.0, 2.0, 3.0]);
        let man = rank_and_filter(&ids, &m, 0.5, TieRule::ById).unwrap();
        let mut buf = Vec::new();
        man.write_jsonl(&mut buf).unwrap();
        assert_eq!(Manifest::read_jsonl(buf.as_slice()).unwrap(), man);
    }

    proptest::proptest! {
        #[test]
        fn quota_subset_order_and_idempotence(
            values in proptest::collection::vec(0u8..8, 1..200),
            keep_num in 1usize..200,
        ) {
            let n = values.len();
            let k = 1 + keep_num % n;
            let ids = ids(n);
            let m = metric(&ids, values.iter().map(|&v| v as f64).collect());
            let man = rank_and_filter(&ids, &m, k as f64 / n as f64, TieRule::ById).unwrap();
            proptest::prop_assert_eq!(man.len(), k);
            for w in man.entries.windows(2) {
                proptest::prop_assert!(w[0].value > w[1].value || (w[0].value == w[1].value && w[0].id < w[1].id));
            }
            // nothing dropped beats anything kept
            let floor = man.entries.last().unwrap().value;
            let kept: std::collections::BTreeSet<_> = man.ids().into_iter().collect();
            for (id, v) in ids.iter().zip(&m.values) {
                proptest::prop_assert!(kept.contains(id) || *v <= floor);
            }
            let again = Filter::TopFraction { metric: m.clone(), keep_fraction: 1.0, tie_rule: TieRule::ById }
                .apply(&man.ids())
                .unwrap();
            proptest::prop_assert_eq!(again, man);
        }
    }
}
