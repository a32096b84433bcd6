//! Caption diversity: decile grouping by a metric and top-K n-gram coverage.
//!
//! The coverage of a caption group at `K` is the fraction of all n-gram
//! occurrences in the group taken by its `K` most frequent n-grams. Diverse
//! groups spread their mass and so have lower curves.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricVector;

/// Lowercase, turn every non-alphanumeric character into a space, split.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub id: String,
    pub text: String,
    /// The paired image, when several captions share one image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
}

impl Caption {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            image_id: None,
        }
    }
}

/// Read `{"id", "text", "image_id"?}` lines.
pub fn read_captions_jsonl<R: BufRead>(r: R) -> Result<Vec<Caption>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// The metric is keyed by caption ID.
    OwnMetric,
    /// The metric is keyed by image ID; each caption takes its image's value.
    PairedImageMetric,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own_metric" | "own" => Ok(GroupBy::OwnMetric),
            "paired_image_metric" | "paired" => Ok(GroupBy::PairedImageMetric),
            other => Err(Error::contract(format!("unknown grouping {other:?}"))),
        }
    }
}

pub const GROUPS: usize = 10;

/// Split captions into ten groups by metric decile (group 0 lowest).
///
/// Captions are ordered by `(value, caption id)`; the caption at rank `r`
/// goes to group `⌊10·r/n⌋`, so group sizes differ by at most one.
pub fn decile_groups(
    metric: &MetricVector,
    captions: &[Caption],
    group_by: GroupBy,
) -> Result<Vec<Vec<Caption>>> {
    let n = captions.len();
    if n < GROUPS {
        return Err(Error::contract(format!(
            "decile grouping needs at least {GROUPS} captions, got {n}"
        )));
    }
    let lookup = metric.by_id();
    let mut keyed = captions
        .iter()
        .map(|c| {
            let key = match group_by {
                GroupBy::OwnMetric => c.id.as_str(),
                GroupBy::PairedImageMetric => c.image_id.as_deref().ok_or_else(|| {
                    Error::contract(format!("caption {:?} has no image_id", c.id))
                })?,
            };
            let v = lookup
                .get(key)
                .copied()
                .ok_or_else(|| Error::contract(format!("metric has no value for {key:?}")))?;
            Ok((v, c))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let mut groups = vec![Vec::new(); GROUPS];
    for (rank, (_, c)) in keyed.into_iter().enumerate() {
        groups[rank * GROUPS / n].push(c.clone());
    }
    Ok(groups)
}

/// N-gram occurrence counts of one caption group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NGramTable {
    pub order: usize,
    pub counts: HashMap<Vec<String>, u64>,
    pub total: u64,
}

impl NGramTable {
    pub fn from_captions<'a, I>(captions: I, order: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        assert!(order >= 1, "n-gram order must be positive");
        let mut table = NGramTable {
            order,
            ..Default::default()
        };
        for text in captions {
            let tokens = tokenize(text);
            for gram in tokens.windows(order) {
                *table.counts.entry(gram.to_vec()).or_insert(0) += 1;
                table.total += 1;
            }
        }
        table
    }

    /// Merge counts from another table of the same order.
    pub fn merge(&mut self, other: &NGramTable) {
        assert_eq!(self.order, other.order);
        for (g, c) in &other.counts {
            *self.counts.entry(g.clone()).or_insert(0) += c;
        }
        self.total += other.total;
    }

    /// Counts in descending order; equal counts ordered lexicographically.
    pub fn sorted(&self) -> Vec<(&Vec<String>, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(g, &c)| (g, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// `(K, coverage)` for `K = 1..=k_max`.
///
/// Empty when the group has no n-grams of this order (a warning is logged).
pub fn coverage_curve(captions: &[Caption], order: usize, k_max: usize) -> Result<Vec<(usize, f64)>> {
    if captions.is_empty() {
        return Err(Error::contract("coverage of an empty caption group"));
    }
    if order == 0 {
        return Err(Error::contract("n-gram order must be positive"));
    }
    let table = NGramTable::from_captions(captions.iter().map(|c| c.text.as_str()), order);
    if table.total == 0 {
        log::warn!("no {order}-grams in a group of {} captions", captions.len());
        return Ok(Vec::new());
    }
    let sorted = table.sorted();
    let mut cum = 0u64;
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if let Some((_, c)) = sorted.get(k - 1) {
            cum += c;
        }
        out.push((k, cum as f64 / table.total as f64));
    }
    Ok(out)
}

/// One output row: `group,n,K,coverage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub group: usize,
    pub n: usize,
    pub k: usize,
    pub coverage: f64,
}

/// Curves for every decile group and every order.
pub fn decile_coverage(
    groups: &[Vec<Caption>],
    orders: &[usize],
    k_max: usize,
) -> Result<Vec<CoveragePoint>> {
    let mut out = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for &order in orders {
            for (k, coverage) in coverage_curve(group, order, k_max)? {
                out.push(CoveragePoint {
                    group: g,
                    n: order,
                    k,
                    coverage,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_coverage_csv<W: Write>(w: &mut W, points: &[CoveragePoint]) -> Result<()> {
    writeln!(w, "group,n,K,coverage")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.group, p.n, p.k, p.coverage)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Modality;
    use crate::metric::MetricKind;

    fn caps(texts: &[&str]) -> Vec<Caption> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Caption::new(format!("c{i:03}"), *t))
            .collect()
    }

    #[test]
    fn tokenizer_cases() {
        assert_eq!(tokenize("A dog, a DOG."), vec!["a", "dog", "a", "dog"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  rock'n'roll!! "), vec!["rock", "n", "roll"]);
    }

    #[test]
    fn single_caption_unigram() {
        let c = caps(&["a b a b"]);
        let curve = coverage_curve(&c, 1, 3).unwrap();
        assert_eq!(curve[0], (1, 0.5));
        assert_eq!(curve[1], (2, 1.0));
        assert_eq!(curve[2], (3, 1.0));
        let table = NGramTable::from_captions(["a b a b"], 1);
        // lexicographic tie order: "a" first
        assert_eq!(table.sorted()[0].0, &vec!["a".to_string()]);
    }

    #[test]
    fn short_captions_give_empty_curve() {
        let c = caps(&["one two", "three"]);
        assert!(coverage_curve(&c, 3, 5).unwrap().is_empty());
    }

    #[test]
    fn curve_matches_brute_force_recount() {
        let c = caps(&[
            "a man riding a horse",
            "a man riding a bike",
            "the cat on the mat",
            "a horse in a field",
        ]);
        for order in 1..=3 {
            let curve = coverage_curve(&c, order, 20).unwrap();
            // brute force: list every occurrence, count by linear scan
            let mut occ: Vec<Vec<String>> = Vec::new();
            for cap in &c {
                let t = tokenize(&cap.text);
                for i in 0..t.len().saturating_sub(order - 1) {
                    occ.push(t[i..i + order].to_vec());
                }
            }
            let mut distinct: Vec<Vec<String>> = occ.clone();
            distinct.sort();
            distinct.dedup();
            let mut counted: Vec<(usize, Vec<String>)> = distinct
                .into_iter()
                .map(|g| (occ.iter().filter(|o| **o == g).count(), g))
                .collect();
            counted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for (k, cov) in curve {
                let top: usize = counted.iter().take(k).map(|x| x.0).sum();
                assert!((cov - top as f64 / occ.len() as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn deciles_even_sizes_and_monotone() {
        let texts: Vec<String> = (0..103).map(|i| format!("caption {i}")).collect();
        let captions: Vec<Caption> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Caption::new(format!("c{i:03}"), t.clone()))
            .collect();
        let metric = MetricVector::new(
            captions.iter().map(|c| c.id.clone()).collect(),
            (0..103).map(|i| i as f64).collect(),
            MetricKind::DKl,
            Modality::Text,
        )
        .unwrap();
        let groups = decile_groups(&metric, &captions, GroupBy::OwnMetric).unwrap();
        for g in &groups {
            assert!(g.len() == 10 || g.len() == 11);
        }
        assert!(groups[9].iter().any(|c| c.id == "c102"));
        assert!(groups[0].iter().any(|c| c.id == "c000"));
    }

    #[test]
    fn boundary_ties_follow_id_order() {
        // 20 captions, values: 0 for c00..c09 would fill group 0..4 evenly;
        // make a tie block straddling the group-0/1 boundary.
        let captions: Vec<Caption> = (0..20).map(|i| Caption::new(format!("c{i:02}"), "x y")).collect();
        let mut values: Vec<f64> = (0..20).map(|i| i as f64).collect();
        values[1] = 5.0;
        values[2] = 5.0;
        values[3] = 5.0;
        let metric = MetricVector::new(
            captions.iter().map(|c| c.id.clone()).collect(),
            values,
            MetricKind::DKl,
            Modality::Text,
        )
        .unwrap();
        let groups = decile_groups(&metric, &captions, GroupBy::OwnMetric).unwrap();
        // sorted: c00(0), c04(4), c01(5), c02(5), c03(5), c05(5), c06(6), ...
        let ids = |g: usize| groups[g].iter().map(|c| c.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(0), vec!["c00", "c04"]);
        assert_eq!(ids(1), vec!["c01", "c02"]);
        assert_eq!(ids(2), vec!["c03", "c05"]);
    }

    #[test]
    fn paired_image_grouping() {
        let mut captions = Vec::new();
        for img in 0..10 {
            for k in 0..5 {
                let mut c = Caption::new(format!("img{img}_cap{k}"), "t");
                c.image_id = Some(format!("img{img}"));
                captions.push(c);
            }
        }
        let metric = MetricVector::new(
            (0..10).map(|i| format!("img{i}")).collect(),
            (0..10).map(|i| (10 - i) as f64).collect(),
            MetricKind::DKl,
            Modality::Image,
        )
        .unwrap();
        let groups = decile_groups(&metric, &captions, GroupBy::PairedImageMetric).unwrap();
        assert!(groups[0].iter().all(|c| c.image_id.as_deref() == Some("img9")));
        assert!(groups[9].iter().all(|c| c.image_id.as_deref() == Some("img0")));
        assert!(decile_groups(&metric, &captions[..5], GroupBy::OwnMetric)
            .unwrap_err()
            .is_contract());
    }

    proptest::proptest! {
        #[test]
        fn tokenize_round_trip(tokens in proptest::collection::vec("[a-z0-9]{1,8}", 0..20)) {
            let joined = tokens.join(" ");
            proptest::prop_assert_eq!(tokenize(&joined), tokens);
        }

        #[test]
        fn curves_monotone_and_bounded(
            words in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..12), 1..15),
            order in 1usize..4,
        ) {
            let texts: Vec<String> = words
                .iter()
                .map(|ws| ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "))
                .collect();
            let captions: Vec<Caption> = texts.iter().enumerate().map(|(i, t)| Caption::new(i.to_string(), t.clone())).collect();
            let curve = coverage_curve(&captions, order, 300).unwrap();
            let mut prev = 0.0;
            for &(_, c) in &curve {
                proptest::prop_assert!(c >= prev && c <= 1.0);
                prev = c;
            }
            if let Some(&(_, last)) = curve.last() {
                proptest::prop_assert_eq!(last, 1.0);
            }
        }
    }
}
