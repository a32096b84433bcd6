//! Per-sample metric vectors and their CSV form.
//!
//! CSV layout: zero or more `# key=value` header lines carrying parameters,
//! then an `id,value` column header, then one row per sample.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embedding::Modality;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    DKl,
    DKlr,
    DC,
    DW,
    Conformity,
    RawNorm,
    IwlWeight,
    /// Externally supplied score (for example an alignment score).
    External,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::DKl => "d_kl",
            MetricKind::DKlr => "d_klr",
            MetricKind::DC => "d_c",
            MetricKind::DW => "d_w",
            MetricKind::Conformity => "conformity",
            MetricKind::RawNorm => "raw_norm",
            MetricKind::IwlWeight => "iwl_weight",
            MetricKind::External => "external",
        }
    }

    /// The four divergence estimators.
    pub const DIVERGENCES: [MetricKind; 4] =
        [MetricKind::DKl, MetricKind::DKlr, MetricKind::DC, MetricKind::DW];
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "d_kl" => MetricKind::DKl,
            "d_klr" => MetricKind::DKlr,
            "d_c" => MetricKind::DC,
            "d_w" => MetricKind::DW,
            "conformity" => MetricKind::Conformity,
            "raw_norm" => MetricKind::RawNorm,
            "iwl_weight" => MetricKind::IwlWeight,
            "external" => MetricKind::External,
            other => return Err(Error::contract(format!("unknown metric kind {other:?}"))),
        })
    }
}

/// Values of one metric, one per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    pub kind: MetricKind,
    pub modality: Modality,
    /// Free-form parameter snapshot (logit scale, reference-set fingerprints, ...).
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl MetricVector {
    pub fn new(
        ids: Vec<String>,
        values: Vec<f64>,
        kind: MetricKind,
        modality: Modality,
    ) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(Error::contract(format!(
                "{} ids for {} values",
                ids.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::data(format!("NaN {kind} value for {:?}", ids[i])));
        }
        Ok(Self {
            ids,
            values,
            kind,
            modality,
            params: BTreeMap::new(),
        })
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value lookup by ID.
    pub fn by_id(&self) -> BTreeMap<&str, f64> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# kind={}", self.kind)?;
        writeln!(w, "# modality={}", self.modality)?;
        for (k, v) in &self.params {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "id,value")?;
        for (id, v) in self.ids.iter().zip(&self.values) {
            writeln!(w, "{id},{v}")?;
        }
        Ok(())
    }

    /// Parse the CSV form. Headerless `id,value` files are accepted and tagged
    /// with `fallback_kind`.
    pub fn read_csv<R: BufRead>(r: R, fallback_kind: MetricKind) -> Result<Self> {
        let mut params = BTreeMap::new();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    params.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let (id, value) = line.rsplit_once(',').ok_or_else(|| {
                Error::format(format!("line {}: expected id,value", lineno + 1))
            })?;
            if ids.is_empty() && values.is_empty() && id == "id" && value == "value" {
                continue;
            }
            let v: f64 = value.trim().parse().map_err(|_| {
                Error::format(format!("line {}: cannot parse value {value:?}", lineno + 1))
            })?;
            ids.push(id.trim().to_string());
            values.push(v);
        }
        let kind = match params.remove("kind") {
            Some(k) => k.parse()?,
            None => fallback_kind,
        };
        let modality = match params.remove("modality") {
            Some(m) => m.parse()?,
            None => Modality::Image,
        };
        let mut out = Self::new(ids, values, kind, modality)?;
        out.params = params;
        Ok(out)
    }
}
