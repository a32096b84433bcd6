//! Embedding matrices: loading, saving, normalization, slicing.
//!
//! Three on-disk formats are supported:
//!
//! - **EMB1** (binary): `"EMB1"`, `u32` n, `u32` d, `u8` modality (0 image, 1 text),
//!   `n·d` little-endian `f32` row-major, then a `u64` byte length and a UTF-8
//!   JSON array holding the row IDs.
//! - **CSV**: one row per line, comma-separated decimals. An optional leading
//!   field of the form `id:<name>` carries the row ID. Blank lines and lines
//!   starting with `#` are skipped.
//! - **JSONL**: one `{"id": "...", "vec": [...]}` object per line.
//!
//! Values are held as `f64` in memory. EMB1 stores `f32`, so a save/load cycle
//! is bit-exact for matrices whose entries are `f32`-representable.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{MetricKind, MetricVector};

const EMB1_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    pub fn other(self) -> Self {
        match self {
            Modality::Image => Modality::Text,
            Modality::Text => Modality::Image,
        }
    }

    fn code(self) -> u8 {
        match self {
            Modality::Image => 0,
            Modality::Text => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Image),
            1 => Ok(Modality::Text),
            other => Err(Error::format(format!("unknown modality code {other}"))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Image => f.write_str("image"),
            Modality::Text => f.write_str("text"),
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(Error::contract(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Emb1,
    Csv,
    Jsonl,
}

impl EmbeddingFormat {
    /// Guess the format from a file extension (`.emb`, `.csv`, `.jsonl`/`.json`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "emb" | "emb1" | "bin" => Some(EmbeddingFormat::Emb1),
            "csv" => Some(EmbeddingFormat::Csv),
            "jsonl" | "json" => Some(EmbeddingFormat::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emb1" | "emb" => Ok(EmbeddingFormat::Emb1),
            "csv" => Ok(EmbeddingFormat::Csv),
            "jsonl" => Ok(EmbeddingFormat::Jsonl),
            other => Err(Error::contract(format!("unknown embedding format {other:?}"))),
        }
    }
}

/// `n × d` embedding rows with unique sample IDs.
///
/// Immutable once built; every operation that changes content returns a new
/// matrix. When `normalize` is applied the pre-normalization norms are kept,
/// because they cannot be recovered afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    rows: Array2<f64>,
    modality: Modality,
    normalized: bool,
    raw_norms: Option<Vec<f64>>,
}

impl EmbeddingMatrix {
    /// Build a matrix, validating shape, ID uniqueness and finiteness.
    pub fn new(ids: Vec<String>, rows: Array2<f64>, modality: Modality) -> Result<Self> {
        let (n, d) = rows.dim();
        if n == 0 {
            return Err(Error::data("empty matrix"));
        }
        if d == 0 {
            return Err(Error::data("zero-dimensional embeddings"));
        }
        if ids.len() != n {
            return Err(Error::contract(format!(
                "{} ids for {} rows",
                ids.len(),
                n
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate id {id:?}")));
            }
        }
        for (row, id) in rows.outer_iter().zip(&ids) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite entry in row {id:?}")));
            }
        }
        Ok(Self {
            ids,
            rows,
            modality,
            normalized: false,
            raw_norms: None,
        })
    }

    /// Build a matrix with IDs `"0"`, `"1"`, ...
    pub fn from_rows(rows: Array2<f64>, modality: Modality) -> Result<Self> {
        let ids = (0..rows.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, rows, modality)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    /// Row index of an ID.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Scale each row to unit Euclidean norm.
    ///
    /// Fails with a data error naming the first zero-norm row.
    pub fn normalize(&self) -> Result<Self> {
        let norms = row_norms(&self.rows);
        let mut rows = self.rows.clone();
        for ((mut row, &norm), id) in rows.outer_iter_mut().zip(&norms).zip(&self.ids) {
            if norm == 0.0 {
                return Err(Error::data(format!("zero-norm row {id:?}")));
            }
            row.mapv_inplace(|v| v / norm);
        }
        let raw_norms = match &self.raw_norms {
            Some(cached) => cached.clone(),
            None => norms,
        };
        Ok(Self {
            ids: self.ids.clone(),
            rows,
            modality: self.modality,
            normalized: true,
            raw_norms: Some(raw_norms),
        })
    }

    /// Per-row Euclidean norms before any normalization.
    pub fn raw_norms(&self) -> MetricVector {
        let values = match &self.raw_norms {
            Some(cached) => cached.clone(),
            None => row_norms(&self.rows),
        };
        MetricVector::new(self.ids.clone(), values, MetricKind::RawNorm, self.modality)
            .expect("row norms are finite for a validated matrix")
    }

    /// Rows for the given IDs, in the order of `ids`.
    pub fn select_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let positions = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| Error::contract(format!("unknown id {:?}", id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_rows(&positions)
    }

    /// Rows at the given positions, in order. Positions must not repeat.
    pub fn select_rows(&self, positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::data("empty matrix"));
        }
        if let Some(&bad) = positions.iter().find(|&&p| p >= self.n()) {
            return Err(Error::contract(format!(
                "row {bad} out of range for {} rows",
                self.n()
            )));
        }
        let rows = self.rows.select(Axis(0), positions);
        let ids: Vec<String> = positions.iter().map(|&p| self.ids[p].clone()).collect();
        let mut out = Self::new(ids, rows, self.modality)?;
        out.normalized = self.normalized;
        out.raw_norms = self
            .raw_norms
            .as_ref()
            .map(|norms| positions.iter().map(|&p| norms[p]).collect());
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            EmbeddingFormat::Emb1 => self.write_emb1(&mut w)?,
            EmbeddingFormat::Csv => self.write_csv(&mut w)?,
            EmbeddingFormat::Jsonl => self.write_jsonl(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_emb1<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = u32::try_from(self.n()).map_err(|_| Error::contract("too many rows for EMB1"))?;
        let d = u32::try_from(self.dim()).map_err(|_| Error::contract("dimension too large"))?;
        w.write_all(EMB1_MAGIC)?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&[self.modality.code()])?;
        for v in self.rows.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        let trailer = serde_json::to_vec(&self.ids)?;
        w.write_all(&(trailer.len() as u64).to_le_bytes())?;
        w.write_all(&trailer)?;
        Ok(())
    }

    fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for (id, row) in self.ids.iter().zip(self.rows.outer_iter()) {
            write!(w, "id:{id}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for (id, row) in self.ids.iter().zip(self.rows.outer_iter()) {
            let line = JsonlRow {
                id: id.clone(),
                vec: row.to_vec(),
            };
            serde_json::to_writer(&mut *w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn row_norms(rows: &Array2<f64>) -> Vec<f64> {
    rows.outer_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    vec: Vec<f64>,
}

/// Load a matrix. The result is never marked normalized, even if its rows
/// happen to be unit length. CSV and JSONL inputs default to the image
/// modality; use [`EmbeddingMatrix::with_modality`] to relabel.
pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    let file = File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    match format {
        EmbeddingFormat::Emb1 => read_emb1(&mut r),
        EmbeddingFormat::Csv => read_csv(r),
        EmbeddingFormat::Jsonl => read_jsonl(r),
    }
}

/// Load with the format inferred from the file extension.
pub fn load_auto(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let format = EmbeddingFormat::from_path(path).ok_or_else(|| {
        Error::format(format!("cannot infer embedding format of {}", path.display()))
    })?;
    load(path, format)
}

pub fn read_emb1<R: Read>(r: &mut R) -> Result<EmbeddingMatrix> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != EMB1_MAGIC {
        return Err(Error::format("bad magic, expected EMB1"));
    }
    let mut u32buf = [0u8; 4];
    read_exact(r, &mut u32buf, "row count")?;
    let n = u32::from_le_bytes(u32buf) as usize;
    read_exact(r, &mut u32buf, "dimension")?;
    let d = u32::from_le_bytes(u32buf) as usize;
    let mut code = [0u8; 1];
    read_exact(r, &mut code, "modality")?;
    let modality = Modality::from_code(code[0])?;
    if n == 0 {
        return Err(Error::data("empty matrix"));
    }
    let mut data = vec![0u8; n * d * 4];
    read_exact(r, &mut data, "matrix body")?;
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut u64buf = [0u8; 8];
    read_exact(r, &mut u64buf, "id trailer length")?;
    let len = u64::from_le_bytes(u64buf) as usize;
    let mut trailer = vec![0u8; len];
    read_exact(r, &mut trailer, "id trailer")?;
    let ids: Vec<String> = serde_json::from_slice(&trailer)
        .map_err(|e| Error::format(format!("bad id trailer: {e}")))?;
    let rows = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::format(format!("bad matrix shape: {e}")))?;
    EmbeddingMatrix::new(ids, rows, modality)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format(format!("truncated EMB1 file while reading {what}: {e}")))
}

fn assemble(ids: Vec<String>, data: Vec<Vec<f64>>) -> Result<EmbeddingMatrix> {
    if data.is_empty() {
        return Err(Error::data("empty matrix"));
    }
    let d = data[0].len();
    let n = data.len();
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    let rows = Array2::from_shape_vec((n, d), flat).expect("row lengths checked by caller");
    EmbeddingMatrix::new(ids, rows, Modality::Image)
}

fn check_row(id: &str, row: &[f64], d: Option<usize>) -> Result<()> {
    if let Some(d) = d {
        if row.len() != d {
            return Err(Error::format(format!(
                "row {id:?} has dimension {}, expected {d}",
                row.len()
            )));
        }
    }
    if row.is_empty() {
        return Err(Error::format(format!("row {id:?} is empty")));
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite entry in row {id:?}")));
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim).peekable();
        let id = match fields.peek() {
            Some(f) if f.starts_with("id:") => {
                let id = f["id:".len()..].to_string();
                fields.next();
                id
            }
            _ => data.len().to_string(),
        };
        let row = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::format(format!("line {}: cannot parse {f:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_row(&id, &row, data.first().map(Vec::len))?;
        ids.push(id);
        data.push(row);
    }
    assemble(ids, data)
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonlRow = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        check_row(&parsed.id, &parsed.vec, data.first().map(Vec::len))?;
        ids.push(parsed.id);
        data.push(parsed.vec);
    }
    assemble(ids, data)
}

/// Image and text matrices whose row `k` form a pair.
#[derive(Debug, Clone)]
pub struct PairedCorpus {
    pub images: EmbeddingMatrix,
    pub texts: EmbeddingMatrix,
    pub captions: Option<Vec<String>>,
}

impl PairedCorpus {
    /// Pair two matrices row by row.
    pub fn new(images: EmbeddingMatrix, texts: EmbeddingMatrix) -> Result<Self> {
        if images.n() != texts.n() {
            return Err(Error::contract(format!(
                "{} images but {} texts",
                images.n(),
                texts.n()
            )));
        }
        if images.dim() != texts.dim() {
            return Err(Error::contract(format!(
                "image dimension {} != text dimension {}",
                images.dim(),
                texts.dim()
            )));
        }
        Ok(Self {
            images: images.with_modality(Modality::Image),
            texts: texts.with_modality(Modality::Text),
            captions: None,
        })
    }

    pub fn with_captions(mut self, captions: Vec<String>) -> Result<Self> {
        if captions.len() != self.texts.n() {
            return Err(Error::contract("caption count must match text rows"));
        }
        self.captions = Some(captions);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.images.n()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    /// The matrix of the given modality.
    pub fn side(&self, modality: Modality) -> &EmbeddingMatrix {
        match modality {
            Modality::Image => &self.images,
            Modality::Text => &self.texts,
        }
    }

    /// Pair IDs; these are the image IDs.
    pub fn ids(&self) -> &[String] {
        self.images.ids()
    }

    /// Keep the pairs at `positions`, in order.
    pub fn select_pairs(&self, positions: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.select_rows(positions)?,
            texts: self.texts.select_rows(positions)?,
            captions: self
                .captions
                .as_ref()
                .map(|c| positions.iter().map(|&p| c[p].clone()).collect()),
        })
    }
}
