//! # densratio
//!
//! Contrastive (CLIP-style) similarity scores read as log density ratios.
//!
//! A softmax- or sigmoid-contrastive model that scores a text/image pair as
//! `a·⟨v_t, v_i⟩ (+ b)` learns, at its optimum,
//!
//! ```text
//! p(t | i) / p(t) = exp(a·⟨v_t, v_i⟩) / Z(i),      Z(i) = E_t[exp(a·⟨v_t, v_i⟩)]
//! ```
//!
//! and symmetrically for `p(i | t) / p(i)`. This crate builds on that reading:
//!
//! | Module | What it does |
//! |--------|--------------|
//! | [`embedding`] | EMB1 / CSV / JSONL embedding matrices, normalization, raw norms |
//! | [`ratio`] | scores, calibrated ratio matrices, importance weights |
//! | [`kl`] | per-sample `D_KL`, `D_KLR`, `D_C`, `D_W`, conformity, metric correlations |
//! | [`bootstrap`] | finite-sample bias / variance / RMSE and sample-size sweeps |
//! | [`toy`] | Gaussian-mixture world with an analytic ratio oracle and small trainable encoders |
//! | [`curation`] | top-fraction and threshold filters, manifests |
//! | [`ngram`] | decile grouping of captions and top-K n-gram coverage curves |
//!
//! ## Quick start
//!
//! ```rust
//! use densratio::kl;
//!
//! // Two reference texts scoring 0 and ln 3 against one image.
//! let scores = [0.0, 3f64.ln()];
//! let info_gain = kl::d_kl_from_scores(&scores);
//! let reverse = kl::d_klr_from_scores(&scores);
//! assert!((info_gain - (0.75 * 3f64.ln() - 2f64.ln())).abs() < 1e-12);
//! assert!(reverse >= 0.0);
//! ```

#![forbid(unsafe_code)]

pub mod bootstrap;
pub mod curation;
pub mod embedding;
pub mod error;
pub mod kl;
pub mod metric;
pub mod ngram;
pub mod par;
pub mod ratio;
pub mod stats;
pub mod synth;
pub mod toy;

pub use embedding::{EmbeddingFormat, EmbeddingMatrix, Modality, PairedCorpus};
pub use error::{Error, Result};
pub use metric::{MetricKind, MetricVector};
pub use ratio::{Calibration, Flavor, ScoreModel};

/// Crate version recorded in provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
