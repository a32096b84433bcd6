//! Ground-truth lab: a Gaussian-mixture world whose density ratios are known
//! in closed form, and small dual encoders trained on it with either
//! contrastive objective.
//!
//! ```text
//! label t ~ Categorical(π)      image i | t = j ~ N(μ_j, σ² I)
//! r_j(i) = N(i; μ_j, σ² I) / Σ_k π_k N(i; μ_k, σ² I)
//! ```
//!
//! Trained scores are calibrated into ratio estimates and compared with
//! `r_j(i)` over held-out images and every label.

pub mod eval;
pub mod gradcheck;
pub mod iwl;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;
pub mod world;

pub use eval::{evaluate, evaluate_with, predict_log_ratios, ratio_grid, write_grid_csv, EvalReport, GridPoint};
pub use gradcheck::{gradient_check, TensorCheck};
pub use iwl::{iwl_demo, IwlConfig, IwlReport};
pub use model::DualEncoder;
pub use train::{train, TrainConfig, TrainOutcome};
pub use world::MixtureWorld;
