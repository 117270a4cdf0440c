//! Band-pass filtered verification scores and self-supervised losses for
//! gridded probabilistic forecasts.

pub mod cli;
pub mod diag;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod loss;
pub mod nbhd;
pub mod ranking;
pub mod scores;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{read_grid, write_grid, FieldKind, GridField, WavelengthBand};
pub use nbhd::NbhdSpec;
pub use scores::{Orientation, ScoreKind, ScoreValue};
pub use loss::{enumerate_configs, FilterSpec, LossSpec, PreparedTarget};
pub use ranking::{best_per_filter, rank_models, summary_scores, MetricMatrix};
pub use synth::{synth_mask, synth_prob, SynthSpec};
