#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
//! Compact representation of long-term echosounder time series.
//!
//! The pipeline restructures a multi-frequency echogram into a `D × T`
//! matrix (one column per day), removes sparse outliers with Principal
//! Component Pursuit ([`pcp`]), and factors the low-rank remainder into a few
//! nonnegative daily patterns with temporally smooth activations ([`tsnmf`]).
//! [`model_select`] helps choose the rank and smoothness weight, and
//! [`summarize`] clusters days by their activations.

pub mod echogram;
pub mod error;
pub mod hclust;
pub mod io;
mod linalg;
pub mod model_select;
pub mod pcp;
pub mod pipeline;
pub mod summarize;
pub mod synth;
pub mod tsnmf;

pub use echogram::{
    bin_mvbs, fill_missing, flatten, shift_nonnegative, unflatten, Axes, DailyImages, DataMatrix,
    EchogramCube, FillPolicy, Layout, SvGrid,
};
pub use error::{Error, Result};
pub use linalg::spectral_norm;
pub use model_select::{LCurveReport, RankScanReport};
pub use pcp::{PcpConfig, PcpResult};
pub use summarize::ClusterSummary;
pub use synth::SynthSpec;
pub use tsnmf::{CostParts, NmfEnsemble, NmfModel, TsnmfConfig};

pub use chrono::NaiveDate;
pub use nalgebra::DMatrix;
