//! High-dimensional local projections.
//!
//! Sparse estimation of `h`-step-ahead impulse responses for large VAR-type
//! panels. For every horizon `h` the regression
//!
//! ```text
//! x_{t+h} = A_1 x_t + A_2 x_{t-1} + ... + A_p x_{t-p+1} + u_{t,h}
//! ```
//!
//! is fitted with a LASSO followed by an adaptive LASSO; the leading block
//! `A_1` equals the moving-average coefficient `B_h`, i.e. the impulse
//! response. Inference uses a node-wise LASSO precision estimate to debias
//! the first-stage fit and a thresholded long-horizon covariance for the
//! standard errors.
//!
//! Module map:
//! - [`panel`]: panel data, CSV ingestion, standardization, design arrays.
//! - [`dgp`]: VAR simulation and true moving-average coefficients.
//! - [`solver`]: weighted-L1 coordinate descent plus a brute-force oracle.
//! - [`lp`]: two-step estimation and information-criterion lag selection.
//! - [`inference`]: long-run covariance, thresholding, debiasing, bands.
//! - [`montecarlo`]: replication harness and accuracy metrics.
//! - [`cli`]: the `hdlp` command-line front end.

pub mod cli;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod lp;
pub mod montecarlo;
pub mod panel;
pub mod solver;
pub mod stats;

pub use error::{HdlpError, Result};
pub use panel::{LpDesign, PanelSeries};
pub use solver::PenaltyConfig;
