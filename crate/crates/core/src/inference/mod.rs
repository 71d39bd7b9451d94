//! Debiased impulse responses with standard errors and confidence bands.
//!
//! Per horizon the pipeline is: LASSO, adaptive LASSO (sparsity mask),
//! node-wise precision `Theta`, debiasing of the LASSO fit, masking with the
//! adaptive support, and a sandwich variance built from `Theta` and the
//! thresholded long-run covariance.
//!
//! The Kronecker structure is never materialized:
//! `(X_t (x) I_N) u = vec(u X_t')` and `(Theta (x) I_N) vec(R) = vec(R Theta')`.

mod covariance;
mod nodewise;

pub use covariance::{
    eta_for, omega_hat, omega_hat_with_mode, threshold, threshold_matrix, CovMode, LongRunCov, DENSE_LIMIT,
};
pub use nodewise::{nodewise, PrecisionEstimate, TAU2_FLOOR};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HdlpError, Result, ResultExt};
use crate::lp::{estimate_step1, estimate_step2, gamma_for, CoefEstimate, Stage};
use crate::panel::{build_design, LpDesign, PanelSeries};
use crate::solver::PenaltyConfig;
use crate::stats::normal_quantile;

/// Which coefficient estimate supplies the residuals of the long-run covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualSource {
    /// Step-1 LASSO fit.
    Initial,
    /// Step-2 adaptive LASSO fit.
    #[default]
    Adaptive,
}

/// `u_t = x_{t+h} - A X_t` stacked as an `n x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    pub u: DMatrix<f64>,
    pub horizon: usize,
    pub stage: Stage,
}

pub fn residuals(design: &LpDesign, est: &CoefEstimate) -> Result<ResidualPanel> {
    if est.a_tilde.shape() != (design.n_vars(), design.n_regressors()) {
        return Err(HdlpError::DimensionMismatch(format!(
            "coefficients {:?} for a design with N={} and Np={}",
            est.a_tilde.shape(),
            design.n_vars(),
            design.n_regressors()
        )));
    }
    Ok(ResidualPanel {
        u: design.y() - design.x() * est.a_tilde.transpose(),
        horizon: design.horizon(),
        stage: est.stage,
    })
}

/// `A + (1/n) R' X Theta'` with `R` the residuals of the step-1 fit.
pub fn debias(design: &LpDesign, step1: &CoefEstimate, prec: &PrecisionEstimate) -> Result<CoefEstimate> {
    if step1.stage != Stage::Lasso {
        return Err(HdlpError::InvalidArgument(format!(
            "debiasing applies to the lasso-stage fit, got {:?}",
            step1.stage
        )));
    }
    let np = design.n_regressors();
    if prec.theta.shape() != (np, np) {
        return Err(HdlpError::DimensionMismatch(format!(
            "precision is {:?}, design has {np} regressors",
            prec.theta.shape()
        )));
    }
    let r = residuals(design, step1)?;
    let n = design.effective_obs() as f64;
    let correction = r.u.tr_mul(design.x()) * prec.theta.transpose() / n;
    let a = &step1.a_tilde + correction;
    Ok(CoefEstimate {
        mask: DMatrix::from_element(a.nrows(), a.ncols(), true),
        a_tilde: a,
        stage: Stage::Debiased,
        horizon: step1.horizon,
        lags: step1.lags,
        gamma_used: step1.gamma_used,
    })
}

/// Zeroes the debiased coefficients outside the adaptive support.
pub fn apply_sparsity(debiased: &CoefEstimate, mask_source: &CoefEstimate) -> Result<CoefEstimate> {
    if mask_source.stage != Stage::Adaptive {
        return Err(HdlpError::InvalidArgument(format!(
            "mask must come from the adaptive stage, got {:?}",
            mask_source.stage
        )));
    }
    if debiased.a_tilde.shape() != mask_source.mask.shape() {
        return Err(HdlpError::DimensionMismatch(format!(
            "{:?} estimate with a {:?} mask",
            debiased.a_tilde.shape(),
            mask_source.mask.shape()
        )));
    }
    let a = debiased
        .a_tilde
        .zip_map(&mask_source.mask, |v, keep| if keep { v } else { 0.0 });
    Ok(CoefEstimate {
        a_tilde: a,
        mask: mask_source.mask.clone(),
        stage: Stage::Debiased,
        ..debiased.clone()
    })
}

/// Sandwich variance of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefVariance {
    pub variance: f64,
    /// The quadratic form came out negative (thresholding can break
    /// positive semidefiniteness) and was clamped to zero.
    pub clamped: bool,
}

impl CoefVariance {
    pub fn standard_error(&self, n_eff: usize) -> f64 {
        (self.variance / n_eff as f64).sqrt()
    }
}

fn quadratic_form(theta_row: &[f64], block: &DMatrix<f64>) -> CoefVariance {
    let k = theta_row.len();
    let mut q = 0.0;
    for a in 0..k {
        if theta_row[a] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for b in 0..k {
            inner += block[(a, b)] * theta_row[b];
        }
        q += theta_row[a] * inner;
    }
    if q < 0.0 {
        CoefVariance {
            variance: 0.0,
            clamped: true,
        }
    } else {
        CoefVariance {
            variance: q,
            clamped: false,
        }
    }
}

/// Variance of coefficient `(row, col)` of the `N x Np` coefficient matrix:
/// `v' G(Omega) v` with `v = (Theta row col) (x) e_row`.
pub fn coef_variance(row: usize, col: usize, prec: &PrecisionEstimate, cov: &LongRunCov) -> Result<CoefVariance> {
    let np = prec.theta.nrows();
    if cov.dim() % np != 0 {
        return Err(HdlpError::DimensionMismatch(format!(
            "covariance of dimension {} with {np} regressors",
            cov.dim()
        )));
    }
    let n = cov.dim() / np;
    if row >= n || col >= np {
        return Err(HdlpError::InvalidArgument(format!(
            "coefficient ({row}, {col}) outside {n}x{np}"
        )));
    }
    let theta_row: Vec<f64> = prec.theta.row(col).iter().copied().collect();
    Ok(quadratic_form(&theta_row, &cov.response_block(row)))
}

/// All estimation stages for one horizon.
#[derive(Debug, Clone)]
pub struct HorizonFit {
    pub design: LpDesign,
    pub gamma: f64,
    pub step1: CoefEstimate,
    pub adaptive: CoefEstimate,
    pub precision: PrecisionEstimate,
    /// Debiased estimate of every coefficient.
    pub debiased: CoefEstimate,
    /// `debiased` restricted to the adaptive support.
    pub sparse_debiased: CoefEstimate,
}

/// Steps 2 and 3 of the estimation algorithm at one horizon, given `p`.
pub fn fit_horizon(series: &PanelSeries, p: usize, h: usize, config: &PenaltyConfig) -> Result<HorizonFit> {
    let design = build_design(series, p, h)?;
    let gamma = gamma_for(series.n_vars(), design.effective_obs(), h, config)?;
    let step1 = estimate_step1(&design, gamma, config)?;
    let adaptive = estimate_step2(&design, &step1, gamma, config)?;
    let precision = nodewise(&design, gamma, config)?;
    let debiased = debias(&design, &step1, &precision)?;
    let sparse_debiased = apply_sparsity(&debiased, &adaptive)?;
    Ok(HorizonFit {
        design,
        gamma,
        step1,
        adaptive,
        precision,
        debiased,
        sparse_debiased,
    })
}

/// Impulse responses `A_1` at one horizon with per-entry standard errors.
///
/// Row `i`, column `j` is the response of variable `i` to a shock in `j`.
/// Bands exist for every entry; `selected` marks the adaptive support, the
/// entries a report would show.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfBand {
    pub horizon: usize,
    pub lags: usize,
    pub level: f64,
    /// Debiased estimate.
    pub point: DMatrix<f64>,
    pub adaptive: DMatrix<f64>,
    pub selected: DMatrix<bool>,
    pub se: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub clamped: DMatrix<bool>,
    pub gamma: f64,
    pub eta: f64,
    pub effective_obs: usize,
}

impl IrfBand {
    pub fn covers(&self, i: usize, j: usize, truth: f64) -> bool {
        self.lower[(i, j)] <= truth && truth <= self.upper[(i, j)]
    }
}

/// Confidence bands for an already fitted horizon.
pub fn bands_for_fit(fit: &HorizonFit, level: f64, config: &PenaltyConfig) -> Result<IrfBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(HdlpError::InvalidArgument(format!(
            "level must be in (0, 1), got {level}"
        )));
    }
    let design = &fit.design;
    let n = design.n_vars();
    let h = design.horizon();
    let n_eff = design.effective_obs();
    let source = match config.residual_source {
        ResidualSource::Initial => &fit.step1,
        ResidualSource::Adaptive => &fit.adaptive,
    };
    let res = residuals(design, source)?;
    let eta = eta_for(n, n_eff, h, config.eta_scale);
    let cov = threshold(&omega_hat(design, &res)?, eta)?;
    let z = normal_quantile(0.5 * (1.0 + level));

    let point = fit.debiased.impulse_block();
    let mut se = DMatrix::zeros(n, n);
    let mut clamped = DMatrix::from_element(n, n, false);
    for i in 0..n {
        let block = cov.response_block(i);
        for j in 0..n {
            let theta_row: Vec<f64> = fit.precision.theta.row(j).iter().copied().collect();
            let v = quadratic_form(&theta_row, &block);
            se[(i, j)] = v.standard_error(n_eff);
            clamped[(i, j)] = v.clamped;
        }
    }
    Ok(IrfBand {
        horizon: h,
        lags: design.lags(),
        level,
        lower: &point - &se * z,
        upper: &point + &se * z,
        point,
        adaptive: fit.adaptive.impulse_block(),
        selected: fit.adaptive.mask_block(),
        se,
        clamped,
        gamma: fit.gamma,
        eta,
        effective_obs: n_eff,
    })
}

/// Full pipeline at each horizon with `p` lags.
pub fn irf_with_bands(
    series: &PanelSeries,
    p: usize,
    horizons: &[usize],
    level: f64,
    config: &PenaltyConfig,
) -> Result<Vec<IrfBand>> {
    config.validate()?;
    if horizons.is_empty() {
        return Err(HdlpError::InvalidArgument("no horizons requested".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HdlpError::InvalidArgument(format!(
            "level must be in (0, 1), got {level}"
        )));
    }
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || 2 * h >= series.n_obs() {
                return Err(HdlpError::InvalidArgument(format!(
                    "horizon {h} must be in [1, T/2) with T={}",
                    series.n_obs()
                )));
            }
            fit_horizon(series, p, h, config)
                .and_then(|fit| bands_for_fit(&fit, level, config))
                .context_with(|| format!("horizon {h}"))
        })
        .collect()
}
