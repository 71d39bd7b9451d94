//! Two-step sparse local projection and lag selection.
//!
//! The vectorized objective `(1/n) sum_t ||x_{t+h} - A X_t||^2 + gamma ||vec A||_1`
//! separates over the rows of `A`, so each horizon is `N` weighted LASSOs on
//! one shared design. Step 1 is a plain LASSO; step 2 reweights the penalty
//! by `|a|^(-zeta)` from step 1 (zeros stay frozen) and yields the sparsity
//! mask.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HdlpError, Result, ResultExt};
use crate::panel::{build_design_aligned, LpDesign, PanelSeries};
use crate::solver::{solve_gram, PenaltyConfig};

/// Power of `h` in the LASSO tuning rate.
pub const HORIZON_EXPONENT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Lasso,
    Adaptive,
    Debiased,
}

/// Coefficient matrix `(A_1, ..., A_p)` of one horizon, `N x Np`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefEstimate {
    pub a_tilde: DMatrix<f64>,
    /// `true` where the coefficient is retained.
    pub mask: DMatrix<bool>,
    pub stage: Stage,
    pub horizon: usize,
    pub lags: usize,
    pub gamma_used: f64,
}

impl CoefEstimate {
    pub fn n_vars(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// Impulse-response block `A_1`.
    pub fn impulse_block(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        self.a_tilde.columns(0, n).into_owned()
    }

    pub fn mask_block(&self) -> DMatrix<bool> {
        let n = self.n_vars();
        self.mask.columns(0, n).into_owned()
    }

    /// Number of retained coefficients.
    pub fn support_size(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    fn nonzero_mask(a: &DMatrix<f64>) -> DMatrix<bool> {
        a.map(|v| v != 0.0)
    }
}

/// `c_gamma * h^(1/5) * sqrt(log N / T_eff)`.
pub fn gamma_for(n_vars: usize, t_eff: usize, h: usize, config: &PenaltyConfig) -> Result<f64> {
    if n_vars < 2 {
        return Err(HdlpError::InvalidArgument(format!(
            "the tuning rate needs N >= 2 (log N > 0), got N={n_vars}"
        )));
    }
    if t_eff < 2 || h == 0 {
        return Err(HdlpError::InvalidArgument(format!(
            "need T_eff >= 2 and h >= 1, got {t_eff}, {h}"
        )));
    }
    Ok(config.gamma_scale * (h as f64).powf(HORIZON_EXPONENT) * ((n_vars as f64).ln() / t_eff as f64).sqrt())
}

/// `c_xi * sqrt(log N / T_eff)`.
pub fn xi_for(n_vars: usize, t_eff: usize, config: &PenaltyConfig) -> Result<f64> {
    if n_vars < 2 || t_eff < 2 {
        return Err(HdlpError::InvalidArgument(format!(
            "the lag penalty rate needs N >= 2 and T_eff >= 2, got {n_vars}, {t_eff}"
        )));
    }
    Ok(config.xi_scale * ((n_vars as f64).ln() / t_eff as f64).sqrt())
}

/// Solves the `N` row problems with per-row weights (rows of `weights`).
fn fit_rows(design: &LpDesign, weights: &DMatrix<f64>, gamma: f64, config: &PenaltyConfig) -> Result<DMatrix<f64>> {
    let gram = design.gram();
    let cross = design.cross();
    let n = design.n_vars();
    let rows: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let w: Vec<f64> = weights.row(i).iter().copied().collect();
            solve_gram(gram, cross.column(i).as_slice(), &w, gamma, config)
                .map(|fit| fit.coef)
                .context_with(|| format!("response {i}"))
        })
        .collect();
    let mut a = DMatrix::zeros(n, design.n_regressors());
    for (i, row) in rows.into_iter().enumerate() {
        a.row_mut(i).copy_from(&row?.transpose());
    }
    Ok(a)
}

/// Step 1: plain LASSO.
pub fn estimate_step1(design: &LpDesign, gamma: f64, config: &PenaltyConfig) -> Result<CoefEstimate> {
    let weights = DMatrix::from_element(design.n_vars(), design.n_regressors(), 1.0);
    let a = fit_rows(design, &weights, gamma, config)?;
    Ok(CoefEstimate {
        mask: CoefEstimate::nonzero_mask(&a),
        a_tilde: a,
        stage: Stage::Lasso,
        horizon: design.horizon(),
        lags: design.lags(),
        gamma_used: gamma,
    })
}

/// Adaptive weights `|a|^(-zeta)`, `+inf` where `a == 0`.
pub fn adaptive_weights(step1: &CoefEstimate, zeta: f64) -> DMatrix<f64> {
    step1
        .a_tilde
        .map(|a| if a == 0.0 { f64::INFINITY } else { a.abs().powf(-zeta) })
}

/// Step 2: adaptive LASSO with the same `gamma`; the result's mask is the
/// identified sparsity pattern.
pub fn estimate_step2(
    design: &LpDesign,
    step1: &CoefEstimate,
    gamma: f64,
    config: &PenaltyConfig,
) -> Result<CoefEstimate> {
    if step1.stage != Stage::Lasso {
        return Err(HdlpError::InvalidArgument(format!(
            "step 2 needs a lasso-stage input, got {:?}",
            step1.stage
        )));
    }
    if step1.a_tilde.shape() != (design.n_vars(), design.n_regressors()) {
        return Err(HdlpError::DimensionMismatch(
            "step-1 estimate does not match the design".into(),
        ));
    }
    let weights = adaptive_weights(step1, config.zeta);
    let a = fit_rows(design, &weights, gamma, config)?;
    Ok(CoefEstimate {
        mask: CoefEstimate::nonzero_mask(&a),
        a_tilde: a,
        stage: Stage::Adaptive,
        horizon: design.horizon(),
        lags: design.lags(),
        gamma_used: gamma,
    })
}

/// `(1/n) sum_t ||x_{t+h} - A X_t||^2`.
pub fn mean_squared_fit(design: &LpDesign, a_tilde: &DMatrix<f64>) -> f64 {
    let resid = design.y() - design.x() * a_tilde.transpose();
    resid.norm_squared() / design.effective_obs() as f64
}

/// In-sample step-1 fit with `p_cand` lags plus `p_cand * xi`, on the sample
/// aligned to `p_cand` lags.
pub fn information_criterion(
    series: &PanelSeries,
    p_cand: usize,
    h: usize,
    xi: f64,
    config: &PenaltyConfig,
) -> Result<f64> {
    information_criterion_aligned(series, p_cand, p_cand, h, xi, config)
}

/// Information criterion on the sample aligned to `max_lag` lags, so that
/// values for different `p_cand <= max_lag` are comparable.
pub fn information_criterion_aligned(
    series: &PanelSeries,
    p_cand: usize,
    max_lag: usize,
    h: usize,
    xi: f64,
    config: &PenaltyConfig,
) -> Result<f64> {
    let design = build_design_aligned(series, p_cand, h, max_lag)?;
    let gamma = gamma_for(series.n_vars(), design.effective_obs(), h, config)?;
    let fit = estimate_step1(&design, gamma, config)?;
    Ok(mean_squared_fit(&design, &fit.a_tilde) + p_cand as f64 * xi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    /// Lag chosen at the smallest selection horizon.
    pub p_hat: usize,
    pub by_horizon: BTreeMap<usize, usize>,
    /// `IC(1), ..., IC(p_max)` per selection horizon.
    pub criteria: BTreeMap<usize, Vec<f64>>,
}

/// Minimizes the information criterion over `1..=p_max` at each horizon in
/// `h_set`; ties go to the smaller lag.
pub fn select_lag(series: &PanelSeries, h_set: &[usize], p_max: usize, config: &PenaltyConfig) -> Result<LagSelection> {
    if p_max == 0 {
        return Err(HdlpError::InvalidArgument("p_max must be >= 1".into()));
    }
    if 2 * p_max >= series.n_obs() {
        return Err(HdlpError::InvalidArgument(format!(
            "p_max={p_max} must be below T/2 (T={})",
            series.n_obs()
        )));
    }
    if h_set.is_empty() {
        return Err(HdlpError::InvalidArgument("selection horizon set is empty".into()));
    }
    let mut by_horizon = BTreeMap::new();
    let mut criteria = BTreeMap::new();
    for &h in h_set {
        let t_eff = build_design_aligned(series, 1, h, p_max)?.effective_obs();
        let xi = xi_for(series.n_vars(), t_eff, config)?;
        let values = (1..=p_max)
            .map(|p| {
                information_criterion_aligned(series, p, p_max, h, xi, config)
                    .context_with(|| format!("lag selection at h={h}, p={p}"))
            })
            .collect::<Result<Vec<f64>>>()?;
        by_horizon.insert(h, argmin_first(&values) + 1);
        criteria.insert(h, values);
    }
    let smallest = *h_set.iter().min().expect("nonempty");
    Ok(LagSelection {
        p_hat: by_horizon[&smallest],
        by_horizon,
        criteria,
    })
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_var, table1_dgp, white_noise};
    use crate::panel::build_design;
    use crate::solver::{lasso_oracle, LassoProblem};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_rate() {
        let cfg = PenaltyConfig {
            gamma_scale: 1.0,
            ..Default::default()
        };
        let g = gamma_for(20, 299, 1, &cfg).unwrap();
        // sqrt(ln 20 / 299)
        assert_abs_diff_eq!(g, 0.100_095_811_518_055_85, epsilon = 1e-12);
        let g2 = gamma_for(
            20,
            299,
            1,
            &PenaltyConfig {
                gamma_scale: 2.0,
                ..cfg
            },
        )
        .unwrap();
        assert_abs_diff_eq!(g2, 2.0 * g, epsilon = 1e-15);
        let g32 = gamma_for(20, 299, 32, &cfg).unwrap();
        assert_abs_diff_eq!(g32 / g, 2.0, epsilon = 1e-12);
        assert!(gamma_for(1, 299, 1, &cfg).is_err());
    }

    #[test]
    fn huge_gamma_gives_zero() {
        let s = simulate_var(&table1_dgp(4).unwrap(), 100, 100, 1).unwrap();
        let d = build_design(&s, 2, 1).unwrap();
        let est = estimate_step1(&d, 1e6, &PenaltyConfig::default()).unwrap();
        assert_eq!(est.a_tilde, DMatrix::zeros(4, 8));
        assert_eq!(est.support_size(), 0);
        let step2 = estimate_step2(&d, &est, 1e6, &PenaltyConfig::default()).unwrap();
        assert_eq!(step2.a_tilde, DMatrix::zeros(4, 8));
    }

    #[test]
    fn white_noise_unpenalized_is_small() {
        let s = simulate_var(&white_noise(3).unwrap(), 5000, 0, 2).unwrap();
        let d = build_design(&s, 1, 1).unwrap();
        let est = estimate_step1(&d, 0.0, &PenaltyConfig::default()).unwrap();
        assert!(est.a_tilde.amax() < 4.0 / (5000f64).sqrt());
    }

    #[test]
    fn rows_match_joint_oracle() {
        // N=3, p=2 -> three rows of six coefficients each, each checked against
        // the brute-force minimizer of its own row problem.
        let s = simulate_var(&table1_dgp(4).unwrap(), 60, 50, 9).unwrap();
        let values = s.values().columns(0, 3).into_owned();
        let s = PanelSeries::new(values, 1, None).unwrap();
        let d = build_design(&s, 2, 1).unwrap();
        let gamma = 0.05;
        let cfg = PenaltyConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let est = estimate_step1(&d, gamma, &cfg).unwrap();
        for i in 0..3 {
            let p = LassoProblem::unweighted(d.x().clone(), d.response(i), gamma).unwrap();
            let or = lasso_oracle(&p).unwrap();
            for j in 0..6 {
                assert_abs_diff_eq!(est.a_tilde[(i, j)], or[j], epsilon = 1e-10);
            }
        }
        // the vectorized objective equals the sum of row objectives
        let joint = mean_squared_fit(&d, &est.a_tilde) + gamma * est.a_tilde.lp_norm(1);
        let rows: f64 = (0..3)
            .map(|i| {
                let p = LassoProblem::unweighted(d.x().clone(), d.response(i), gamma).unwrap();
                p.objective(&est.a_tilde.row(i).transpose())
            })
            .sum();
        assert_abs_diff_eq!(joint, rows, epsilon = 1e-12);
    }

    #[test]
    fn step2_support_refines_step1() {
        let s = simulate_var(&table1_dgp(10).unwrap(), 300, 200, 4).unwrap();
        let d = build_design(&s, 2, 1).unwrap();
        let cfg = PenaltyConfig::default();
        let gamma = gamma_for(10, d.effective_obs(), 1, &cfg).unwrap();
        let s1 = estimate_step1(&d, gamma, &cfg).unwrap();
        let s2 = estimate_step2(&d, &s1, gamma, &cfg).unwrap();
        assert_eq!(s2.stage, Stage::Adaptive);
        for (m2, a1) in s2.mask.iter().zip(s1.a_tilde.iter()) {
            assert!(!*m2 || *a1 != 0.0);
        }
        assert!(s2.support_size() <= s1.support_size());
    }

    #[test]
    fn step2_small_zeta_approaches_lasso() {
        let s = simulate_var(&table1_dgp(6).unwrap(), 2000, 200, 5).unwrap();
        let d = build_design(&s, 1, 1).unwrap();
        let cfg = PenaltyConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let gamma = 0.02;
        let s1 = estimate_step1(&d, gamma, &cfg).unwrap();
        let s2 = estimate_step2(&d, &s1, gamma, &PenaltyConfig { zeta: 1e-9, ..cfg }).unwrap();
        assert!((&s2.a_tilde - &s1.a_tilde).amax() < 1e-6);
    }

    #[test]
    fn step2_requires_lasso_stage() {
        let s = simulate_var(&table1_dgp(4).unwrap(), 100, 100, 1).unwrap();
        let d = build_design(&s, 1, 1).unwrap();
        let cfg = PenaltyConfig::default();
        let s1 = estimate_step1(&d, 0.1, &cfg).unwrap();
        let s2 = estimate_step2(&d, &s1, 0.1, &cfg).unwrap();
        assert!(estimate_step2(&d, &s2, 0.1, &cfg).is_err());
    }

    #[test]
    fn ic_without_penalty_is_monotone_and_ties_go_low() {
        let s = simulate_var(&table1_dgp(4).unwrap(), 200, 100, 6).unwrap();
        let cfg = PenaltyConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for p in 1..=4 {
            // gamma_scale tiny approximates the unpenalized nested fits
            let c = PenaltyConfig {
                gamma_scale: 1e-9,
                ..cfg
            };
            let ic = information_criterion_aligned(&s, p, 4, 1, 0.0, &c).unwrap();
            assert!(ic <= prev + 1e-9);
            prev = ic;
        }
        assert_eq!(argmin_first(&[1.0, 0.5, 0.5, 0.7]), 1);
        assert_eq!(argmin_first(&[2.0, 2.0]), 0);
    }

    #[test]
    fn ic_strictly_increasing_in_xi() {
        let s = simulate_var(&table1_dgp(4).unwrap(), 200, 100, 6).unwrap();
        let cfg = PenaltyConfig::default();
        let a = information_criterion(&s, 2, 1, 0.1, &cfg).unwrap();
        let b = information_criterion(&s, 2, 1, 0.2, &cfg).unwrap();
        assert_abs_diff_eq!(b - a, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn select_lag_argument_checks() {
        let s = simulate_var(&table1_dgp(4).unwrap(), 20, 100, 6).unwrap();
        let cfg = PenaltyConfig::default();
        assert!(select_lag(&s, &[1], 10, &cfg).is_err());
        assert!(select_lag(&s, &[], 2, &cfg).is_err());
    }

    #[test]
    fn select_lag_finds_two_lags() {
        let s = simulate_var(&table1_dgp(20).unwrap(), 500, 500, 12).unwrap();
        let sel = select_lag(&s, &[1, 2], 5, &PenaltyConfig::default()).unwrap();
        assert_eq!(sel.by_horizon[&1], 2);
        assert_eq!(sel.p_hat, 2);
        assert_eq!(sel.criteria[&1].len(), 5);
    }
}
