//! Node-wise LASSO precision estimate on the regressor block.
//!
//! The node-wise problem on the Kronecker regressors `Z_t = X_t (x) I_N`
//! splits into a part on the `Np` regressors sharing the node's response
//! row and a part on the rest; the latter is minimized at zero. Only `Np`
//! regressions of one column of `X` on the others are needed, and the full
//! precision matrix is `Theta (x) I_N`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HdlpError, Result};
use crate::panel::LpDesign;
use crate::solver::{solve_gram, PenaltyConfig};

/// Smallest admissible `tau_j^2`.
pub const TAU2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    /// `Np x Np`; row `j` is `(e_j - b_j) / tau_j^2` with `b_j` placed around
    /// a zero at position `j`.
    pub theta: DMatrix<f64>,
    pub tau2: DVector<f64>,
    /// Node coefficients, each of length `Np - 1` in natural order.
    pub b_hats: Vec<DVector<f64>>,
    pub gamma_tilde: f64,
    /// Nodes whose residual variance vanished (perfectly explained columns);
    /// `tau^2` there is carried by the penalty term alone.
    pub flagged: Vec<usize>,
}

/// Regresses each column of `X` on the remaining columns with penalty
/// `2 * gamma_tilde`, then sets
/// `tau_j^2 = (1/n)||X_j - X_{-j} b_j||^2 + gamma_tilde ||b_j||_1`.
pub fn nodewise(design: &LpDesign, gamma_tilde: f64, config: &PenaltyConfig) -> Result<PrecisionEstimate> {
    if !(gamma_tilde >= 0.0) {
        return Err(HdlpError::InvalidArgument(format!(
            "gamma_tilde must be >= 0, got {gamma_tilde}"
        )));
    }
    let gram = design.gram();
    let x = design.x();
    let np = design.n_regressors();
    let n = design.effective_obs() as f64;

    let nodes: Vec<Result<(DVector<f64>, f64, bool)>> = (0..np)
        .into_par_iter()
        .map(|j| {
            let mut weights = vec![1.0; np];
            weights[j] = f64::INFINITY;
            let cross: Vec<f64> = gram.column(j).iter().copied().collect();
            let fit = solve_gram(gram, &cross, &weights, 2.0 * gamma_tilde, config)
                .map_err(|e| e.context(format!("node-wise regression {j}")))?;
            let resid = x.column(j) - x * &fit.coef;
            let rss = resid.norm_squared() / n;
            let tau2 = rss + gamma_tilde * fit.coef.lp_norm(1);
            if !(tau2 > TAU2_FLOOR) {
                return Err(HdlpError::DegenerateNode { node: j, tau2 });
            }
            let flagged = rss <= 1e-8 * gram[(j, j)].max(f64::MIN_POSITIVE);
            Ok((fit.coef, tau2, flagged))
        })
        .collect();

    let mut theta = DMatrix::zeros(np, np);
    let mut tau2 = DVector::zeros(np);
    let mut b_hats = Vec::with_capacity(np);
    let mut flagged = Vec::new();
    for (j, node) in nodes.into_iter().enumerate() {
        let (coef, t2, flag) = node?;
        for k in 0..np {
            theta[(j, k)] = if k == j { 1.0 } else { -coef[k] } / t2;
        }
        tau2[j] = t2;
        b_hats.push(DVector::from_iterator(
            np - 1,
            coef.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v),
        ));
        if flag {
            flagged.push(j);
        }
    }
    Ok(PrecisionEstimate {
        theta,
        tau2,
        b_hats,
        gamma_tilde,
        flagged,
    })
}
