//! Long-horizon score covariance with entrywise thresholding.
//!
//! With scores `w_t = vec(u_t X_t') = X_t (x) u_t`, the estimator is
//!
//! ```text
//! Omega_h = (1/n) sum_{|t-s| < h} w_t w_s'
//! ```
//!
//! of dimension `N^2 p`. Index `k*N + i` pairs regressor `k` with response
//! `i`, matching `vec` of an `N x Np` coefficient matrix. The matrix is stored
//! densely up to [`DENSE_LIMIT`] rows; beyond that entries are computed on
//! demand from the cached `X` and `U` factors. Thresholding is recorded as a
//! level `eta` and applied on every read, so the raw values stay available.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HdlpError, Result};
use crate::panel::LpDesign;

use super::ResidualPanel;

/// Largest dimension `N^2 p` stored densely (about 134 MB of f64 at the cap).
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Dense,
    Lazy,
}

#[derive(Debug, Clone)]
struct Scores {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LongRunCov {
    horizon: usize,
    n_eff: usize,
    n_vars: usize,
    dim: usize,
    eta: f64,
    dense: Option<DMatrix<f64>>,
    scores: Option<Scores>,
}

impl LongRunCov {
    /// Wraps an explicit symmetric matrix whose index `k*n_vars + i` follows
    /// the score layout.
    pub fn from_dense(matrix: DMatrix<f64>, n_vars: usize) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || n_vars == 0 || dim % n_vars != 0 {
            return Err(HdlpError::DimensionMismatch(format!(
                "{}x{} matrix with {} variables",
                dim,
                matrix.ncols(),
                n_vars
            )));
        }
        for a in 0..dim {
            for b in 0..a {
                if matrix[(a, b)] != matrix[(b, a)] {
                    return Err(HdlpError::InvalidArgument(format!(
                        "matrix not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self {
            horizon: 1,
            n_eff: 1,
            n_vars,
            dim,
            eta: 0.0,
            dense: Some(matrix),
            scores: None,
        })
    }

    pub fn mode(&self) -> CovMode {
        if self.dense.is_some() {
            CovMode::Dense
        } else {
            CovMode::Lazy
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn effective_obs(&self) -> usize {
        self.n_eff
    }

    fn raw_entry(&self, a: usize, b: usize) -> f64 {
        if let Some(m) = &self.dense {
            return m[(a, b)];
        }
        let s = self.scores.as_ref().expect("lazy covariance keeps its scores");
        let n = self.n_vars;
        let (k, i, l, j) = (a / n, a % n, b / n, b % n);
        let rows = self.n_eff;
        let h = self.horizon;
        let mut acc = 0.0;
        for t in 0..rows {
            let wt = s.x[(t, k)] * s.u[(t, i)];
            if wt == 0.0 {
                continue;
            }
            let lo = t.saturating_sub(h - 1);
            let hi = (t + h).min(rows);
            let mut inner = 0.0;
            for r in lo..hi {
                inner += s.x[(r, l)] * s.u[(r, j)];
            }
            acc += wt * inner;
        }
        acc / rows as f64
    }

    #[inline]
    fn apply_threshold(&self, a: usize, b: usize, v: f64) -> f64 {
        if a != b && v.abs() < self.eta {
            0.0
        } else {
            v
        }
    }

    /// Entry `(a, b)` after thresholding.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        assert!(a < self.dim && b < self.dim, "index out of range");
        // mirrored so that entry(a, b) == entry(b, a) bit-for-bit
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.apply_threshold(lo, hi, self.raw_entry(lo, hi))
    }

    /// Thresholded `Np x Np` block of entries pairing response `i` with itself:
    /// `(k*N + i, l*N + i)` for all regressors `k, l`.
    pub fn response_block(&self, i: usize) -> DMatrix<f64> {
        let n = self.n_vars;
        let np = self.dim / n;
        let mut block = if let Some(m) = &self.dense {
            DMatrix::from_fn(np, np, |k, l| m[(k * n + i, l * n + i)])
        } else {
            let s = self.scores.as_ref().expect("lazy covariance keeps its scores");
            let w = DMatrix::from_fn(self.n_eff, np, |t, k| s.x[(t, k)] * s.u[(t, i)]);
            banded_outer(&w, self.horizon)
        };
        for k in 0..np {
            for l in 0..np {
                if k != l && block[(k, l)].abs() < self.eta {
                    block[(k, l)] = 0.0;
                }
            }
        }
        block
    }

    /// Full thresholded matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let raw = match &self.dense {
            Some(m) => m.clone(),
            None => {
                let s = self.scores.as_ref().expect("lazy covariance keeps its scores");
                banded_outer(&score_matrix(&s.x, &s.u), self.horizon)
            }
        };
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.apply_threshold(a, b, raw[(a, b)]))
    }
}

/// `w_t = X_t (x) u_t` stacked as rows.
fn score_matrix(x: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.ncols();
    DMatrix::from_fn(x.nrows(), x.ncols() * n, |t, c| x[(t, c / n)] * u[(t, c % n)])
}

/// `(1/n) sum_{|t-s| < h} w_t w_s'` for rows `w_t` of `w`, exactly symmetric.
fn banded_outer(w: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let rows = w.nrows();
    let mut m = w.tr_mul(w);
    for lag in 1..h.min(rows) {
        let a = w.rows(0, rows - lag);
        let b = w.rows(lag, rows - lag);
        let cross = a.tr_mul(&b);
        m += &cross;
        m += cross.transpose();
    }
    m /= rows as f64;
    let d = m.nrows();
    for a in 0..d {
        for b in (a + 1)..d {
            m[(b, a)] = m[(a, b)];
        }
    }
    m
}

/// Unthresholded estimator, dense when `N^2 p <= DENSE_LIMIT`.
pub fn omega_hat(design: &LpDesign, res: &ResidualPanel) -> Result<LongRunCov> {
    omega_hat_with_mode(design, res, None)
}

/// As [`omega_hat`] with an explicit storage request. A dense request above
/// [`DENSE_LIMIT`] falls back to lazy storage.
pub fn omega_hat_with_mode(design: &LpDesign, res: &ResidualPanel, mode: Option<CovMode>) -> Result<LongRunCov> {
    if res.u.nrows() != design.effective_obs() || res.u.ncols() != design.n_vars() {
        return Err(HdlpError::DimensionMismatch(format!(
            "residuals {}x{} for a design with {} rows and {} variables",
            res.u.nrows(),
            res.u.ncols(),
            design.effective_obs(),
            design.n_vars()
        )));
    }
    if res.horizon != design.horizon() {
        return Err(HdlpError::DimensionMismatch(format!(
            "residuals for h={} with a design for h={}",
            res.horizon,
            design.horizon()
        )));
    }
    let dim = design.n_vars() * design.n_regressors();
    let mode = match mode {
        Some(CovMode::Dense) if dim > DENSE_LIMIT => {
            log::warn!(
                "long-run covariance of dimension {dim} exceeds the dense limit {DENSE_LIMIT}; using lazy storage"
            );
            CovMode::Lazy
        }
        Some(m) => m,
        None if dim <= DENSE_LIMIT => CovMode::Dense,
        None => {
            log::info!("long-run covariance of dimension {dim} computed lazily");
            CovMode::Lazy
        }
    };
    let scores = Scores {
        x: design.x().clone(),
        u: res.u.clone(),
    };
    let dense = match mode {
        CovMode::Dense => Some(banded_outer(&score_matrix(&scores.x, &scores.u), design.horizon())),
        CovMode::Lazy => None,
    };
    Ok(LongRunCov {
        horizon: design.horizon(),
        n_eff: design.effective_obs(),
        n_vars: design.n_vars(),
        dim,
        eta: 0.0,
        dense,
        scores: Some(scores),
    })
}

/// Zeroes off-diagonal entries with magnitude below `eta`; the diagonal is
/// never touched. Thresholding an already thresholded matrix keeps the larger
/// level.
pub fn threshold(cov: &LongRunCov, eta: f64) -> Result<LongRunCov> {
    if !(eta >= 0.0) {
        return Err(HdlpError::InvalidArgument(format!("threshold must be >= 0, got {eta}")));
    }
    let mut out = cov.clone();
    out.eta = cov.eta.max(eta);
    Ok(out)
}

/// The thresholding operator on a plain square matrix.
pub fn threshold_matrix(m: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| {
        let v = m[(a, b)];
        if a != b && v.abs() < eta {
            0.0
        } else {
            v
        }
    })
}

/// `c_eta * sqrt(h log N / T_eff)`.
pub fn eta_for(n_vars: usize, t_eff: usize, h: usize, eta_scale: f64) -> f64 {
    eta_scale * ((h as f64) * (n_vars as f64).ln() / t_eff as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_var, table1_dgp};
    use crate::inference::residuals;
    use crate::lp::estimate_step1;
    use crate::panel::build_design;
    use crate::solver::PenaltyConfig;

    fn fitted(h: usize, n: usize, t: usize) -> (LpDesign, ResidualPanel) {
        let s = simulate_var(&table1_dgp(n).unwrap(), t, 100, 21).unwrap();
        let d = build_design(&s, 2, h).unwrap();
        let est = estimate_step1(&d, 0.1, &PenaltyConfig::default()).unwrap();
        let r = residuals(&d, &est).unwrap();
        (d, r)
    }

    /// Direct double sum over (t, s) pairs, independent of the lag products.
    fn brute_entry(d: &LpDesign, r: &ResidualPanel, a: usize, b: usize) -> f64 {
        let n = d.n_vars();
        let rows = d.effective_obs();
        let h = d.horizon() as isize;
        let mut acc = 0.0;
        for t in 0..rows {
            for s in 0..rows {
                if (t as isize - s as isize).abs() < h {
                    acc += d.x()[(t, a / n)] * r.u[(t, a % n)] * d.x()[(s, b / n)] * r.u[(s, b % n)];
                }
            }
        }
        acc / rows as f64
    }

    #[test]
    fn dense_lazy_and_brute_force_agree() {
        let (d, r) = fitted(3, 4, 60);
        let dense = omega_hat_with_mode(&d, &r, Some(CovMode::Dense)).unwrap();
        let lazy = omega_hat_with_mode(&d, &r, Some(CovMode::Lazy)).unwrap();
        assert_eq!(dense.mode(), CovMode::Dense);
        assert_eq!(lazy.mode(), CovMode::Lazy);
        for (a, b) in [(0, 0), (3, 17), (31, 5), (12, 12), (7, 30)] {
            let want = brute_entry(&d, &r, a, b);
            assert!((dense.entry(a, b) - want).abs() < 1e-12);
            assert!((lazy.entry(a, b) - want).abs() < 1e-12);
        }
        assert!((dense.to_dense() - lazy.to_dense()).amax() < 1e-12);
        for i in 0..4 {
            assert!((dense.response_block(i) - lazy.response_block(i)).amax() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_psd_at_h1() {
        let (d, r) = fitted(1, 4, 80);
        let cov = omega_hat(&d, &r).unwrap();
        let m = cov.to_dense();
        assert_eq!(m, m.transpose());
        let min_eig = m.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-8, "{min_eig}");
    }

    #[test]
    fn threshold_levels() {
        let (d, r) = fitted(2, 4, 80);
        let cov = omega_hat(&d, &r).unwrap();
        let raw = cov.to_dense();
        assert_eq!(threshold(&cov, 0.0).unwrap().to_dense(), raw);
        let all = threshold(&cov, f64::INFINITY).unwrap().to_dense();
        assert_eq!(all, DMatrix::from_diagonal(&raw.diagonal()));
        assert!(threshold(&cov, -1.0).is_err());
        assert!(threshold(&cov, f64::NAN).is_err());
        let lazy = threshold(&omega_hat_with_mode(&d, &r, Some(CovMode::Lazy)).unwrap(), 0.3).unwrap();
        assert!((lazy.to_dense() - threshold_matrix(&raw, 0.3)).amax() < 1e-12);
    }

    #[test]
    fn off_diagonal_threshold_example() {
        let m = DMatrix::from_fn(4, 4, |a, b| if a == b { 1.0 + a as f64 } else { 0.1 });
        let cov = LongRunCov::from_dense(m.clone(), 1).unwrap();
        assert_eq!(
            threshold(&cov, 0.2).unwrap().to_dense(),
            DMatrix::from_diagonal(&m.diagonal())
        );
        assert!(LongRunCov::from_dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]), 1).is_err());
    }

    #[test]
    fn residual_scaling_is_quadratic() {
        let (d, r) = fitted(2, 4, 60);
        let doubled = ResidualPanel {
            u: &r.u * 2.0,
            ..r.clone()
        };
        let a = omega_hat(&d, &r).unwrap().to_dense();
        let b = omega_hat(&d, &doubled).unwrap().to_dense();
        assert!((b - a * 4.0).amax() < 1e-10);
    }

    #[test]
    fn mismatched_residuals_rejected() {
        let (d, r) = fitted(2, 4, 60);
        let (d3, _) = fitted(3, 4, 60);
        assert!(omega_hat(&d3, &r).is_err());
        let short = ResidualPanel {
            u: r.u.rows(0, 10).into_owned(),
            ..r
        };
        assert!(omega_hat(&d, &short).is_err());
    }
}
