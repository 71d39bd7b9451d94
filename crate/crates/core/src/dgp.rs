//! VAR(p) simulation and true moving-average coefficients.
//!
//! A stationary VAR(p) `x_t = a_1 x_{t-1} + ... + a_p x_{t-p} + e_t` has the
//! moving-average form `x_t = sum_l B_l e_{t-l}` with `B_l = S C^l S'`, where
//! `C` is the companion matrix and `S = (I_N, 0)`. `B_h` is the true impulse
//! response at horizon `h`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HdlpError, Result};
use crate::panel::PanelSeries;

/// Burn-in periods discarded by default before the retained sample.
pub const DEFAULT_BURN_IN: usize = 500;

/// Coefficient matrices `(a_1, ..., a_p)` of a stationary VAR.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients {
    mats: Vec<DMatrix<f64>>,
    spectral_radius: f64,
}

impl VarCoefficients {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| HdlpError::InvalidArgument("VAR needs at least one lag matrix".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(HdlpError::InvalidArgument("VAR dimension must be >= 1".into()));
        }
        for (j, m) in mats.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(HdlpError::DimensionMismatch(format!(
                    "lag matrix {} is {}x{}, expected {n}x{n}",
                    j + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let radius = spectral_radius(&companion_matrix(&mats));
        if !(radius < 1.0) {
            return Err(HdlpError::Nonstationary { radius });
        }
        Ok(Self {
            mats,
            spectral_radius: radius,
        })
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn n_vars(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn order(&self) -> usize {
        self.mats.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
}

/// Companion matrix with `(a_1 ... a_p)` as the top block row over a shifted
/// identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionForm {
    matrix: DMatrix<f64>,
    n_vars: usize,
    spectral_radius: f64,
}

impl CompanionForm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
}

fn companion_matrix(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    let p = mats.len();
    let mut c = DMatrix::zeros(n * p, n * p);
    for (j, a) in mats.iter().enumerate() {
        c.view_mut((0, j * n), (n, n)).copy_from(a);
    }
    for k in n..n * p {
        c[(k, k - n)] = 1.0;
    }
    c
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.amax() == 0.0 {
        return 0.0;
    }
    match m.clone().try_schur(1e-14, 100 * m.nrows().max(10)) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(m),
    }
}

/// `||M^(2^k)||^(2^-k)` with rescaling; used when the QR iteration stalls
/// (nilpotent or otherwise defective matrices).
fn gelfand_radius(m: &DMatrix<f64>) -> f64 {
    let mut power = m.clone();
    let mut log_scale = 0.0_f64;
    let mut estimate = m.norm();
    for k in 1..=30 {
        power = &power * &power;
        log_scale *= 2.0;
        let norm = power.norm();
        if norm == 0.0 {
            return 0.0;
        }
        power /= norm;
        log_scale += norm.ln();
        estimate = (log_scale / 2f64.powi(k)).exp();
    }
    estimate
}

pub fn companion(coefs: &VarCoefficients) -> Result<CompanionForm> {
    let matrix = companion_matrix(coefs.mats());
    let radius = spectral_radius(&matrix);
    if !(radius < 1.0) {
        return Err(HdlpError::Nonstationary { radius });
    }
    Ok(CompanionForm {
        matrix,
        n_vars: coefs.n_vars(),
        spectral_radius: radius,
    })
}

/// `B_ell = S C^ell S'`: the top-left `N x N` block of `C^ell`.
pub fn ma_coefficient(cf: &CompanionForm, ell: usize) -> DMatrix<f64> {
    ma_coefficients(cf, ell).pop().expect("at least B_0")
}

/// `B_0, ..., B_max` in order.
pub fn ma_coefficients(cf: &CompanionForm, max_ell: usize) -> Vec<DMatrix<f64>> {
    let n = cf.n_vars;
    let np = cf.matrix.nrows();
    // S C^ell, an N x Np block row
    let mut top = DMatrix::zeros(n, np);
    top.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut out = Vec::with_capacity(max_ell + 1);
    out.push(top.columns(0, n).into_owned());
    for _ in 0..max_ell {
        top = &top * &cf.matrix;
        out.push(top.columns(0, n).into_owned());
    }
    out
}

/// Simulates `t_obs` observations plus `p - 1` retained pre-sample rows from
/// zero initial conditions with i.i.d. standard normal innovations, after
/// discarding `burn_in` periods. Replication streams are keyed by `seed`.
pub fn simulate_var(coefs: &VarCoefficients, t_obs: usize, burn_in: usize, seed: u64) -> Result<PanelSeries> {
    if t_obs < 2 {
        return Err(HdlpError::InvalidArgument(format!("T must be >= 2, got {t_obs}")));
    }
    let n = coefs.n_vars();
    let p = coefs.order();
    let pad = p - 1;
    let total = burn_in + pad + t_obs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // history[t] is x_t; x_t = 0 before the first simulated period.
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(total);
    for t in 0..total {
        let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (j, a) in coefs.mats().iter().enumerate() {
            if t > j {
                let prev = &history[t - j - 1];
                for (r, xr) in x.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (c, pv) in prev.iter().enumerate() {
                        acc += a[(r, c)] * pv;
                    }
                    *xr += acc;
                }
            }
        }
        history.push(x);
    }
    let kept = &history[burn_in..];
    let values = DMatrix::from_fn(pad + t_obs, n, |i, j| kept[i][j]);
    PanelSeries::new(values, pad, None)
}

/// The two-lag design used throughout the simulation study:
///
/// - `a_1`: 0.25 on the diagonal for `i <= N/2`, 0.35 on the first subdiagonal;
/// - `a_2`: 0.35 on the diagonal for `i > N/2`, -0.25 on the first superdiagonal.
pub fn table1_dgp(n: usize) -> Result<VarCoefficients> {
    if n == 0 || n % 2 != 0 {
        return Err(HdlpError::InvalidArgument(format!(
            "N must be a positive even number, got {n}"
        )));
    }
    let half = n / 2;
    let a1 = DMatrix::from_fn(n, n, |i, j| {
        if i == j && i < half {
            0.25
        } else if i == j + 1 {
            0.35
        } else {
            0.0
        }
    });
    let a2 = DMatrix::from_fn(n, n, |i, j| {
        if i == j && i >= half {
            0.35
        } else if j == i + 1 {
            -0.25
        } else {
            0.0
        }
    });
    VarCoefficients::new(vec![a1, a2])
}

/// VAR(1) with a zero coefficient matrix: the process is white noise.
pub fn white_noise(n: usize) -> Result<VarCoefficients> {
    VarCoefficients::new(vec![DMatrix::zeros(n, n)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(a: &[f64]) -> VarCoefficients {
        VarCoefficients::new(a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect()).unwrap()
    }

    #[test]
    fn scalar_ar1_companion() {
        let cf = companion(&scalar(&[0.5])).unwrap();
        assert_eq!(cf.matrix(), &DMatrix::from_element(1, 1, 0.5));
        assert_abs_diff_eq!(cf.spectral_radius(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ma_coefficient(&cf, 3)[(0, 0)], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn scalar_ar2_layout() {
        let cf = companion(&scalar(&[0.25, 0.35])).unwrap();
        assert_eq!(cf.matrix(), &DMatrix::from_row_slice(2, 2, &[0.25, 0.35, 1.0, 0.0]));
    }

    #[test]
    fn nonstationary_rejected() {
        match VarCoefficients::new(vec![DMatrix::from_element(1, 1, 1.2)]) {
            Err(HdlpError::Nonstationary { radius }) => assert_abs_diff_eq!(radius, 1.2, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(VarCoefficients::new(vec![DMatrix::from_element(2, 3, 0.1)]).is_err());
    }

    #[test]
    fn table1_small_layout() {
        let c = table1_dgp(4).unwrap();
        let a1 = DMatrix::from_row_slice(
            4,
            4,
            &[0.25, 0., 0., 0., 0.35, 0.25, 0., 0., 0., 0.35, 0., 0., 0., 0., 0.35, 0.],
        );
        let a2 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0., -0.25, 0., 0., 0., 0., -0.25, 0., 0., 0., 0.35, -0.25, 0., 0., 0., 0.35,
            ],
        );
        assert_eq!(c.mats()[0], a1);
        assert_eq!(c.mats()[1], a2);
        assert!(matches!(table1_dgp(21), Err(HdlpError::InvalidArgument(_))));
    }

    #[test]
    fn table1_nonzero_count() {
        let c = table1_dgp(20).unwrap();
        assert_eq!(c.mats()[0].iter().filter(|v| **v != 0.0).count(), 29);
        let cf = companion(&c).unwrap();
        assert_eq!(cf.matrix().nrows(), 40);
        assert!(cf.spectral_radius() < 1.0);
    }

    #[test]
    fn ma_identity_and_first_lag() {
        let c = table1_dgp(6).unwrap();
        let cf = companion(&c).unwrap();
        assert_eq!(ma_coefficient(&cf, 0), DMatrix::identity(6, 6));
        assert_eq!(ma_coefficient(&cf, 1), c.mats()[0]);
    }

    #[test]
    fn ma_satisfies_var_recursion() {
        let c = table1_dgp(8).unwrap();
        let cf = companion(&c).unwrap();
        let b = ma_coefficients(&cf, 50);
        for ell in 1..=50 {
            let mut rec = DMatrix::zeros(8, 8);
            for (j, a) in c.mats().iter().enumerate() {
                if ell > j {
                    rec += a * &b[ell - j - 1];
                }
            }
            assert!((&rec - &b[ell]).amax() < 1e-12, "ell={ell}");
        }
    }

    #[test]
    fn ma_decays() {
        let cf = companion(&table1_dgp(20).unwrap()).unwrap();
        let rho = cf.spectral_radius();
        assert!(rho > 0.9 && rho < 1.0);
        let bs = ma_coefficients(&cf, 400);
        // reference maxima from an independent numpy matrix-power computation
        assert_abs_diff_eq!(bs[10].amax(), 0.089_662_343_75, epsilon = 1e-10);
        assert_abs_diff_eq!(bs[50].amax(), 0.010_280_418_600_546_6, epsilon = 1e-10);
        assert!(bs[100].amax() < 1e-3);
        assert!(bs[400].amax() < 1e-6);
        for ell in [100, 200, 400] {
            assert!(bs[ell].amax() <= 10.0 * (ell as f64) * rho.powi(ell as i32));
        }
    }

    #[test]
    fn defective_radius_terminates() {
        let mut nil = DMatrix::zeros(4, 4);
        nil[(0, 1)] = 1.0;
        nil[(1, 2)] = 1.0;
        assert!(spectral_radius(&nil) < 1e-6);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
        assert_abs_diff_eq!(
            spectral_radius(&DMatrix::from_diagonal_element(3, 3, 0.5)),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let c = table1_dgp(4).unwrap();
        let a = simulate_var(&c, 50, 100, 7).unwrap();
        let b = simulate_var(&c, 50, 100, 7).unwrap();
        let d = simulate_var(&c, 50, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert_eq!((a.pad(), a.n_obs(), a.total_rows()), (1, 50, 51));
    }

    #[test]
    fn white_noise_unit_variance() {
        let t = 4000;
        let s = simulate_var(&white_noise(5).unwrap(), t, 0, 11).unwrap();
        for col in s.values().column_iter() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0);
            assert!((var - 1.0).abs() < 5.0 / (t as f64).sqrt(), "var {var}");
        }
    }

    #[test]
    fn ar1_stationary_variance() {
        let t = 100_000;
        let s = simulate_var(&scalar(&[0.9]), t, DEFAULT_BURN_IN, 3).unwrap();
        let col = s.values().column(0);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0);
        let target = 1.0 / (1.0 - 0.81);
        assert!((var / target - 1.0).abs() < 0.05, "var {var} vs {target}");
    }
}
