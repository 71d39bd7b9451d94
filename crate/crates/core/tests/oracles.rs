use hdlp::dgp::{companion, simulate_var, table1_dgp, VarCoefficients};
use hdlp::inference::nodewise;
use hdlp::lp::gamma_for;
use hdlp::panel::build_design;
use hdlp::solver::{lasso_oracle, LassoProblem};
use hdlp::PenaltyConfig;
use nalgebra::{DMatrix, DVector};

/// Stationary covariance of the companion state by fixed-point iteration on
/// `S = C S C' + Q`, with `Q` the innovation covariance in the leading block.
fn lyapunov(c: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let k = c.nrows();
    let mut q = DMatrix::zeros(k, k);
    q.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut s = q.clone();
    for _ in 0..10_000 {
        let next = c * &s * c.transpose() + &q;
        let done = (&next - &s).amax() < 1e-14;
        s = next;
        if done {
            break;
        }
    }
    s
}

#[test]
fn sample_covariance_matches_lyapunov_solution() {
    let n = 4;
    let coefs = table1_dgp(n).unwrap();
    let cf = companion(&coefs).unwrap();
    let sigma = lyapunov(cf.matrix(), n).view((0, 0), (n, n)).into_owned();

    let series = simulate_var(&coefs, 200_000, 500, 20_240_611).unwrap();
    let v = series.values();
    let t = v.nrows() as f64;
    let mean = v.row_mean();
    let centered = DMatrix::from_fn(v.nrows(), n, |r, c| v[(r, c)] - mean[c]);
    let sample = centered.tr_mul(&centered) / t;

    for i in 0..n {
        for j in 0..n {
            let scale = (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            let gap = (sample[(i, j)] - sigma[(i, j)]).abs();
            assert!(
                gap <= 0.03 * scale,
                "({i}, {j}): sample {} vs {}",
                sample[(i, j)],
                sigma[(i, j)]
            );
        }
    }
}

fn small_var(n: usize, seed: u64) -> VarCoefficients {
    let a = DMatrix::from_fn(n, n, |i, j| {
        let x = ((seed as usize + 3 * i + 7 * j) % 11) as f64 / 11.0;
        0.4 * (x - 0.5)
    });
    VarCoefficients::new(vec![a]).unwrap()
}

/// Node-wise regressions on the `Np` regressors, embedded block-diagonally,
/// solve the node-wise problems of the full `N^2 p` Kronecker design.
#[test]
fn nodewise_reduction_solves_full_problem() {
    for (n, seed) in [(2usize, 1u64), (3, 2), (3, 5)] {
        let series = simulate_var(&small_var(n, seed), 200, 200, seed).unwrap();
        let design = build_design(&series, 1, 1).unwrap();
        let config = PenaltyConfig {
            tol: 1e-13,
            max_iter: 1_000_000,
            ..PenaltyConfig::default()
        };
        let gamma_tilde = gamma_for(n, design.effective_obs(), 1, &config).unwrap();
        let prec = nodewise(&design, gamma_tilde, &config).unwrap();

        let x = design.x();
        let (t_eff, np) = (x.nrows(), x.ncols());
        let dim = np * n;
        // row (t, i), column (k, i') of X_t (x) I_N, with columns ordered as vec(A)
        let full = DMatrix::from_fn(t_eff * n, dim, |r, c| {
            let (i, t) = (r / t_eff, r % t_eff);
            let (k, i2) = (c / n, c % n);
            if i == i2 {
                x[(t, k)]
            } else {
                0.0
            }
        });

        for node in 0..dim {
            let (k, i) = (node / n, node % n);
            let response = full.column(node).into_owned();
            let mut weights = DVector::from_element(dim, 1.0);
            weights[node] = f64::INFINITY;
            // the full loss averages over N times as many rows
            let problem = LassoProblem::new(full.clone(), response, weights, 2.0 * gamma_tilde / n as f64).unwrap();

            let mut embedded = DVector::zeros(dim);
            let b = &prec.b_hats[k];
            for (pos, k2) in (0..np).filter(|&k2| k2 != k).enumerate() {
                embedded[k2 * n + i] = b[pos];
            }
            let exact = lasso_oracle(&problem).unwrap();
            let gap = problem.objective(&embedded) - problem.objective(&exact);
            assert!(gap.abs() <= 1e-8, "N={n}, node {node}: gap {gap}");
        }
    }
}
