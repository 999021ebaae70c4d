//! Batch sparse-regression baseline: numerical differentiation, library
//! matrix construction, and column-wise ℓ1-regularized least squares by
//! cyclic coordinate descent with soft thresholding.
//!
//! Each state dimension is an independent problem
//! `min ½‖ẋ − Ψξ‖² + λ‖ξ‖₁`; with this scaling the all-zero solution is
//! optimal exactly when `λ ≥ ‖Ψᵀẋ‖∞ `. Library columns are standardized
//! (scaled to unit standard deviation) before the solve and the
//! coefficients rescaled back, so one λ works across heterogeneous bases.

use std::fmt;

use crate::matkernels::Mat;

#[derive(Debug, Clone, PartialEq)]
pub enum SindyError {
    TooFewSamples { got: usize, need: usize },
    BadInput(String),
}

impl fmt::Display for SindyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SindyError::TooFewSamples { got, need } => {
                write!(f, "too few samples: got {got}, need at least {need}")
            }
            SindyError::BadInput(msg) => write!(f, "bad input: {msg}"),
        }
    }
}

impl std::error::Error for SindyError {}

/// A batch identification problem: samples, estimated derivatives, the
/// library matrix, and the per-column regularization weights.
#[derive(Debug, Clone)]
pub struct SindyProblem {
    pub x: Mat,
    pub u: Mat,
    pub xdot: Mat,
    pub psi: Mat,
    pub lambda: Vec<f64>,
}

/// Result of one sparse regression: the coefficients, whether the sweep
/// converged within the iteration cap (the best iterate is returned either
/// way, flagged), and whether the problem was underdetermined.
#[derive(Debug, Clone)]
pub struct RegressOutcome {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub underdetermined: bool,
}

/// Derivatives by central differences in the interior and one-sided
/// differences at the boundaries.
pub fn numeric_derivative(x: &Mat, dt: f64) -> Result<Mat, SindyError> {
    let n = x.rows();
    if n < 3 {
        return Err(SindyError::TooFewSamples { got: n, need: 3 });
    }
    if !(dt > 0.0) {
        return Err(SindyError::BadInput("dt must be positive".into()));
    }
    let d = x.cols();
    let mut out = Mat::zeros(n, d);
    for j in 0..d {
        out[(0, j)] = (x[(1, j)] - x[(0, j)]) / dt;
        out[(n - 1, j)] = (x[(n - 1, j)] - x[(n - 2, j)]) / dt;
        for i in 1..n - 1 {
            out[(i, j)] = (x[(i + 1, j)] - x[(i - 1, j)]) / (2.0 * dt);
        }
    }
    Ok(out)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(crate) fn lasso_objective(psi: &Mat, target: &[f64], coef: &[f64], lambda: f64) -> f64 {
    let fitted = psi.mul_vec(coef);
    let mut sq = 0.0;
    for i in 0..target.len() {
        let r = target[i] - fitted[i];
        sq += r * r;
    }
    0.5 * sq + lambda * coef.iter().map(|c| c.abs()).sum::<f64>()
}

/// Cyclic coordinate descent with soft thresholding on the raw (already
/// scaled) library. Converged when the largest coefficient change in a
/// sweep drops below 1e-8, capped at 10,000 sweeps.
pub fn sparse_regress(psi: &Mat, target: &[f64], lambda: f64) -> Result<RegressOutcome, SindyError> {
    sparse_regress_traced(psi, target, lambda, &mut |_| {})
}

/// Like [`sparse_regress`] but reports the objective after every sweep, for
/// the monotonicity checks in the test suite.
pub fn sparse_regress_traced(
    psi: &Mat,
    target: &[f64],
    lambda: f64,
    on_sweep: &mut dyn FnMut(f64),
) -> Result<RegressOutcome, SindyError> {
    let n = psi.rows();
    let p = psi.cols();
    if n != target.len() {
        return Err(SindyError::BadInput("target length must match row count".into()));
    }
    if n == 0 || p == 0 {
        return Err(SindyError::TooFewSamples { got: n, need: 1 });
    }
    if lambda < 0.0 {
        return Err(SindyError::BadInput("lambda must be non-negative".into()));
    }
    let underdetermined = n < p;

    let col_sq: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| psi[(i, j)] * psi[(i, j)]).sum())
        .collect();
    let mut coef = vec![0.0_f64; p];
    let mut residual = target.to_vec();

    const MAX_SWEEPS: usize = 10_000;
    const TOL: f64 = 1e-8;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = coef[j];
            let mut rho = 0.0;
            for i in 0..n {
                rho += psi[(i, j)] * residual[i];
            }
            rho += col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                let delta = old - new;
                for i in 0..n {
                    residual[i] += delta * psi[(i, j)];
                }
                coef[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        on_sweep(lasso_objective(psi, target, &coef, lambda));
        if max_change < TOL {
            converged = true;
            break;
        }
    }
    Ok(RegressOutcome { coef, converged, sweeps, underdetermined })
}

/// Column-standardized sparse regression: scales every library column to
/// unit standard deviation, solves, rescales the coefficients back.
/// Near-constant-variance columns are left unscaled.
pub fn sparse_regress_standardized(
    psi: &Mat,
    target: &[f64],
    lambda: f64,
) -> Result<RegressOutcome, SindyError> {
    let n = psi.rows();
    let p = psi.cols();
    let mut scales = vec![1.0_f64; p];
    let mut scaled = psi.clone();
    for j in 0..p {
        let mean: f64 = (0..n).map(|i| psi[(i, j)]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|i| (psi[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 1e-12 {
            scales[j] = std;
            for i in 0..n {
                scaled[(i, j)] = psi[(i, j)] / std;
            }
        }
    }
    let mut out = sparse_regress(&scaled, target, lambda)?;
    for j in 0..p {
        out.coef[j] /= scales[j];
    }
    Ok(out)
}

/// Solves one sparse regression per state dimension; returns the
/// coefficient matrix with one column per state (library size × d_x).
pub fn sindy_identify(problem: &SindyProblem) -> Result<Mat, SindyError> {
    let d_x = problem.xdot.cols();
    let p = problem.psi.cols();
    if problem.lambda.len() != d_x {
        return Err(SindyError::BadInput("one lambda per state dimension required".into()));
    }
    if problem.psi.rows() != problem.xdot.rows() {
        return Err(SindyError::BadInput("library and derivative row counts differ".into()));
    }
    let mut xi = Mat::zeros(p, d_x);
    for c in 0..d_x {
        let out = sparse_regress_standardized(&problem.psi, &problem.xdot.col(c), problem.lambda[c])?;
        xi.set_col(c, &out.coef);
    }
    Ok(xi)
}
