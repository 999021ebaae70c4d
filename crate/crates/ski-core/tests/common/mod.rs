//! Independent oracles shared by the integration suites: a dense-covariance
//! unscented filter and the closed-form linear-Gaussian Kalman recursion.
//! Both are deliberately written against plain dense algebra so they share
//! no code path with the square-root implementation they check.

use ski_core::matkernels::{cholesky_factor, lu_factor, Mat};
use ski_core::model::{augmented_transition, ParametricModel};
use ski_core::filters::UtWeights;

/// Dense-covariance belief for the oracle filter.
#[derive(Debug, Clone)]
pub struct DenseBelief {
    pub xi: Vec<f64>,
    pub sigma: Mat,
}

/// One predict step of the dense unscented oracle: sample from a fresh
/// Cholesky factor, propagate, and rebuild moments by the weighted sums.
pub fn dense_ukf_predict(
    belief: &DenseBelief,
    u: &[f64],
    model: &ParametricModel,
    w: &UtWeights,
) -> DenseBelief {
    let l = belief.xi.len();
    let factor = cholesky_factor(&belief.sigma.symmetrized()).expect("oracle covariance SPD");
    let mut points = Mat::zeros(l, 2 * l + 1);
    for i in 0..l {
        points[(i, 0)] = belief.xi[i];
        for c in 0..l {
            points[(i, 1 + c)] = belief.xi[i] + w.eta * factor.mat()[(i, c)];
            points[(i, 1 + l + c)] = belief.xi[i] - w.eta * factor.mat()[(i, c)];
        }
    }
    let mut propagated = Mat::zeros(l, 2 * l + 1);
    for c in 0..2 * l + 1 {
        let next = augmented_transition(model, &points.col(c), u).expect("oracle transition");
        propagated.set_col(c, &next);
    }
    // anchored weighted mean (weights sum to one)
    let mut mean = propagated.col(0);
    for c in 1..2 * l + 1 {
        for i in 0..l {
            mean[i] += w.wm[c] * (propagated[(i, c)] - propagated[(i, 0)]);
        }
    }
    let mut sigma = Mat::zeros(l, l);
    for c in 0..2 * l + 1 {
        for i in 0..l {
            let di = propagated[(i, c)] - mean[i];
            for j in 0..l {
                sigma[(i, j)] += w.wc[c] * di * (propagated[(j, c)] - mean[j]);
            }
        }
    }
    let d_x = model.dims.d_x;
    for i in 0..d_x {
        for j in 0..d_x {
            sigma[(i, j)] += model.q[(i, j)];
        }
    }
    DenseBelief { xi: mean, sigma: sigma.symmetrized() }
}

/// One correct step of the dense unscented oracle; sigma points are redrawn
/// from the predicted covariance, matching the square-root filter's
/// convention.
pub fn dense_ukf_correct(
    pred: &DenseBelief,
    y: &[f64],
    model: &ParametricModel,
    w: &UtWeights,
) -> DenseBelief {
    let l = pred.xi.len();
    let d_x = model.dims.d_x;
    let d_y = model.dims.d_y;
    let cols = 2 * l + 1;

    let factor = cholesky_factor(&pred.sigma.symmetrized()).expect("oracle covariance SPD");
    let mut points = Mat::zeros(l, cols);
    for i in 0..l {
        points[(i, 0)] = pred.xi[i];
        for c in 0..l {
            points[(i, 1 + c)] = pred.xi[i] + w.eta * factor.mat()[(i, c)];
            points[(i, 1 + l + c)] = pred.xi[i] - w.eta * factor.mat()[(i, c)];
        }
    }
    let mut measured = Mat::zeros(d_y, cols);
    for c in 0..cols {
        let obs = model.observe(&points.col(c)[..d_x]);
        measured.set_col(c, &obs);
    }
    let mut y_pred = measured.col(0);
    for c in 1..cols {
        for i in 0..d_y {
            y_pred[i] += w.wm[c] * (measured[(i, c)] - measured[(i, 0)]);
        }
    }
    let mut s_y = model.r.clone();
    let mut cross = Mat::zeros(l, d_y);
    for c in 0..cols {
        for i in 0..d_y {
            let di = measured[(i, c)] - y_pred[i];
            for j in 0..d_y {
                s_y[(i, j)] += w.wc[c] * di * (measured[(j, c)] - y_pred[j]);
            }
        }
        for i in 0..l {
            let dxi = points[(i, c)] - pred.xi[i];
            for j in 0..d_y {
                cross[(i, j)] += w.wc[c] * dxi * (measured[(j, c)] - y_pred[j]);
            }
        }
    }
    let s_inv = lu_factor(&s_y.symmetrized()).expect("oracle innovation invertible").inverse();
    let gain = cross.matmul(&s_inv);
    let mut xi = pred.xi.clone();
    let innovation: Vec<f64> = (0..d_y).map(|i| y[i] - y_pred[i]).collect();
    let corr = gain.mul_vec(&innovation);
    for i in 0..l {
        xi[i] += corr[i];
    }
    let sigma = pred
        .sigma
        .sub(&gain.matmul(&s_y).matmul(&gain.transpose()))
        .symmetrized();
    DenseBelief { xi, sigma }
}

/// Closed-form Kalman filter for a (possibly time-varying) linear-Gaussian
/// system `x⁺ = A·x + b`, `y = H·x`, driven in lockstep with the filters
/// under test.
#[derive(Debug, Clone)]
pub struct LinearKf {
    pub xi: Vec<f64>,
    pub sigma: Mat,
}

impl LinearKf {
    pub fn predict(&mut self, a: &Mat, b: &[f64], q: &Mat) {
        let mut xi = a.mul_vec(&self.xi);
        for i in 0..xi.len() {
            xi[i] += b[i];
        }
        self.xi = xi;
        self.sigma = a.matmul(&self.sigma).matmul(&a.transpose()).add(q).symmetrized();
    }

    pub fn correct(&mut self, h: &Mat, y: &[f64], r: &Mat) {
        let s = h.matmul(&self.sigma).matmul(&h.transpose()).add(r).symmetrized();
        let s_inv = lu_factor(&s).expect("KF innovation invertible").inverse();
        let gain = self.sigma.matmul(&h.transpose()).matmul(&s_inv);
        let resid: Vec<f64> = {
            let pred = h.mul_vec(&self.xi);
            (0..y.len()).map(|i| y[i] - pred[i]).collect()
        };
        let corr = gain.mul_vec(&resid);
        for i in 0..self.xi.len() {
            self.xi[i] += corr[i];
        }
        let i_kh = Mat::identity(self.xi.len()).sub(&gain.matmul(h));
        self.sigma = i_kh
            .matmul(&self.sigma)
            .matmul(&i_kh.transpose())
            .add(&gain.matmul(r).matmul(&gain.transpose()))
            .symmetrized();
    }
}

pub fn rel_frobenius(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frobenius() / b.frobenius().max(1e-300)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
