//! Joint state/parameter estimation filters over the augmented state
//! `ξ = [x; θ]`: a Cholesky-form (square-root) unscented Kalman filter and a
//! dense-covariance extended Kalman filter baseline.
//!
//! The square-root filter never forms the full covariance: the prediction
//! factor comes from a QR over the weighted sigma-point deviations stacked
//! with the process-noise factor, the center column enters through a
//! rank-one update (or downdate, when its weight is negative), and the
//! measurement correction downdates the factor column-by-column with the
//! gain-scaled innovation factor. The Kalman gain is obtained by two
//! triangular solves against the innovation factor; no matrix is inverted
//! explicitly.
//!
//! The scale parameter follows `λ = L(α² − 1)` with no secondary κ term, so
//! `L + λ = Lα²` and the center covariance weight `W₀⁽ᶜ⁾` is negative for
//! `α < 1`; the downdate branch handles that case, with a dense
//! reconstruction fallback if the downdate grazes the SPD boundary.

use crate::matkernels::{
    chol_rank_one, cholesky_factor, qr_r_factor, solve_with_factor, KernelError, Mat,
};
use crate::model::{
    augmented_transition, BeliefBlocks, Dims, GaussianBelief, ModelError, NoiseFactors,
    ParametricModel,
};

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum FilterError {
    /// Unscented-transform hyperparameters outside the admissible range.
    InvalidHyper(String),
    Kernel(KernelError),
    Model(ModelError),
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::InvalidHyper(msg) => write!(f, "invalid UT hyperparameter: {msg}"),
            FilterError::Kernel(e) => write!(f, "{e}"),
            FilterError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FilterError {}

impl From<KernelError> for FilterError {
    fn from(e: KernelError) -> Self {
        FilterError::Kernel(e)
    }
}

impl From<ModelError> for FilterError {
    fn from(e: ModelError) -> Self {
        FilterError::Model(e)
    }
}

/// Unscented-transform weights for an `L`-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct UtWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl UtWeights {
    pub fn l(&self) -> usize {
        (self.wm.len() - 1) / 2
    }
}

/// Computes the scale parameters and sigma-point weights:
/// `λ = L(α²−1)`, `η = √(L+λ)`, `W₀⁽ᵐ⁾ = λ/(L+λ)`,
/// `W₀⁽ᶜ⁾ = W₀⁽ᵐ⁾ + (1−α²+β)`, `Wᵢ = 1/(2(L+λ))`.
pub fn ut_weights(l: usize, alpha: f64, beta: f64) -> Result<UtWeights, FilterError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FilterError::InvalidHyper(format!("alpha = {alpha} outside (0, 1]")));
    }
    if l < 1 {
        return Err(FilterError::InvalidHyper("L must be >= 1".into()));
    }
    let lf = l as f64;
    let lambda = lf * (alpha * alpha - 1.0);
    let l_plus_lambda = lf * alpha * alpha;
    let eta = l_plus_lambda.sqrt();
    let w0m = lambda / l_plus_lambda;
    let w0c = w0m + (1.0 - alpha * alpha + beta);
    let wi = 1.0 / (2.0 * l_plus_lambda);
    let mut wm = vec![wi; 2 * l + 1];
    let mut wc = vec![wi; 2 * l + 1];
    wm[0] = w0m;
    wc[0] = w0c;
    Ok(UtWeights { alpha, beta, lambda, eta, wm, wc })
}

/// Sigma points of one filter step: the sampled set, the set pushed through
/// the transition, and (after the correction) the set pushed through the
/// observation.
#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: Mat,
    pub propagated: Mat,
    pub measured: Option<Mat>,
}

/// Result of a square-root prediction step. `used_dense_fallback` reports
/// that the center-column downdate failed and the factor was rebuilt from
/// the dense weighted covariance instead.
#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub belief: GaussianBelief,
    pub sigma: SigmaSet,
    pub used_dense_fallback: bool,
}

fn sample_sigma_points(belief: &GaussianBelief, eta: f64) -> Mat {
    let l = belief.dim();
    let mut points = Mat::zeros(l, 2 * l + 1);
    let u = belief.u_factor.mat();
    for i in 0..l {
        points[(i, 0)] = belief.xi[i];
        for c in 0..l {
            points[(i, 1 + c)] = belief.xi[i] + eta * u[(i, c)];
            points[(i, 1 + l + c)] = belief.xi[i] - eta * u[(i, c)];
        }
    }
    points
}

// Anchored at the center column: since the weights sum to one,
// Σ wᶜ·χᶜ = χ⁰ + Σ wᶜ·(χᶜ − χ⁰). The direct sum cancels catastrophically
// for small α, where the center weight is ~ −1/α²; the anchored form only
// ever sums small deviations.
fn weighted_mean(cols: &Mat, wm: &[f64]) -> Vec<f64> {
    let mut out = cols.col(0);
    for c in 1..cols.cols() {
        let w = wm[c];
        for i in 0..cols.rows() {
            out[i] += w * (cols[(i, c)] - cols[(i, 0)]);
        }
    }
    out
}

fn weighted_cov(cols: &Mat, mean: &[f64], wc: &[f64]) -> Mat {
    let n = cols.rows();
    let mut out = Mat::zeros(n, n);
    for c in 0..cols.cols() {
        let w = wc[c];
        for i in 0..n {
            let di = cols[(i, c)] - mean[i];
            for j in 0..n {
                out[(i, j)] += w * di * (cols[(j, c)] - mean[j]);
            }
        }
    }
    out
}

/// Applies the center-column rank-one term with weight `w0c`: update when
/// positive, downdate when negative (rebuilding densely if the downdate
/// fails), no-op when zero. Returns `(factor, used_dense_fallback)`.
fn apply_center_column(
    factor: crate::matkernels::LowerTriangular,
    v: &[f64],
    w0c: f64,
    cols: &Mat,
    mean: &[f64],
    wc: &[f64],
    noise_cov: &Mat,
) -> Result<(crate::matkernels::LowerTriangular, bool), FilterError> {
    if w0c == 0.0 {
        return Ok((factor, false));
    }
    match chol_rank_one(&factor, v, w0c) {
        Ok(f) => Ok((f, false)),
        Err(KernelError::DowndateBreaksSpd { .. }) if w0c < 0.0 => {
            let sigma = weighted_cov(cols, mean, wc).add(noise_cov).symmetrized();
            let rebuilt = cholesky_factor(&sigma)?;
            Ok((rebuilt, true))
        }
        Err(e) => Err(e.into()),
    }
}

/// Square-root UKF prediction: samples sigma points from the belief factor,
/// propagates them through the augmented transition, and rebuilds the
/// square-root factor by QR plus a center-column rank-one term.
pub fn srukf_predict(
    belief: &GaussianBelief,
    u: &[f64],
    model: &ParametricModel,
    w: &UtWeights,
    noise: &NoiseFactors,
) -> Result<PredictOutcome, FilterError> {
    let l = model.dims.l_sigma();
    let d_x = model.dims.d_x;
    assert_eq!(belief.dim(), l, "belief dimension");
    assert_eq!(w.l(), l, "weight dimension");

    let points = sample_sigma_points(belief, w.eta);
    let mut propagated = Mat::zeros(l, 2 * l + 1);
    for c in 0..2 * l + 1 {
        let next = augmented_transition(model, &points.col(c), u)?;
        propagated.set_col(c, &next);
    }
    let xi_pred = weighted_mean(&propagated, &w.wm);

    // compound matrix: weighted deviations of columns 1..2L stacked over
    // the transposed process-noise factor; its Gram matrix is the predicted
    // covariance minus the center-column term
    let sw = w.wc[1].sqrt();
    let mut compound = Mat::zeros(2 * l + d_x, l);
    for c in 1..=2 * l {
        for i in 0..l {
            compound[(c - 1, i)] = sw * (propagated[(i, c)] - xi_pred[i]);
        }
    }
    compound.set_block(2 * l, 0, &noise.q_sqrt_aug.transpose());
    let factor = qr_r_factor(&compound)?;

    let center: Vec<f64> = (0..l).map(|i| propagated[(i, 0)] - xi_pred[i]).collect();
    let q_aug = noise.q_sqrt_aug.matmul(&noise.q_sqrt_aug.transpose());
    let (factor, used_dense_fallback) =
        apply_center_column(factor, &center, w.wc[0], &propagated, &xi_pred, &w.wc, &q_aug)?;

    Ok(PredictOutcome {
        belief: GaussianBelief { xi: xi_pred, u_factor: factor },
        sigma: SigmaSet { points, propagated, measured: None },
        used_dense_fallback,
    })
}

/// Result of a square-root correction step: the posterior belief plus the
/// redrawn sigma points and their observed columns.
#[derive(Debug, Clone)]
pub struct CorrectOutcome {
    pub belief: GaussianBelief,
    pub sigma: SigmaSet,
    pub used_dense_fallback: bool,
}

/// Square-root UKF correction: redraws sigma points from the *predicted*
/// factor (so the innovation statistics include the process noise just
/// folded in — required for exactness on linear-Gaussian systems), maps
/// them through the observation, factors the innovation covariance by QR,
/// solves for the gain, and downdates the state factor with the
/// gain-scaled innovation factor column by column.
///
/// A downdate failure on the final factor means the filter has become
/// inconsistent; the error is returned so callers can halt the run with a
/// diagnostic rather than continue from a broken covariance.
pub fn srukf_correct(
    pred: &GaussianBelief,
    y: &[f64],
    model: &ParametricModel,
    w: &UtWeights,
    noise: &NoiseFactors,
) -> Result<CorrectOutcome, FilterError> {
    let l = model.dims.l_sigma();
    let d_x = model.dims.d_x;
    let d_y = model.dims.d_y;
    assert_eq!(y.len(), d_y, "measurement dimension");
    let cols = 2 * l + 1;

    let points = sample_sigma_points(pred, w.eta);
    let mut measured = Mat::zeros(d_y, cols);
    for c in 0..cols {
        let point = points.col(c);
        let obs = model.observe(&point[..d_x]);
        assert_eq!(obs.len(), d_y, "observation output length");
        if !obs.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite { context: "observation" }.into());
        }
        measured.set_col(c, &obs);
    }
    let y_pred = weighted_mean(&measured, &w.wm);

    let sw = w.wc[1].sqrt();
    let mut compound = Mat::zeros(2 * l + d_y, d_y);
    for c in 1..=2 * l {
        for i in 0..d_y {
            compound[(c - 1, i)] = sw * (measured[(i, c)] - y_pred[i]);
        }
    }
    compound.set_block(2 * l, 0, &noise.r_sqrt.mat().transpose());
    let u_y = qr_r_factor(&compound)?;

    let center: Vec<f64> = (0..d_y).map(|i| measured[(i, 0)] - y_pred[i]).collect();
    let r_cov = noise.r_sqrt.reconstruct();
    let (u_y, used_dense_fallback) =
        apply_center_column(u_y, &center, w.wc[0], &measured, &y_pred, &w.wc, &r_cov)?;

    // cross-covariance between augmented state and measurement
    let mut cross = Mat::zeros(l, d_y);
    for c in 0..cols {
        let wc = w.wc[c];
        for i in 0..l {
            let di = points[(i, c)] - pred.xi[i];
            for j in 0..d_y {
                cross[(i, j)] += wc * di * (measured[(j, c)] - y_pred[j]);
            }
        }
    }

    // gain via triangular solves: (U_y U_yᵀ) Kᵀ = Cᵀ
    let gain = solve_with_factor(&u_y, &cross.transpose()).transpose();

    let mut xi_new = pred.xi.clone();
    let innovation: Vec<f64> = (0..d_y).map(|i| y[i] - y_pred[i]).collect();
    let correction = gain.mul_vec(&innovation);
    for i in 0..l {
        xi_new[i] += correction[i];
    }

    let gain_factor = gain.matmul(u_y.mat());
    let mut u_new = pred.u_factor.clone();
    for j in 0..d_y {
        u_new = chol_rank_one(&u_new, &gain_factor.col(j), -1.0)?;
    }

    let propagated = points.clone();
    Ok(CorrectOutcome {
        belief: GaussianBelief { xi: xi_new, u_factor: u_new },
        sigma: SigmaSet { points, propagated, measured: Some(measured) },
        used_dense_fallback,
    })
}

/// Stateful convenience driver owning the belief and last sigma set.
#[derive(Debug)]
pub struct SrUkf {
    pub weights: UtWeights,
    pub noise: NoiseFactors,
    pub belief: GaussianBelief,
    pub last_sigma: Option<SigmaSet>,
    pub dense_fallbacks: u64,
}

impl SrUkf {
    pub fn new(model: &ParametricModel, belief: GaussianBelief, alpha: f64, beta: f64) -> Result<Self, FilterError> {
        let weights = ut_weights(model.dims.l_sigma(), alpha, beta)?;
        let noise = NoiseFactors::from_model(model)?;
        Ok(Self { weights, noise, belief, last_sigma: None, dense_fallbacks: 0 })
    }

    pub fn predict(&mut self, model: &ParametricModel, u: &[f64]) -> Result<(), FilterError> {
        let out = srukf_predict(&self.belief, u, model, &self.weights, &self.noise)?;
        if out.used_dense_fallback {
            self.dense_fallbacks += 1;
        }
        self.belief = out.belief;
        self.last_sigma = Some(out.sigma);
        Ok(())
    }

    pub fn correct(&mut self, model: &ParametricModel, y: &[f64]) -> Result<(), FilterError> {
        let out = srukf_correct(&self.belief, y, model, &self.weights, &self.noise)?;
        if out.used_dense_fallback {
            self.dense_fallbacks += 1;
        }
        self.belief = out.belief;
        self.last_sigma = Some(out.sigma);
        Ok(())
    }
}

/// Dense-covariance belief of the EKF baseline.
#[derive(Debug, Clone)]
pub struct EkfBelief {
    pub xi: Vec<f64>,
    pub sigma: Mat,
}

impl EkfBelief {
    pub fn from_belief(b: &GaussianBelief) -> Self {
        Self { xi: b.xi.clone(), sigma: b.covariance() }
    }

    /// Block views mirroring [`crate::model::belief_blocks`].
    pub fn blocks(&self, dims: &Dims) -> BeliefBlocks {
        let d_x = dims.d_x;
        let d_t = dims.d_theta;
        BeliefBlocks {
            mu: self.xi[..d_x].to_vec(),
            m: self.xi[d_x..].to_vec(),
            p: self.sigma.block(0, 0, d_x, d_x),
            v: self.sigma.block(0, d_x, d_x, d_t),
            s: self.sigma.block(d_x, d_x, d_t, d_t).symmetrized(),
        }
    }
}

/// Central finite-difference Jacobian of the augmented transition, step
/// `1e-6·max(1, |ξᵢ|)` per coordinate.
pub fn transition_jacobian(
    model: &ParametricModel,
    xi: &[f64],
    u: &[f64],
) -> Result<Mat, FilterError> {
    let l = xi.len();
    let mut jac = Mat::zeros(l, l);
    for j in 0..l {
        let h = 1e-6 * xi[j].abs().max(1.0);
        let mut plus = xi.to_vec();
        plus[j] += h;
        let mut minus = xi.to_vec();
        minus[j] -= h;
        let fp = augmented_transition(model, &plus, u)?;
        let fm = augmented_transition(model, &minus, u)?;
        for i in 0..l {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Augmented observation Jacobian `[∂h/∂x, 0]` by central differences; the
/// parameter block is zero because the observation reads only the state.
pub fn observation_jacobian(model: &ParametricModel, xi: &[f64]) -> Mat {
    let d_x = model.dims.d_x;
    let d_y = model.dims.d_y;
    let l = model.dims.l_sigma();
    let x = &xi[..d_x];
    let mut jac = Mat::zeros(d_y, l);
    for j in 0..d_x {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut plus = x.to_vec();
        plus[j] += h;
        let mut minus = x.to_vec();
        minus[j] -= h;
        let hp = model.observe(&plus);
        let hm = model.observe(&minus);
        for i in 0..d_y {
            jac[(i, j)] = (hp[i] - hm[i]) / (2.0 * h);
        }
    }
    jac
}

/// EKF prediction: first-order propagation of the dense covariance with the
/// finite-difference Jacobian, plus the zero-padded process noise.
pub fn ekf_predict(
    belief: &EkfBelief,
    u: &[f64],
    model: &ParametricModel,
) -> Result<EkfBelief, FilterError> {
    let l = model.dims.l_sigma();
    let d_x = model.dims.d_x;
    assert_eq!(belief.xi.len(), l);
    let jac = transition_jacobian(model, &belief.xi, u)?;
    let xi_pred = augmented_transition(model, &belief.xi, u)?;
    let mut sigma = jac.matmul(&belief.sigma).matmul(&jac.transpose());
    for i in 0..d_x {
        for j in 0..d_x {
            sigma[(i, j)] += model.q[(i, j)];
        }
    }
    Ok(EkfBelief { xi: xi_pred, sigma: sigma.symmetrized() })
}

/// EKF correction in Joseph form. Fails with the kernel's
/// `NotPositiveDefinite` if the stabilized covariance still does not factor.
pub fn ekf_correct(
    belief: &EkfBelief,
    y: &[f64],
    model: &ParametricModel,
) -> Result<EkfBelief, FilterError> {
    let l = model.dims.l_sigma();
    let d_x = model.dims.d_x;
    let d_y = model.dims.d_y;
    assert_eq!(y.len(), d_y);

    let h_jac = observation_jacobian(model, &belief.xi);
    let h0 = model.observe(&belief.xi[..d_x]);
    if !h0.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite { context: "observation" }.into());
    }

    let s_innov = h_jac
        .matmul(&belief.sigma)
        .matmul(&h_jac.transpose())
        .add(&model.r)
        .symmetrized();
    let s_factor = cholesky_factor(&s_innov)?;
    // K = Σ Hᵀ S⁻¹  ⇔  S Kᵀ = H Σ
    let h_sigma = h_jac.matmul(&belief.sigma);
    let gain = solve_with_factor(&s_factor, &h_sigma).transpose();

    let mut xi_new = belief.xi.clone();
    let innovation: Vec<f64> = (0..d_y).map(|i| y[i] - h0[i]).collect();
    let correction = gain.mul_vec(&innovation);
    for i in 0..l {
        xi_new[i] += correction[i];
    }

    let i_kh = Mat::identity(l).sub(&gain.matmul(&h_jac));
    let sigma_new = i_kh
        .matmul(&belief.sigma)
        .matmul(&i_kh.transpose())
        .add(&gain.matmul(&model.r).matmul(&gain.transpose()))
        .symmetrized();
    cholesky_factor(&sigma_new)?;
    Ok(EkfBelief { xi: xi_new, sigma: sigma_new })
}
