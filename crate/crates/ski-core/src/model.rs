//! Parametric identification problems: basis libraries, augmented
//! transition/observation functions, noise factors, and Gaussian beliefs
//! over the augmented state `ξ = [x; θ]`.
//!
//! The unknown term in the dynamics is fixed to the linear-in-parameters
//! form `f(x, u) = Φ(x, u)·θ`, where each column of `Φ` is the (possibly
//! vector-valued) evaluation of one candidate basis function. All of the
//! relevance-learning machinery assumes linear weights, so the construction
//! API does not admit any other parameterization.

use std::fmt;
use std::sync::Arc;

use crate::matkernels::{cholesky_factor, cholesky_factor_psd, KernelCfg, KernelError, LowerTriangular, Mat};

/// Problem dimensions.
///
/// `d_f` is the dimension of the unknown dynamics term (1 for scalar
/// uncertainties, 3 for a spatial acceleration); the augmented sigma-point
/// dimension is `l_sigma = d_x + d_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_x: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub d_theta: usize,
    pub d_f: usize,
}

impl Dims {
    pub fn new(d_x: usize, d_u: usize, d_y: usize, d_theta: usize, d_f: usize) -> Result<Self, ModelError> {
        if d_x < 1 || d_y < 1 || d_theta < 1 || d_f < 1 {
            return Err(ModelError::BadDims("d_x, d_y, d_theta, d_f must all be >= 1".into()));
        }
        Ok(Self { d_x, d_u, d_y, d_theta, d_f })
    }

    pub fn l_sigma(&self) -> usize {
        self.d_x + self.d_theta
    }
}

/// Named library of candidate basis functions.
///
/// `evaluate(x, u)` returns a `d_f × d_theta` matrix whose column `i` is
/// `φ_i(x, u)`; the unknown term is the matrix-vector product with the
/// weight vector. For scalar unknowns (`d_f = 1`) use
/// [`BasisLibrary::scalar`], which takes a plain vector-valued closure.
#[derive(Clone)]
pub struct BasisLibrary {
    names: Vec<String>,
    d_f: usize,
    eval: Arc<dyn Fn(&[f64], &[f64]) -> Mat + Send + Sync>,
}

impl BasisLibrary {
    pub fn new(
        names: Vec<String>,
        d_f: usize,
        eval: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static,
    ) -> Self {
        assert!(d_f >= 1 && !names.is_empty());
        Self { names, d_f, eval: Arc::new(eval) }
    }

    /// Library of scalar basis functions (`d_f = 1`).
    pub fn scalar(
        names: Vec<String>,
        eval: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let d_theta = names.len();
        Self::new(names, 1, move |x, u| {
            let row = eval(x, u);
            assert_eq!(row.len(), d_theta, "basis evaluation length mismatch");
            Mat::from_rows(&[row])
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn d_theta(&self) -> usize {
        self.names.len()
    }

    pub fn d_f(&self) -> usize {
        self.d_f
    }

    /// Evaluates all basis functions at `(x, u)` into a `d_f × d_theta` matrix.
    pub fn evaluate(&self, x: &[f64], u: &[f64]) -> Mat {
        let m = (self.eval)(x, u);
        debug_assert_eq!((m.rows(), m.cols()), (self.d_f, self.names.len()));
        m
    }

    /// The unknown term `Φ(x, u)·θ`.
    pub fn unknown_term(&self, x: &[f64], u: &[f64], theta: &[f64]) -> Vec<f64> {
        self.evaluate(x, u).mul_vec(theta)
    }
}

impl fmt::Debug for BasisLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisLibrary")
            .field("names", &self.names)
            .field("d_f", &self.d_f)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadDims(String),
    /// The transition or observation produced NaN/Inf; the run must abort.
    NonFinite { context: &'static str },
    Kernel(KernelError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadDims(msg) => write!(f, "bad model dimensions: {msg}"),
            ModelError::NonFinite { context } => write!(f, "non-finite value produced by {context}"),
            ModelError::Kernel(e) => write!(f, "kernel error: {e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<KernelError> for ModelError {
    fn from(e: KernelError) -> Self {
        ModelError::Kernel(e)
    }
}

type TransitionFn = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;
type ObserveFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A discrete-time parametric identification problem.
///
/// `transition(x, u, f)` advances the state one step of `dt` given the
/// evaluated unknown term `f = Φ(x, u)·θ`; `observe(x)` maps a state to the
/// measurement space. `q`/`r` are the process and measurement noise
/// covariances (`r` must be strictly positive definite, `q` may be
/// semidefinite or zero).
#[derive(Clone)]
pub struct ParametricModel {
    pub dims: Dims,
    pub basis: BasisLibrary,
    transition: Arc<TransitionFn>,
    observe: Arc<ObserveFn>,
    pub dt: f64,
    pub q: Mat,
    pub r: Mat,
}

impl ParametricModel {
    pub fn new(
        dims: Dims,
        basis: BasisLibrary,
        transition: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        observe: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        dt: f64,
        q: Mat,
        r: Mat,
    ) -> Result<Self, ModelError> {
        if basis.d_theta() != dims.d_theta || basis.d_f() != dims.d_f {
            return Err(ModelError::BadDims("basis library does not match dims".into()));
        }
        if q.rows() != dims.d_x || !q.is_square() {
            return Err(ModelError::BadDims("Q must be d_x × d_x".into()));
        }
        if r.rows() != dims.d_y || !r.is_square() {
            return Err(ModelError::BadDims("R must be d_y × d_y".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ModelError::BadDims("dt must be positive".into()));
        }
        // factorability is checked eagerly so a broken noise spec fails here,
        // not in the middle of a run
        cholesky_factor_psd(&q, &KernelCfg::default())?;
        cholesky_factor(&r)?;
        Ok(Self {
            dims,
            basis,
            transition: Arc::new(transition),
            observe: Arc::new(observe),
            dt,
            q,
            r,
        })
    }

    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        (self.observe)(x)
    }

    pub fn step_state(&self, x: &[f64], u: &[f64], f_value: &[f64]) -> Vec<f64> {
        (self.transition)(x, u, f_value)
    }
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("dims", &self.dims)
            .field("dt", &self.dt)
            .finish()
    }
}

/// Applies the augmented transition: the state block advances through the
/// dynamics with the unknown term evaluated at the current weights, the
/// weight block is copied through unchanged.
pub fn augmented_transition(model: &ParametricModel, xbar: &[f64], u: &[f64]) -> Result<Vec<f64>, ModelError> {
    let d_x = model.dims.d_x;
    assert_eq!(xbar.len(), model.dims.l_sigma(), "augmented state length");
    let (x, theta) = xbar.split_at(d_x);
    let f_value = model.basis.unknown_term(x, u, theta);
    let next = model.step_state(x, u, &f_value);
    assert_eq!(next.len(), d_x, "transition output length");
    if !next.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite { context: "augmented transition" });
    }
    let mut out = Vec::with_capacity(xbar.len());
    out.extend_from_slice(&next);
    out.extend_from_slice(theta);
    Ok(out)
}

/// Gaussian belief over the augmented state, held in square-root form:
/// mean `ξ = [μ; m]` and lower-triangular factor `U` with `Σ = U·Uᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub xi: Vec<f64>,
    pub u_factor: LowerTriangular,
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Dense covariance `U·Uᵀ`.
    pub fn covariance(&self) -> Mat {
        self.u_factor.reconstruct()
    }
}

/// Block views of a belief: state/parameter means and the `P`, `V`, `S`
/// tiles of the augmented covariance. `S` is returned explicitly
/// symmetrized.
#[derive(Debug, Clone)]
pub struct BeliefBlocks {
    pub mu: Vec<f64>,
    pub m: Vec<f64>,
    pub p: Mat,
    pub v: Mat,
    pub s: Mat,
}

pub fn belief_blocks(belief: &GaussianBelief, dims: &Dims) -> BeliefBlocks {
    let d_x = dims.d_x;
    let d_t = dims.d_theta;
    assert_eq!(belief.dim(), dims.l_sigma());
    let sigma = belief.covariance();
    BeliefBlocks {
        mu: belief.xi[..d_x].to_vec(),
        m: belief.xi[d_x..].to_vec(),
        p: sigma.block(0, 0, d_x, d_x),
        v: sigma.block(0, d_x, d_x, d_t),
        s: sigma.block(d_x, d_x, d_t, d_t).symmetrized(),
    }
}

/// Builds the initial block-diagonal belief: `P₀` factored, `S₀` diagonal,
/// zero state-parameter cross-covariance.
pub fn initial_belief(
    mu0: &[f64],
    p0: &Mat,
    m0: &[f64],
    s0_diag: &[f64],
) -> Result<GaussianBelief, ModelError> {
    if p0.rows() != mu0.len() || !p0.is_square() {
        return Err(ModelError::BadDims("P0 must be d_x × d_x".into()));
    }
    if s0_diag.iter().any(|&s| !(s > 0.0)) {
        return Err(ModelError::BadDims("S0 diagonal entries must be positive".into()));
    }
    let l = mu0.len() + m0.len();
    let lp = cholesky_factor(p0)?;
    let mut u = Mat::zeros(l, l);
    u.set_block(0, 0, lp.mat());
    for (i, &s) in s0_diag.iter().enumerate() {
        u[(mu0.len() + i, mu0.len() + i)] = s.sqrt();
    }
    let mut xi = Vec::with_capacity(l);
    xi.extend_from_slice(mu0);
    xi.extend_from_slice(m0);
    Ok(GaussianBelief { xi, u_factor: LowerTriangular::from_mat_unchecked(u) })
}

/// Square-root noise factors in the shapes the filter consumes:
/// `q_sqrt_aug` is the `l_sigma × d_x` factor of the zero-padded augmented
/// process noise (the weight block carries no process noise), `r_sqrt` the
/// factor of the measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseFactors {
    pub q_sqrt_aug: Mat,
    pub r_sqrt: LowerTriangular,
}

impl NoiseFactors {
    pub fn from_model(model: &ParametricModel) -> Result<Self, ModelError> {
        let d_x = model.dims.d_x;
        let l = model.dims.l_sigma();
        let q_low = cholesky_factor_psd(&model.q, &KernelCfg::default())?;
        let mut q_aug = Mat::zeros(l, d_x);
        q_aug.set_block(0, 0, &q_low);
        let r_sqrt = cholesky_factor(&model.r)?;
        Ok(Self { q_sqrt_aug: q_aug, r_sqrt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scenarios::wingrock::{wingrock_model, WingRockTruth};

    fn rel_err(a: &Mat, b: &Mat) -> f64 {
        a.sub(b).frobenius() / b.frobenius().max(1e-300)
    }

    #[test]
    fn theta_block_passes_through_unchanged() {
        let truth = WingRockTruth::default();
        let model = wingrock_model(&truth, 0.02, 1e-4, 0.01).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let xbar: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
            let u = [rng.normal()];
            let out = augmented_transition(&model, &xbar, &u).unwrap();
            assert_eq!(&out[2..], &xbar[2..], "weight block must be copied bit-for-bit");
        }
    }

    #[test]
    fn wingrock_equilibrium_at_origin() {
        // all weights zero, zero input: the origin is a fixed point
        let truth = WingRockTruth { weights: [0.0; 6], ..WingRockTruth::default() };
        let model = wingrock_model(&truth, 0.02, 1e-4, 0.01).unwrap();
        let xbar = vec![0.0; 8];
        let out = augmented_transition(&model, &xbar, &[0.0]).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn wingrock_matches_scalar_euler_step() {
        // one explicit Euler step at a generic point, written out in scalar
        // arithmetic independent of the model plumbing
        let truth = WingRockTruth::default();
        let dt = 0.02;
        let model = wingrock_model(&truth, dt, 1e-4, 0.01).unwrap();
        let (roll, rate, aileron) = (10.0, 5.0, -2.0);
        let w = truth.weights;
        let mut xbar = vec![roll, rate];
        xbar.extend_from_slice(&w);
        let out = augmented_transition(&model, &xbar, &[aileron]).unwrap();

        let delta = w[0]
            + w[1] * roll
            + w[2] * rate
            + w[3] * roll.abs() * rate
            + w[4] * rate.abs() * rate
            + w[5] * roll.powi(3);
        let expect_roll = roll + dt * rate;
        let expect_rate = rate + dt * (truth.l_gain * aileron + delta);
        assert!((out[0] - expect_roll).abs() < 1e-14);
        assert!((out[1] - expect_rate).abs() < 1e-14);
    }

    #[test]
    fn transition_flags_nonfinite() {
        let dims = Dims::new(1, 0, 1, 1, 1).unwrap();
        let basis = BasisLibrary::scalar(vec!["1".into()], |_, _| vec![1.0]);
        let model = ParametricModel::new(
            dims,
            basis,
            |_, _, _| vec![f64::NAN],
            |x| vec![x[0]],
            0.02,
            Mat::zeros(1, 1),
            Mat::identity(1),
        )
        .unwrap();
        match augmented_transition(&model, &[0.0, 0.0], &[]) {
            Err(ModelError::NonFinite { .. }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn initial_belief_identity_case() {
        let b = initial_belief(&[0.0, 0.0], &Mat::identity(2), &[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(b.u_factor.mat(), &Mat::identity(5));
    }

    #[test]
    fn initial_belief_round_trips_blocks() {
        let mut rng = Rng::new(5);
        let d_x = 2;
        let d_t = 6;
        let g = Mat::from_fn(d_x, d_x, |_, _| rng.normal());
        let mut p0 = g.matmul(&g.transpose());
        for i in 0..d_x {
            p0[(i, i)] += 1.0;
        }
        let p0 = p0.symmetrized();
        let mu0 = vec![0.3, -1.2];
        let m0 = vec![0.0; d_t];
        let s0: Vec<f64> = (0..d_t).map(|_| 0.5 + rng.uniform() * 10.0).collect();
        let belief = initial_belief(&mu0, &p0, &m0, &s0).unwrap();

        let dims = Dims::new(d_x, 1, 1, d_t, 1).unwrap();
        let blocks = belief_blocks(&belief, &dims);
        assert_eq!(blocks.mu, mu0);
        assert_eq!(blocks.m, m0);
        assert!(rel_err(&blocks.p, &p0) < 1e-12);
        // cross block is exactly zero by construction
        assert_eq!(blocks.v, Mat::zeros(d_x, d_t));
        let s_expect = Mat::from_diag(&s0);
        assert!(rel_err(&blocks.s, &s_expect) < 1e-12);
        // the parameter marginal of a valid belief factors cleanly
        cholesky_factor(&blocks.s).unwrap();
    }

    #[test]
    fn belief_blocks_tile_full_covariance() {
        let mut rng = Rng::new(9);
        let dims = Dims::new(3, 0, 1, 4, 1).unwrap();
        let l = dims.l_sigma();
        let g = Mat::from_fn(l, l, |i, j| if j <= i { rng.normal() + if i == j { 2.0 } else { 0.0 } } else { 0.0 });
        let u = LowerTriangular::from_mat(g).unwrap();
        let xi: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
        let belief = GaussianBelief { xi, u_factor: u };
        let sigma = belief.covariance();
        let blocks = belief_blocks(&belief, &dims);
        assert!(rel_err(&blocks.p, &sigma.block(0, 0, 3, 3)) < 1e-15);
        assert!(rel_err(&blocks.v, &sigma.block(0, 3, 3, 4)) < 1e-15);
        assert!(rel_err(&blocks.s, &sigma.block(3, 3, 4, 4)) < 1e-12);
    }

    #[test]
    fn basis_evaluation_is_deterministic() {
        let truth = WingRockTruth::default();
        let model = wingrock_model(&truth, 0.02, 1e-4, 0.01).unwrap();
        let x = [3.7, -11.2];
        let u = [0.4];
        let a = model.basis.evaluate(&x, &u);
        let b = model.basis.evaluate(&x, &u);
        assert_eq!(a, b);
    }
}
