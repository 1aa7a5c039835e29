//! Relevance singular vector machine (RSVM).
//!
//! The unknown `p x q` matrix is modelled as `X = alpha_L^{-1/2} U alpha_R^{-1/2}`
//! with `U` i.i.d. standard normal, so `vec(X) ~ N(0, (alpha_R kron alpha_L)^{-1})`.
//! Given `y = A vec(X) + n`, `n ~ N(0, beta^{-1} I)`, each iteration runs
//!
//! 1. the LMMSE step `Sigma = (alpha_R kron alpha_L + beta A^T A)^{-1}`,
//!    `vec(X^) = beta Sigma A^T y`;
//! 2. the noise-precision update;
//! 3. the left precision update, then the right one using the fresh left;
//! 4. optionally, precision balancing.
//!
//! Steps 2-3 are the M-step of an EM iteration for
//! `log p(y | alpha_L, alpha_R, beta) + log p(alpha_L) + log p(alpha_R) + log p(beta)`,
//! so with balancing disabled [`objective`] never decreases.
//!
//! One-sided variants keep the other precision fixed at the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_inner, kron, mat_pow_sym, partial_trace_l, partial_trace_r, unvec, vec, Mat, PdFactor, SymPd, Vector,
};
use crate::penalties::{potential_k, schatten_update_factor, PenaltyKind};

/// Default hyperprior constants `a = b`.
pub const DEFAULT_HYPER: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Relative floor on the noise-update denominator, scaled by `max(1, |y|^2)`.
pub const NOISE_DENOM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    Left,
    Right,
    TwoSided,
}

impl Sidedness {
    fn updates_left(self) -> bool {
        matches!(self, Sidedness::Left | Sidedness::TwoSided)
    }

    fn updates_right(self) -> bool {
        matches!(self, Sidedness::Right | Sidedness::TwoSided)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRule {
    /// `beta = (m + 2a) / (|y - A x|^2 + tr(A Sigma A^T) + 2b)`.
    TraceForm,
    /// `beta = (tr((alpha_R kron alpha_L) Sigma) + 2a) / (|y - A x|^2 + 2b)`.
    GammaForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaInit {
    /// `m / |y|^2`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub penalty: PenaltyKind,
    pub sided: Sidedness,
    pub noise_rule: NoiseRule,
    pub a: f64,
    pub b: f64,
    pub balancing: bool,
    pub max_iters: usize,
    pub tol: f64,
    pub beta_init: BetaInit,
    pub track_objective: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            penalty: PenaltyKind::schatten(crate::penalties::DEFAULT_SCHATTEN_S),
            sided: Sidedness::TwoSided,
            noise_rule: NoiseRule::TraceForm,
            a: DEFAULT_HYPER,
            b: DEFAULT_HYPER,
            balancing: true,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            beta_init: BetaInit::Auto,
            track_objective: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, p: usize, q: usize) -> Result<()> {
        self.penalty.validate()?;
        match self.penalty {
            PenaltyKind::Nuclear => {
                return Err(Error::InvalidParameter(
                    "RSVM needs a Schatten or log-det penalty; use the nuclear-norm baseline instead".into(),
                ))
            }
            PenaltyKind::LogDet { nu, .. } => {
                // The prior on a left precision needs nu > q - 2, on a right one nu > p - 2.
                let mut need = f64::NEG_INFINITY;
                if self.sided.updates_left() {
                    need = need.max(q as f64 - 2.0);
                }
                if self.sided.updates_right() {
                    need = need.max(p as f64 - 2.0);
                }
                if nu <= need {
                    return Err(Error::InvalidParameter(format!(
                        "log-det weight nu = {nu} must exceed {need} for a {p}x{q} problem"
                    )));
                }
            }
            PenaltyKind::SchattenS { .. } => {}
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {} must be positive", self.tol)));
        }
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hyperprior a = {}, b = {} must be non-negative",
                self.a, self.b
            )));
        }
        if let BetaInit::Fixed(beta) = self.beta_init {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::InvalidParameter(format!("initial beta = {beta} must be positive")));
            }
        }
        Ok(())
    }
}

/// Measurement operator and data, with the normal-equation pieces cached.
#[derive(Clone, Debug)]
pub struct Measurements {
    a: Mat,
    y: Vector,
    p: usize,
    q: usize,
    gram: Mat,
    aty: Vector,
}

impl Measurements {
    pub fn new(a: Mat, y: Vector, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::dim("matrix shape", "p, q >= 1", format!("{p}x{q}")));
        }
        if a.ncols() != p * q {
            return Err(Error::dim("measurement matrix columns", p * q, a.ncols()));
        }
        if a.nrows() == 0 {
            return Err(Error::dim("measurement count", "m >= 1", 0));
        }
        if y.len() != a.nrows() {
            return Err(Error::dim("measurement vector", a.nrows(), y.len()));
        }
        crate::linalg::ensure_finite(&a, "measurement matrix")?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement vector"));
        }
        let gram = a.tr_mul(&a);
        let aty = a.tr_mul(&y);
        Ok(Measurements { a, y, p, q, gram, aty })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `A^T A`.
    pub fn gram(&self) -> &Mat {
        &self.gram
    }

    fn residual_norm2(&self, xhat: &Mat) -> f64 {
        (&self.y - &self.a * vec(xhat)).norm_squared()
    }
}

/// Current iterate of the estimator.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    pub xhat: Mat,
    /// Posterior covariance of `vec(X)`.
    pub sigma: SymPd,
    pub alpha_l: SymPd,
    pub alpha_r: SymPd,
    pub beta: f64,
    pub objective: Option<f64>,
}

/// Posterior mean and covariance for fixed precisions.
pub fn lmmse_update(meas: &Measurements, alpha_l: &SymPd, alpha_r: &SymPd, beta: f64) -> Result<(Mat, SymPd)> {
    let (p, q) = meas.shape();
    if alpha_l.dim() != p || alpha_r.dim() != q {
        return Err(Error::dim(
            "precision dimensions",
            format!("{p} and {q}"),
            format!("{} and {}", alpha_l.dim(), alpha_r.dim()),
        ));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("noise precision beta = {beta} must be positive")));
    }
    let mut precision = kron(alpha_r.as_mat(), alpha_l.as_mat())?;
    precision.zip_apply(&meas.gram, |pv, g| *pv += beta * g);
    let factor = PdFactor::new(&precision, "posterior precision alpha_R kron alpha_L + beta A^T A")?;
    let mean = factor.solve_vec(&(&meas.aty * beta))?;
    let xhat = unvec(mean.as_slice(), p, q)?;
    Ok((xhat, factor.inverse()))
}

/// New noise precision from the current posterior.
pub fn noise_update(state: &PosteriorState, meas: &Measurements, config: &EstimatorConfig) -> Result<f64> {
    let resid2 = meas.residual_norm2(&state.xhat);
    let (num, den) = match config.noise_rule {
        NoiseRule::TraceForm => {
            let trace = frobenius_inner(state.sigma.as_mat(), &meas.gram);
            (meas.m() as f64 + 2.0 * config.a, resid2 + trace + 2.0 * config.b)
        }
        NoiseRule::GammaForm => {
            let (p, _) = meas.shape();
            let weighted = partial_trace_l(&state.sigma, &state.alpha_r, p)?;
            let trace = frobenius_inner(state.alpha_l.as_mat(), weighted.as_mat());
            (trace + 2.0 * config.a, resid2 + 2.0 * config.b)
        }
    };
    if !den.is_finite() || den < 0.0 {
        return Err(Error::NoiseDenominator(den));
    }
    let floor = NOISE_DENOM_FLOOR * meas.y.norm_squared().max(1.0);
    Ok(num / den.max(floor))
}

/// `X^ alpha_R X^T + Sigma~_L + eps I_p`.
fn left_moment(state: &PosteriorState, eps: f64) -> Result<Mat> {
    let p = state.alpha_l.dim();
    let st = partial_trace_l(&state.sigma, &state.alpha_r, p)?;
    Ok(&state.xhat * state.alpha_r.as_mat() * state.xhat.transpose() + st.as_mat() + Mat::identity(p, p) * eps)
}

/// `X^T alpha_L X^ + Sigma~_R + eps I_q`.
fn right_moment(state: &PosteriorState, alpha_l: &SymPd, eps: f64) -> Result<Mat> {
    let q = state.alpha_r.dim();
    let st = partial_trace_r(&state.sigma, alpha_l, q)?;
    Ok(state.xhat.transpose() * alpha_l.as_mat() * &state.xhat + st.as_mat() + Mat::identity(q, q) * eps)
}

/// `alpha <- factor * W^power` applied left then right, the right moment
/// using the freshly updated left precision.
fn update_sides(state: &PosteriorState, sided: Sidedness, eps: f64, factor: f64, power: f64) -> Result<(SymPd, SymPd)> {
    let alpha_l = if sided.updates_left() {
        mat_pow_sym(&left_moment(state, eps)?, power)?.scaled(factor)?
    } else {
        state.alpha_l.clone()
    };
    let alpha_r = if sided.updates_right() {
        mat_pow_sym(&right_moment(state, &alpha_l, eps)?, power)?.scaled(factor)?
    } else {
        state.alpha_r.clone()
    };
    Ok((alpha_l, alpha_r))
}

/// Precision update under the Schatten-`s` prior:
/// `alpha <- (s/2) (W + eps I)^{(s-2)/2}`.
pub fn alpha_update_schatten(state: &PosteriorState, s: f64, eps: f64, sided: Sidedness) -> Result<(SymPd, SymPd)> {
    update_sides(state, sided, eps, schatten_update_factor(s), (s - 2.0) / 2.0)
}

/// Precision update under the log-det (Wishart) prior: `alpha <- nu (W + eps I)^{-1}`.
pub fn alpha_update_logdet(state: &PosteriorState, nu: f64, eps: f64, sided: Sidedness) -> Result<(SymPd, SymPd)> {
    update_sides(state, sided, eps, nu, -1.0)
}

pub fn alpha_update(state: &PosteriorState, penalty: &PenaltyKind, sided: Sidedness) -> Result<(SymPd, SymPd)> {
    match *penalty {
        PenaltyKind::SchattenS { s, epsilon } => alpha_update_schatten(state, s, epsilon, sided),
        PenaltyKind::LogDet { nu, epsilon } => alpha_update_logdet(state, nu, epsilon, sided),
        PenaltyKind::Nuclear => Err(Error::Unsupported("the nuclear norm has no precision update")),
    }
}

/// Rescales the precisions so that `tr(alpha_L^-1) = tr(alpha_R^-1)` and
/// `tr(alpha_L^-1) tr(alpha_R^-1) = |X^|_F^2 + tr(Sigma)`.
///
/// Returns `None` when `|X^|_F^2 + tr(Sigma)` vanishes.
pub fn balance_precisions(state: &PosteriorState) -> Result<Option<(SymPd, SymPd)>> {
    let energy = state.xhat.norm_squared() + state.sigma.trace();
    if !(energy > 0.0) {
        log::warn!("skipping precision balancing: posterior energy is {energy}");
        return Ok(None);
    }
    let tau = energy.sqrt();
    let tr_l = state.alpha_l.factor("left precision")?.inverse().trace();
    let tr_r = state.alpha_r.factor("right precision")?.inverse().trace();
    Ok(Some((
        state.alpha_l.scaled(tr_l / tau)?,
        state.alpha_r.scaled(tr_r / tau)?,
    )))
}

/// One-sided counterpart of [`balance_precisions`]: rescales the free
/// precision so that `tr(alpha_L^-1) tr(alpha_R^-1) = |X^|_F^2 + tr(Sigma)`,
/// leaving the pinned side alone.
pub fn balance_free_side(state: &PosteriorState, sided: Sidedness) -> Result<Option<(SymPd, SymPd)>> {
    if sided == Sidedness::TwoSided {
        return balance_precisions(state);
    }
    let energy = state.xhat.norm_squared() + state.sigma.trace();
    if !(energy > 0.0) {
        log::warn!("skipping precision balancing: posterior energy is {energy}");
        return Ok(None);
    }
    let tr_l = state.alpha_l.factor("left precision")?.inverse().trace();
    let tr_r = state.alpha_r.factor("right precision")?.inverse().trace();
    let c = tr_l * tr_r / energy;
    Ok(Some(match sided {
        Sidedness::Left => (state.alpha_l.scaled(c)?, state.alpha_r.clone()),
        _ => (state.alpha_l.clone(), state.alpha_r.scaled(c)?),
    }))
}

/// Terms of the MAP-EM objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `log N(y | 0, beta^{-1} I + A (alpha_R kron alpha_L)^{-1} A^T)`.
    pub log_likelihood: f64,
    /// `-K(alpha_L)/2`, zero when the left precision is pinned.
    pub log_prior_left: f64,
    /// `-K(alpha_R)/2`, zero when the right precision is pinned.
    pub log_prior_right: f64,
    /// `a log beta - b beta`.
    pub log_prior_beta: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.log_likelihood + self.log_prior_left + self.log_prior_right + self.log_prior_beta
    }
}

/// Marginal log-likelihood of `y` under the Kronecker prior.
pub fn log_marginal_likelihood(meas: &Measurements, alpha_l: &SymPd, alpha_r: &SymPd, beta: f64) -> Result<f64> {
    let (p, q) = meas.shape();
    let m = meas.m();
    let inv_l = alpha_l.factor("left precision")?.inverse();
    let inv_r = alpha_r.factor("right precision")?.inverse();
    // Row i of A K^{-1} is vec(alpha_L^{-1} A_i alpha_R^{-1}) with A_i = unvec(a_i).
    let mut weighted = Mat::zeros(m, p * q);
    for i in 0..m {
        let row: Vec<f64> = meas.a.row(i).iter().copied().collect();
        let ai = unvec(&row, p, q)?;
        let bi = inv_l.as_mat() * ai * inv_r.as_mat();
        weighted.row_mut(i).copy_from_slice(bi.as_slice());
    }
    let mut cov = &weighted * meas.a.transpose();
    for i in 0..m {
        cov[(i, i)] += 1.0 / beta;
    }
    crate::linalg::symmetrize(&mut cov);
    let factor = PdFactor::new(&cov, "marginal covariance of y")?;
    let quad = meas.y.dot(&factor.solve_vec(&meas.y)?);
    Ok(-0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + factor.log_det() + quad))
}

pub fn objective_terms(state: &PosteriorState, meas: &Measurements, config: &EstimatorConfig) -> Result<ObjectiveTerms> {
    let (p, q) = meas.shape();
    let log_likelihood = log_marginal_likelihood(meas, &state.alpha_l, &state.alpha_r, state.beta)?;
    let log_prior_left = if config.sided.updates_left() {
        -0.5 * potential_k(&config.penalty, &state.alpha_l, q)?
    } else {
        0.0
    };
    let log_prior_right = if config.sided.updates_right() {
        -0.5 * potential_k(&config.penalty, &state.alpha_r, p)?
    } else {
        0.0
    };
    let log_prior_beta = if config.a > 0.0 {
        config.a * state.beta.ln()
    } else {
        0.0
    } - config.b * state.beta;
    Ok(ObjectiveTerms {
        log_likelihood,
        log_prior_left,
        log_prior_right,
        log_prior_beta,
    })
}

/// `log p(y | alpha_L, alpha_R, beta) + log p(alpha_L) + log p(alpha_R) + log p(beta)`,
/// constants dropped.
pub fn objective(state: &PosteriorState, meas: &Measurements, config: &EstimatorConfig) -> Result<f64> {
    Ok(objective_terms(state, meas, config)?.total())
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    /// 0 for the initial state.
    pub iteration: usize,
    pub xhat: Mat,
    pub beta: f64,
    pub objective: Option<f64>,
    /// `|X^_k - X^_{k-1}|_F / max(1, |X^_{k-1}|_F)`; `None` for the initial state.
    pub relative_change: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub state: PosteriorState,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// Singular values of the estimate, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.state.xhat.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

fn initial_beta(meas: &Measurements, init: BetaInit) -> f64 {
    match init {
        BetaInit::Fixed(b) => b,
        BetaInit::Auto => {
            let energy = meas.y.norm_squared();
            if energy > 0.0 {
                meas.m() as f64 / energy
            } else {
                1.0
            }
        }
    }
}

/// Posterior at unit precisions and the configured initial noise precision.
pub fn initial_state(meas: &Measurements, config: &EstimatorConfig) -> Result<PosteriorState> {
    let (p, q) = meas.shape();
    let alpha_l = SymPd::identity(p);
    let alpha_r = SymPd::identity(q);
    let beta = initial_beta(meas, config.beta_init);
    let (xhat, sigma) = lmmse_update(meas, &alpha_l, &alpha_r, beta)?;
    let mut state = PosteriorState {
        xhat,
        sigma,
        alpha_l,
        alpha_r,
        beta,
        objective: None,
    };
    if config.track_objective {
        state.objective = Some(objective(&state, meas, config)?);
    }
    Ok(state)
}

/// One full iteration: noise, precisions, optional balancing, then a fresh LMMSE step.
pub fn step(state: &PosteriorState, meas: &Measurements, config: &EstimatorConfig) -> Result<PosteriorState> {
    let beta = noise_update(state, meas, config)?;
    let (mut alpha_l, mut alpha_r) = alpha_update(state, &config.penalty, config.sided)?;
    if config.balancing {
        let updated = PosteriorState {
            xhat: state.xhat.clone(),
            sigma: state.sigma.clone(),
            alpha_l,
            alpha_r,
            beta,
            objective: None,
        };
        match balance_free_side(&updated, config.sided)? {
            Some((l, r)) => {
                alpha_l = l;
                alpha_r = r;
            }
            None => {
                alpha_l = updated.alpha_l;
                alpha_r = updated.alpha_r;
            }
        }
    }
    let (xhat, sigma) = lmmse_update(meas, &alpha_l, &alpha_r, beta)?;
    let mut next = PosteriorState {
        xhat,
        sigma,
        alpha_l,
        alpha_r,
        beta,
        objective: None,
    };
    if config.track_objective {
        next.objective = Some(objective(&next, meas, config)?);
    }
    Ok(next)
}

/// Runs the estimator on a prepared measurement set.
pub fn fit_measurements(meas: &Measurements, config: &EstimatorConfig) -> Result<FitResult> {
    let (p, q) = meas.shape();
    config.validate(p, q)?;
    let mut state = initial_state(meas, config).map_err(|e| at_iteration(0, e))?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        xhat: state.xhat.clone(),
        beta: state.beta,
        objective: state.objective,
        relative_change: None,
    }];
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        let next = step(&state, meas, config).map_err(|e| at_iteration(iter, e))?;
        let change = (&next.xhat - &state.xhat).norm() / state.xhat.norm().max(1.0);
        iterations = iter;
        trace.push(IterationRecord {
            iteration: iter,
            xhat: next.xhat.clone(),
            beta: next.beta,
            objective: next.objective,
            relative_change: Some(change),
        });
        state = next;
        if change <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        state,
        trace,
        iterations,
        converged,
    })
}

/// Estimates the `p x q` matrix behind `y = A vec(X) + n`.
pub fn fit(a: &Mat, y: &Vector, p: usize, q: usize, config: &EstimatorConfig) -> Result<FitResult> {
    let meas = Measurements::new(a.clone(), y.clone(), p, q)?;
    fit_measurements(&meas, config)
}

fn at_iteration(iter: usize, e: Error) -> Error {
    match e {
        Error::InvalidParameter(_) | Error::Dimension { .. } => e,
        other => Error::AtIteration {
            iter,
            source: Box::new(other),
        },
    }
}
