//! Reference estimators: the vector relevance vector machine and
//! nuclear-norm minimization under a residual-ball constraint.

use crate::error::{Error, Result};
use crate::linalg::{unvec, vec, Mat, PdFactor, SymPd, Vector};

/// Precisions above this are treated as pruned (coefficient exactly zero).
pub const RVM_PRUNE: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct RvmConfig {
    pub a: f64,
    pub b: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// `None` picks `m / |y|^2`.
    pub beta_init: Option<f64>,
}

impl Default for RvmConfig {
    fn default() -> Self {
        RvmConfig {
            a: 1e-6,
            b: 1e-6,
            max_iters: 500,
            tol: 1e-6,
            beta_init: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RvmState {
    pub gamma: Vector,
    pub beta: f64,
    pub xhat: Vector,
    pub sigma: SymPd,
    pub iterations: usize,
    pub converged: bool,
}

impl RvmState {
    /// Indices whose precision stayed below [`RVM_PRUNE`].
    pub fn support(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&i| self.gamma[i] <= RVM_PRUNE).collect()
    }

    /// The estimate with pruned coefficients set to zero.
    pub fn pruned_xhat(&self) -> Vector {
        Vector::from_fn(self.xhat.len(), |i, _| if self.gamma[i] > RVM_PRUNE { 0.0 } else { self.xhat[i] })
    }
}

/// `Sigma = (diag(gamma) + beta A^T A)^{-1}`, `x = beta Sigma A^T y`.
pub fn rvm_posterior(a: &Mat, y: &Vector, gamma: &Vector, beta: f64) -> Result<(Vector, SymPd)> {
    if gamma.len() != a.ncols() {
        return Err(Error::dim("rvm precisions", a.ncols(), gamma.len()));
    }
    let mut precision = a.tr_mul(a) * beta;
    for i in 0..gamma.len() {
        precision[(i, i)] += gamma[i];
    }
    let factor = PdFactor::new(&precision, "rvm posterior precision")?;
    let x = factor.solve_vec(&(a.tr_mul(y) * beta))?;
    Ok((x, factor.inverse()))
}

pub fn rvm_fit(a: &Mat, y: &Vector, config: &RvmConfig) -> Result<RvmState> {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Err(Error::dim("rvm measurement matrix", "m, n >= 1", format!("{m}x{n}")));
    }
    if y.len() != m {
        return Err(Error::dim("rvm measurement vector", m, y.len()));
    }
    if !(config.tol > 0.0) || config.a < 0.0 || config.b < 0.0 {
        return Err(Error::InvalidParameter("rvm needs tol > 0 and a, b >= 0".into()));
    }
    let energy = y.norm_squared();
    let mut beta = config
        .beta_init
        .unwrap_or(if energy > 0.0 { m as f64 / energy } else { 1.0 });
    let mut gamma = Vector::from_element(n, 1.0);
    let (mut xhat, mut sigma) = rvm_posterior(a, y, &gamma, beta)?;
    let mut iterations = 0;
    let mut converged = false;
    let floor = crate::estimator::NOISE_DENOM_FLOOR * energy.max(1.0);
    for iter in 1..=config.max_iters {
        let step = || -> Result<(Vector, f64, Vector, SymPd)> {
            let s = sigma.as_mat();
            let new_gamma = Vector::from_fn(n, |i, _| {
                let g = (1.0 - gamma[i] * s[(i, i)] + 2.0 * config.a) / (xhat[i] * xhat[i] + 2.0 * config.b).max(f64::MIN_POSITIVE);
                // 1 - gamma Sigma_ii lies in [0, 1]; rounding can push it a hair negative.
                g.clamp(f64::MIN_POSITIVE, RVM_PRUNE * 1e3)
            });
            let resid = (y - a * &xhat).norm_squared();
            let dof: f64 = (0..n).map(|i| gamma[i] * s[(i, i)]).sum();
            let new_beta = (dof + 2.0 * config.a) / (resid + 2.0 * config.b).max(floor);
            let (x, sg) = rvm_posterior(a, y, &new_gamma, new_beta)?;
            Ok((new_gamma, new_beta, x, sg))
        };
        let (g, b, x, sg) = step().map_err(|e| Error::AtIteration {
            iter,
            source: Box::new(e),
        })?;
        let change = (&x - &xhat).norm() / xhat.norm().max(1.0);
        gamma = g;
        beta = b;
        xhat = x;
        sigma = sg;
        iterations = iter;
        if change <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(RvmState {
        gamma,
        beta,
        xhat,
        sigma,
        iterations,
        converged,
    })
}

/// `sigma_n sqrt(m + sqrt(8 m))`.
pub fn eps_from_noise(sigma_n: f64, m: usize) -> f64 {
    let m = m as f64;
    sigma_n * (m + (8.0 * m).sqrt()).sqrt()
}

/// Singular-value soft thresholding, the prox of `tau |X|_*`.
pub fn soft_threshold_svt(x: &Mat, tau: f64) -> Mat {
    let svd = x.clone().svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        unreachable!("svd requested both factors")
    };
    let shrunk = svd.singular_values.map(|s| (s - tau).max(0.0));
    u * Mat::from_diagonal(&shrunk) * vt
}

pub fn nuclear_norm(x: &Mat) -> f64 {
    x.clone().singular_values().sum()
}

#[derive(Clone, Debug)]
pub struct NuclearConfig {
    pub max_inner: usize,
    /// Relative objective decrease that stops a proximal-gradient run.
    pub inner_tol: f64,
    pub max_bisections: usize,
    /// Accepted residual band, as fractions of the ball radius.
    pub band: (f64, f64),
}

impl Default for NuclearConfig {
    fn default() -> Self {
        NuclearConfig {
            max_inner: 5000,
            inner_tol: 1e-6,
            max_bisections: 60,
            band: (0.99, 1.01),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NuclearResult {
    pub xhat: Mat,
    pub lambda: f64,
    pub residual: f64,
    /// Bisection did not land the residual inside the accepted band.
    pub warning: bool,
}

struct Prox<'a> {
    a: &'a Mat,
    y: &'a Vector,
    p: usize,
    q: usize,
    step: f64,
}

impl Prox<'_> {
    fn objective(&self, x: &Mat, lambda: f64) -> f64 {
        0.5 * (self.y - self.a * vec(x)).norm_squared() + lambda * nuclear_norm(x)
    }

    /// FISTA on `1/2 |y - A vec X|^2 + lambda |X|_*` from `start`.
    fn solve(&self, start: &Mat, lambda: f64, max_iter: usize, tol: f64) -> Result<Mat> {
        let mut x = start.clone();
        let mut z = start.clone();
        let mut t: f64 = 1.0;
        let mut obj = self.objective(&x, lambda);
        let mut small_steps = 0;
        for _ in 0..max_iter {
            let grad = self.a.tr_mul(&(self.a * vec(&z) - self.y));
            let g = unvec(grad.as_slice(), self.p, self.q)?;
            let next = soft_threshold_svt(&(&z - g * self.step), lambda * self.step);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let next_obj = self.objective(&next, lambda);
            if next_obj > obj {
                // Restart momentum when the objective goes up.
                z = x.clone();
                t = 1.0;
                continue;
            }
            z = &next + (&next - &x) * ((t - 1.0) / t_next);
            let decrease = obj - next_obj;
            x = next;
            t = t_next;
            let done = decrease <= tol * obj.abs().max(f64::MIN_POSITIVE);
            obj = next_obj;
            // Require a few consecutive small decreases so a lucky step does not stop early.
            small_steps = if done { small_steps + 1 } else { 0 };
            if small_steps >= 3 {
                break;
            }
        }
        Ok(x)
    }

    fn residual(&self, x: &Mat) -> f64 {
        (self.y - self.a * vec(x)).norm()
    }
}

/// `min |X|_*` subject to `|y - A vec X| <= eps_ball`, via a bisection on the
/// Lagrange weight of the penalized problem.
pub fn nuclear_min(a: &Mat, y: &Vector, p: usize, q: usize, eps_ball: f64, config: &NuclearConfig) -> Result<NuclearResult> {
    if a.ncols() != p * q {
        return Err(Error::dim("measurement matrix columns", p * q, a.ncols()));
    }
    if y.len() != a.nrows() {
        return Err(Error::dim("measurement vector", a.nrows(), y.len()));
    }
    if !(eps_ball >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius {eps_ball} must be non-negative")));
    }
    let zero = Mat::zeros(p, q);
    if y.norm() <= eps_ball {
        return Ok(NuclearResult {
            residual: y.norm(),
            xhat: zero,
            lambda: f64::INFINITY,
            warning: false,
        });
    }
    let spectral = a.clone().singular_values().max();
    if spectral == 0.0 {
        return Ok(NuclearResult {
            residual: y.norm(),
            xhat: zero,
            lambda: f64::INFINITY,
            warning: true,
        });
    }
    let prox = Prox {
        a,
        y,
        p,
        q,
        step: 1.0 / (spectral * spectral),
    };
    // Above lambda_max the solution is exactly zero.
    let aty = a.tr_mul(y);
    let lambda_max = unvec(aty.as_slice(), p, q)?.singular_values().max();
    let (lo_band, hi_band) = (config.band.0 * eps_ball, config.band.1 * eps_ball);

    let mut lo = lambda_max * 1e-10;
    let mut hi = lambda_max;
    let mut best: Option<(Mat, f64, f64)> = None;
    let x_lo = prox.solve(&zero, lo, config.max_inner, config.inner_tol)?;
    let r_lo = prox.residual(&x_lo);
    if r_lo >= lo_band {
        // Even a nearly unregularized fit cannot get inside the ball.
        let warning = r_lo > hi_band;
        if warning {
            log::warn!("nuclear_min: residual {r_lo} at the smallest weight exceeds the ball radius {eps_ball}");
        }
        return Ok(NuclearResult {
            xhat: x_lo,
            lambda: lo,
            residual: r_lo,
            warning,
        });
    }
    let mut warm = x_lo;
    for _ in 0..config.max_bisections {
        let mid = (lo * hi).sqrt();
        let x = prox.solve(&warm, mid, config.max_inner, config.inner_tol)?;
        let r = prox.residual(&x);
        if r <= hi_band && best.as_ref().is_none_or(|(_, _, br)| (r - eps_ball).abs() < (br - eps_ball).abs() || *br > hi_band) {
            best = Some((x.clone(), mid, r));
        }
        if r >= lo_band && r <= hi_band {
            return Ok(NuclearResult {
                xhat: x,
                lambda: mid,
                residual: r,
                warning: false,
            });
        }
        if r < lo_band {
            lo = mid;
            warm = x;
        } else {
            hi = mid;
        }
    }
    log::warn!("nuclear_min: bisection did not reach the residual band around {eps_ball}");
    let (xhat, lambda, residual) = best.unwrap_or_else(|| {
        let r = prox.residual(&warm);
        (warm, lo, r)
    });
    Ok(NuclearResult {
        xhat,
        lambda,
        residual,
        warning: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eps_formula() {
        assert_eq!(eps_from_noise(0.0, 10), 0.0);
        assert_abs_diff_eq!(eps_from_noise(1.0, 2), 6f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(eps_from_noise(0.5, 100), 5.663132332187, epsilon = 1e-11);
    }

    #[test]
    fn svt_on_diagonal_is_scalar_shrinkage() {
        let d = [3.0, -0.5, 1.2];
        let x = Mat::from_diagonal(&Vector::from_row_slice(&d));
        let out = soft_threshold_svt(&x, 1.0);
        for i in 0..3 {
            let expect = d[i].signum() * (d[i].abs() - 1.0).max(0.0);
            assert_abs_diff_eq!(out[(i, i)], expect, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(out.norm_squared() - out.diagonal().norm_squared(), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn rvm_zero_data() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        let y = Vector::zeros(2);
        let cfg = RvmConfig {
            max_iters: 5,
            ..Default::default()
        };
        let st = rvm_fit(&a, &y, &cfg).unwrap();
        assert!(st.xhat.iter().all(|&v| v == 0.0));
        assert!(st.gamma.iter().all(|&g| g > 1.0));
    }

    #[test]
    fn rvm_scalar_hand_iteration() {
        let (av, yv, a0, b0) = (1.0, 2.0, 0.0, 0.0);
        let a = Mat::from_element(1, 1, av);
        let y = Vector::from_element(1, yv);
        // Hand iteration with gamma_0 = 1, beta_0 = m / y^2.
        let (mut g, mut be) = (1.0f64, 1.0 / (yv * yv));
        let mut s = 1.0 / (g + be);
        let mut x = be * s * yv;
        for _ in 0..3 {
            let ng = (1.0 - g * s + 2.0 * a0) / (x * x + 2.0 * b0);
            let nb = (g * s + 2.0 * a0) / ((yv - x).powi(2) + 2.0 * b0);
            g = ng;
            be = nb;
            s = 1.0 / (g + be);
            x = be * s * yv;
        }
        let cfg = RvmConfig {
            a: a0,
            b: b0,
            max_iters: 3,
            tol: 1e-300,
            beta_init: None,
        };
        let st = rvm_fit(&a, &y, &cfg).unwrap();
        assert_eq!(st.iterations, 3);
        assert_abs_diff_eq!(st.gamma[0], g, epsilon = 1e-12 * g);
        assert_abs_diff_eq!(st.beta, be, epsilon = 1e-12 * be);
        assert_abs_diff_eq!(st.xhat[0], x, epsilon = 1e-12);
    }

    #[test]
    fn rvm_pinned_gamma_is_ridge() {
        let (av, yv, g, b) = (1.3, -0.4, 2.0, 5.0);
        let a = Mat::from_element(1, 1, av);
        let (x, s) = rvm_posterior(&a, &Vector::from_element(1, yv), &Vector::from_element(1, g), b).unwrap();
        let ridge = b * av * yv / (g + b * av * av);
        assert_abs_diff_eq!(x[0], ridge, epsilon = 1e-10);
        assert_abs_diff_eq!(s.as_mat()[(0, 0)], 1.0 / (g + b * av * av), epsilon = 1e-10);
    }

    #[test]
    fn nuclear_huge_ball_gives_zero() {
        let a = Mat::identity(4, 4);
        let y = Vector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]);
        let res = nuclear_min(&a, &y, 2, 2, 100.0, &NuclearConfig::default()).unwrap();
        assert_eq!(res.xhat, Mat::zeros(2, 2));
        assert!(!res.warning);
    }

    #[test]
    fn nuclear_tight_ball_reproduces_data() {
        let a = Mat::identity(4, 4);
        let y = Vector::from_row_slice(&[1.0, -2.0, 0.5, 4.0]);
        let res = nuclear_min(&a, &y, 2, 2, 1e-9, &NuclearConfig::default()).unwrap();
        assert!((vec(&res.xhat) - &y).norm() < 1e-6, "{}", res.residual);
    }

    #[test]
    fn nuclear_residual_lands_in_band() {
        let a = Mat::identity(4, 4);
        let y = Vector::from_row_slice(&[3.0, 1.0, -1.0, 2.0]);
        let res = nuclear_min(&a, &y, 2, 2, 1.0, &NuclearConfig::default()).unwrap();
        assert!(!res.warning);
        assert!((0.99..=1.01).contains(&res.residual), "{}", res.residual);
    }
}
