//! Low-rank penalties `g(X)`, the matching latent-prior potentials `K(alpha)`
//! with `p(alpha) ∝ exp(-K(alpha)/2)`, and a numerical check of the concave
//! conjugate relation between them.
//!
//! With `Z = X X^T`, the prior on `alpha` induces the penalty
//!
//! ```text
//! g~(Z) = min_{alpha > 0} { tr(alpha Z) - q log|alpha| + K(alpha) }   (+ const)
//! ```
//!
//! | penalty `g(X)`                        | potential `K(alpha)`                                      |
//! |---------------------------------------|-----------------------------------------------------------|
//! | `tr((X X^T + eps I)^{s/2})`           | `C_s tr(alpha^{-s/(2-s)}) + q log|alpha| + eps tr(alpha)`  |
//! | `nu log|X X^T + eps I|`               | `eps tr(alpha) + (q - nu) log|alpha|`                     |
//!
//! `C_s = ((2-s)/2) (2/s)^{-s/(2-s)}` is the constant for which the
//! minimization above reproduces the Schatten penalty exactly; the minimizer
//! is `alpha = (s/2) (Z + eps I)^{(s-2)/2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Mat, SymPd};

/// Default regularizer `eps` (absolute).
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Default Schatten exponent.
pub const DEFAULT_SCHATTEN_S: f64 = 0.5;

const BRACKET_LO: f64 = 1e-8;
const BRACKET_HI: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// Regularized Schatten-`s` quasi-norm, `0 < s <= 1`.
    SchattenS { s: f64, epsilon: f64 },
    /// Log-determinant penalty with weight `nu`.
    LogDet { nu: f64, epsilon: f64 },
    /// Plain nuclear norm; no latent potential.
    Nuclear,
}

impl PenaltyKind {
    pub fn schatten(s: f64) -> Self {
        PenaltyKind::SchattenS {
            s,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Log-determinant penalty with the default weight `nu = max(p, q)`.
    pub fn log_det_for_shape(p: usize, q: usize) -> Self {
        PenaltyKind::LogDet {
            nu: p.max(q) as f64,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Checks the scalar parameter ranges (shape-dependent checks live with the estimator).
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyKind::SchattenS { s, epsilon } => {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(Error::InvalidParameter(format!("Schatten exponent s = {s} must lie in (0, 1]")));
                }
                check_epsilon(epsilon)
            }
            PenaltyKind::LogDet { nu, epsilon } => {
                if !nu.is_finite() {
                    return Err(Error::InvalidParameter(format!("log-det weight nu = {nu} must be finite")));
                }
                check_epsilon(epsilon)
            }
            PenaltyKind::Nuclear => Ok(()),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")))
    }
}

/// `C_s` in the Schatten potential.
pub fn schatten_prior_constant(s: f64) -> f64 {
    ((2.0 - s) / 2.0) * (2.0 / s).powf(-s / (2.0 - s))
}

/// Scale in the Schatten precision update `alpha <- c (W + eps I)^{(s-2)/2}`.
pub fn schatten_update_factor(s: f64) -> f64 {
    s / 2.0
}

/// Evaluates `g(X)` for a `p x q` matrix.
pub fn penalty_g(kind: &PenaltyKind, x: &Mat) -> Result<f64> {
    match *kind {
        PenaltyKind::SchattenS { s, epsilon } => {
            let eig = gram_eig(x, epsilon)?;
            Ok(eig.iter().map(|&l| l.max(0.0).powf(s / 2.0)).sum())
        }
        PenaltyKind::LogDet { nu, epsilon } => {
            let eig = gram_eig(x, epsilon)?;
            Ok(nu * eig.iter().map(|l| l.ln()).sum::<f64>())
        }
        PenaltyKind::Nuclear => Ok(x.clone().singular_values().sum()),
    }
}

fn gram_eig(x: &Mat, epsilon: f64) -> Result<Vec<f64>> {
    let p = x.nrows();
    let gram = x * x.transpose() + Mat::identity(p, p) * epsilon;
    Ok(sym_eig(&gram)?.values.iter().copied().collect())
}

/// Evaluates `K(alpha)`; `q_dim` is the dimension of the opposite side
/// (columns of `X` for a left precision).
pub fn potential_k(kind: &PenaltyKind, alpha: &SymPd, q_dim: usize) -> Result<f64> {
    let q = q_dim as f64;
    match *kind {
        PenaltyKind::SchattenS { s, epsilon } => {
            let eig = sym_eig(alpha.as_mat())?;
            let expo = -s / (2.0 - s);
            let mut acc = 0.0;
            for &l in eig.values.iter() {
                acc += schatten_prior_constant(s) * l.powf(expo) + q * l.ln() + epsilon * l;
            }
            Ok(acc)
        }
        PenaltyKind::LogDet { nu, epsilon } => {
            let logdet = alpha.factor("log-det prior argument")?.log_det();
            Ok(epsilon * alpha.trace() + (q - nu) * logdet)
        }
        PenaltyKind::Nuclear => Err(Error::Unsupported("the nuclear norm has no latent potential")),
    }
}

/// Scalar `K` restricted to one diagonal coordinate.
fn potential_k_scalar(kind: &PenaltyKind, a: f64, q: f64) -> Result<f64> {
    match *kind {
        PenaltyKind::SchattenS { s, epsilon } => {
            Ok(schatten_prior_constant(s) * a.powf(-s / (2.0 - s)) + q * a.ln() + epsilon * a)
        }
        PenaltyKind::LogDet { nu, epsilon } => Ok(epsilon * a + (q - nu) * a.ln()),
        PenaltyKind::Nuclear => Err(Error::Unsupported("the nuclear norm has no latent potential")),
    }
}

/// `g~(Z)` evaluated directly for diagonal `Z = diag(z)`.
pub fn direct_penalty_diag(kind: &PenaltyKind, z: &[f64]) -> Result<f64> {
    match *kind {
        PenaltyKind::SchattenS { s, epsilon } => Ok(z.iter().map(|&zi| (zi + epsilon).powf(s / 2.0)).sum()),
        PenaltyKind::LogDet { nu, epsilon } => Ok(nu * z.iter().map(|&zi| (zi + epsilon).ln()).sum::<f64>()),
        PenaltyKind::Nuclear => Err(Error::Unsupported("the nuclear norm has no latent potential")),
    }
}

/// Result of the conjugate construction on a diagonal `Z`.
#[derive(Clone, Debug)]
pub struct Conjugate {
    /// `min_alpha { tr(alpha Z) - q log|alpha| + K(alpha) }`.
    pub value: f64,
    /// Diagonal of the minimizing `alpha`.
    pub argmin: Vec<f64>,
}

/// Minimizes `tr(alpha Z) - K~(alpha)` over diagonal `alpha > 0`, one
/// coordinate at a time, by golden-section search on `log alpha_i` over
/// `[1e-8, 1e8]`. The scalar objective is convex in `log alpha_i` for both
/// potentials.
pub fn conjugate_construction(kind: &PenaltyKind, z: &[f64], q_dim: usize) -> Result<Conjugate> {
    if z.is_empty() {
        return Err(Error::dim("conjugacy Z", "non-empty diagonal", 0));
    }
    if z.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            what: "conjugacy Z",
            dim: z.len(),
        });
    }
    let q = q_dim as f64;
    let mut value = 0.0;
    let mut argmin = Vec::with_capacity(z.len());
    for (index, &zi) in z.iter().enumerate() {
        potential_k_scalar(kind, 1.0, q)?;
        let f = |u: f64| {
            let a = u.exp();
            a * zi - q * u + potential_k_scalar(kind, a, q).unwrap_or(f64::NAN)
        };
        let (lo, hi) = (BRACKET_LO.ln(), BRACKET_HI.ln());
        let u = golden_section(f, lo, hi, 1e-12);
        if (u - lo) < 1e-6 || (hi - u) < 1e-6 {
            return Err(Error::NotBracketed {
                index,
                lo: BRACKET_LO,
                hi: BRACKET_HI,
            });
        }
        value += f(u);
        argmin.push(u.exp());
    }
    Ok(Conjugate { value, argmin })
}

/// Direct and conjugate-side penalty values for a diagonal `Z`.
///
/// The two agree up to an additive constant independent of `Z`.
pub fn conjugacy_check(kind: &PenaltyKind, z: &[f64], q_dim: usize) -> Result<(f64, f64)> {
    let lhs = direct_penalty_diag(kind, z)?;
    let rhs = conjugate_construction(kind, z, q_dim)?.value;
    Ok((lhs, rhs))
}

/// Gradients with respect to `diag(Z)` of both sides of the conjugate
/// relation, by central differences with relative step `rel_step`.
pub fn conjugacy_gradients(kind: &PenaltyKind, z: &[f64], q_dim: usize, rel_step: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut direct = Vec::with_capacity(z.len());
    let mut conj = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let h = rel_step * z[i].abs().max(1e-3);
        let mut plus = z.to_vec();
        let mut minus = z.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let (lp, rp) = conjugacy_check(kind, &plus, q_dim)?;
        let (lm, rm) = conjugacy_check(kind, &minus, q_dim)?;
        direct.push((lp - lm) / (2.0 * h));
        conj.push((rp - rm) / (2.0 * h));
    }
    Ok((direct, conj))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
