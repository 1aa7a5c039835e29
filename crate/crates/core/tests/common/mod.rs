#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsvm::estimator::{lmmse_update, Measurements, PosteriorState};
use rsvm::linalg::{kron, Mat, SymPd, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymPd {
    let b = random_mat(rng, n, n);
    SymPd::new(&b * b.transpose() + Mat::identity(n, n) * 0.3).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, p: usize, q: usize, m: usize) -> Measurements {
    let a = random_mat(rng, m, p * q);
    let y = Vector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
    Measurements::new(a, y, p, q).unwrap()
}

pub fn state_for(meas: &Measurements, alpha_l: SymPd, alpha_r: SymPd, beta: f64) -> PosteriorState {
    let (xhat, sigma) = lmmse_update(meas, &alpha_l, &alpha_r, beta).unwrap();
    PosteriorState {
        xhat,
        sigma,
        alpha_l,
        alpha_r,
        beta,
        objective: None,
    }
}

fn unit(n: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(n, n);
    e[(i, j)] = 1.0;
    e
}

/// `[S_L]_ij = tr(Sigma (alpha_R kron E_ij))`, built literally.
pub fn explicit_partial_trace_l(sigma: &Mat, alpha_r: &Mat, p: usize) -> Mat {
    Mat::from_fn(p, p, |i, j| (sigma * kron(alpha_r, &unit(p, i, j)).unwrap()).trace())
}

/// `[S_R]_ij = tr(Sigma (E_ij kron alpha_L))`, built literally.
pub fn explicit_partial_trace_r(sigma: &Mat, alpha_l: &Mat, q: usize) -> Mat {
    Mat::from_fn(q, q, |i, j| (sigma * kron(&unit(q, i, j), alpha_l).unwrap()).trace())
}

/// Dense solve of the posterior normal equations.
pub fn dense_lmmse(meas: &Measurements, alpha_l: &SymPd, alpha_r: &SymPd, beta: f64) -> (Vector, Mat) {
    let normal = kron(alpha_r.as_mat(), alpha_l.as_mat()).unwrap() + meas.gram() * beta;
    let inv = normal.clone().try_inverse().unwrap();
    let rhs = meas.a().transpose() * meas.y() * beta;
    (&inv * rhs, inv)
}

pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
