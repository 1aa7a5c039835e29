//! Seeded generation of measurement operators, ground truth and noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Dense Gaussian operator with unit-norm columns.
    Reconstruction,
    /// Each measurement observes one distinct entry.
    Completion,
}

/// Random stream a seed is drawn for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Operator = 1,
    Signal = 2,
    Noise = 3,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based seed for one `(outer, inner, stage)` cell. Independent of
/// the order trials are executed in.
pub fn derive_seed(master: u64, outer: u64, inner: u64, stage: Stage) -> u64 {
    let mut h = splitmix64(master);
    for v in [outer, inner, stage as u64] {
        h = splitmix64(h ^ splitmix64(v));
    }
    h
}

/// Seed of the `index`-th point of a sweep; point 0 keeps the master seed.
pub fn sweep_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add((index as u64).wrapping_mul(GOLDEN))
}

pub fn rng_for(master: u64, outer: u64, inner: u64, stage: Stage) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, outer, inner, stage))
}

fn gaussian_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    // Filled in column-major order.
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gen_measurement<R: Rng + ?Sized>(mode: Mode, m: usize, p: usize, q: usize, rng: &mut R) -> Result<Mat> {
    let n = p * q;
    if m == 0 || n == 0 {
        return Err(Error::Spec(format!("need m >= 1 and p, q >= 1, got m={m}, {p}x{q}")));
    }
    match mode {
        Mode::Reconstruction => {
            let mut a = gaussian_mat(rng, m, n);
            for mut col in a.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col /= norm;
                }
            }
            Ok(a)
        }
        Mode::Completion => {
            if m > n {
                return Err(Error::Spec(format!("completion needs m <= pq, got m={m} > {n}")));
            }
            let mut a = Mat::zeros(m, n);
            for (row, idx) in rand::seq::index::sample(rng, n, m).into_iter().enumerate() {
                a[(row, idx)] = 1.0;
            }
            Ok(a)
        }
    }
}

/// `X = L R` with `L` (`p x r`) and `R` (`r x q`) standard normal.
pub fn gen_lowrank<R: Rng + ?Sized>(p: usize, q: usize, r: usize, rng: &mut R) -> Result<Mat> {
    if r == 0 || r > p.min(q) {
        return Err(Error::Spec(format!("rank {r} outside 1..={}", p.min(q))));
    }
    let l = gaussian_mat(rng, p, r);
    let rr = gaussian_mat(rng, r, q);
    Ok(l * rr)
}

/// Noise standard deviation for a target SMNR: `sigma_n^2 = r p q / (m 10^(smnr/10))`.
pub fn noise_sigma(smnr_db: f64, r: usize, p: usize, q: usize, m: usize) -> f64 {
    ((r * p * q) as f64 / (m as f64 * 10f64.powf(smnr_db / 10.0))).sqrt()
}

pub fn add_noise<R: Rng + ?Sized>(
    clean: &Vector,
    smnr_db: f64,
    r: usize,
    p: usize,
    q: usize,
    m: usize,
    rng: &mut R,
) -> Result<(Vector, f64)> {
    if !smnr_db.is_finite() {
        return Err(Error::Spec(format!("smnr_db must be finite, got {smnr_db}")));
    }
    let sigma = noise_sigma(smnr_db, r, p, q, m);
    let y = Vector::from_fn(clean.len(), |i, _| {
        let n: f64 = rng.sample(StandardNormal);
        clean[i] + sigma * n
    });
    Ok((y, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reconstruction_columns_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gen_measurement(Mode::Reconstruction, 7, 3, 4, &mut rng).unwrap();
        for col in a.column_iter() {
            assert_abs_diff_eq!(col.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn full_completion_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gen_measurement(Mode::Completion, 12, 3, 4, &mut rng).unwrap();
        let ata = a.transpose() * &a;
        assert_eq!(ata, Mat::identity(12, 12));
        assert!(gen_measurement(Mode::Completion, 13, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn noise_level_example() {
        let s = noise_sigma(20.0, 3, 15, 30, 315);
        assert_abs_diff_eq!(s * s, 1350.0 / 31500.0, epsilon = 1e-15);
    }

    #[test]
    fn vanishing_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clean = Vector::from_fn(20, |i, _| i as f64 + 1.0);
        let (y, _) = add_noise(&clean, 300.0, 1, 4, 5, 20, &mut rng).unwrap();
        assert!((&y - &clean).norm() <= 1e-10 * clean.norm());
    }

    #[test]
    fn rank_one_minors_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gen_lowrank(5, 6, 1, &mut rng).unwrap();
        for (i, j) in [(0, 1), (2, 4), (3, 4)] {
            for (k, l) in [(0, 5), (1, 2)] {
                let minor = x[(i, k)] * x[(j, l)] - x[(i, l)] * x[(j, k)];
                assert!(minor.abs() < 1e-10 * x.norm_squared().max(1.0));
            }
        }
        assert!(gen_lowrank(3, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn seeds_differ_per_cell_and_sweep_point_zero_is_master() {
        let a = derive_seed(7, 0, 0, Stage::Operator);
        assert_ne!(a, derive_seed(7, 0, 0, Stage::Signal));
        assert_ne!(a, derive_seed(7, 1, 0, Stage::Operator));
        assert_ne!(a, derive_seed(7, 0, 1, Stage::Operator));
        assert_ne!(a, derive_seed(8, 0, 0, Stage::Operator));
        assert_eq!(sweep_seed(42, 0), 42);
    }
}
