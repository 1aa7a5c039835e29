mod common;

use proptest::prelude::*;
use rsvm::estimator::{
    balance_free_side, balance_precisions, lmmse_update, noise_update, EstimatorConfig, NoiseRule, Sidedness,
};
use rsvm::linalg::{kron, mat_pow_sym, partial_trace_l, partial_trace_r, pd_floor, sym_eig, unvec, vec, Mat, SymPd};
use rsvm::penalties::{conjugacy_gradients, penalty_g, potential_k, PenaltyKind};

use common::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn orthogonal(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Mat {
    random_mat(rng, n, n).qr().q()
}

fn assert_sympd_contract(m: &SymPd) {
    let a = m.as_mat();
    assert_eq!(a, &a.transpose());
    let eig = sym_eig(a).unwrap();
    let largest = eig.values.amax();
    assert!(eig.values.min() >= pd_floor(largest) * (1.0 - 1e-12), "min eigenvalue {}", eig.values.min());
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn kron_mixed_product(seed in any::<u64>(), p in 1usize..5, q in 1usize..5, a in 1usize..4, b in 1usize..4) {
        let mut rng = rng(seed);
        let l = random_mat(&mut rng, a, p);
        let x = random_mat(&mut rng, p, q);
        let r = random_mat(&mut rng, q, b);
        let lhs = vec(&(&l * &x * &r));
        let rhs = kron(&r.transpose(), &l).unwrap() * vec(&x);
        prop_assert!((lhs - &rhs).amax() <= 1e-12 * rhs.amax().max(1.0));
    }

    #[test]
    fn matrix_powers_add(seed in any::<u64>(), n in 1usize..6, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let mut rng = rng(seed);
        let m = random_pd(&mut rng, n);
        let prod = mat_pow_sym(m.as_mat(), t1).unwrap().into_mat() * mat_pow_sym(m.as_mat(), t2).unwrap().into_mat();
        let direct = mat_pow_sym(m.as_mat(), t1 + t2).unwrap();
        prop_assert!(rel_diff(&prod, direct.as_mat()) <= 1e-8);
        assert_sympd_contract(&direct);
    }

    #[test]
    fn partial_traces_match_kron_construction(seed in any::<u64>(), p in 1usize..5, q in 1usize..5) {
        let mut rng = rng(seed);
        let sigma = random_pd(&mut rng, p * q);
        let (al, ar) = (random_pd(&mut rng, p), random_pd(&mut rng, q));
        let l = partial_trace_l(&sigma, &ar, p).unwrap();
        let r = partial_trace_r(&sigma, &al, q).unwrap();
        let el = explicit_partial_trace_l(sigma.as_mat(), ar.as_mat(), p);
        let er = explicit_partial_trace_r(sigma.as_mat(), al.as_mat(), q);
        prop_assert!((l.as_mat() - &el).amax() <= 1e-12 * el.amax().max(1.0));
        prop_assert!((r.as_mat() - &er).amax() <= 1e-12 * er.amax().max(1.0));
        assert_sympd_contract(&l);
        assert_sympd_contract(&r);
    }

    #[test]
    fn lmmse_matches_dense_normal_equations(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, m in 1usize..14, beta in 0.05f64..20.0) {
        let mut rng = rng(seed);
        let meas = random_problem(&mut rng, p, q, m);
        let (al, ar) = (random_pd(&mut rng, p), random_pd(&mut rng, q));
        let (x, s) = lmmse_update(&meas, &al, &ar, beta).unwrap();
        let (xd, sd) = dense_lmmse(&meas, &al, &ar, beta);
        let xd = unvec(xd.as_slice(), p, q).unwrap();
        prop_assert!(rel_diff(&x, &xd) <= 1e-9);
        prop_assert!(rel_diff(s.as_mat(), &sd) <= 1e-9);
        assert_sympd_contract(&s);
    }

    #[test]
    fn penalties_are_unitarily_invariant(seed in any::<u64>(), p in 1usize..5, q in 1usize..5, s in 0.1f64..1.0) {
        let mut rng = rng(seed);
        let x = random_mat(&mut rng, p, q);
        let (u, v) = (orthogonal(&mut rng, p), orthogonal(&mut rng, q));
        let rotated = &u * &x * &v;
        for kind in [PenaltyKind::schatten(s), PenaltyKind::log_det_for_shape(p, q), PenaltyKind::Nuclear] {
            let a = penalty_g(&kind, &x).unwrap();
            let b = penalty_g(&kind, &rotated).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{kind:?}: {a} vs {b}");
        }
    }

    #[test]
    fn balancing_is_exact(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, m in 1usize..12) {
        let mut rng = rng(seed);
        let meas = random_problem(&mut rng, p, q, m);
        let st = state_for(&meas, random_pd(&mut rng, p), random_pd(&mut rng, q), 1.5);
        let energy = st.xhat.norm_squared() + st.sigma.trace();
        let inv_tr = |a: &SymPd| a.factor("test").unwrap().inverse().trace();
        let (l, r) = balance_precisions(&st).unwrap().unwrap();
        let (tl, tr) = (inv_tr(&l), inv_tr(&r));
        prop_assert!((tl - tr).abs() <= 1e-10 * tl);
        prop_assert!((tl * tr - energy).abs() <= 1e-10 * energy);
        for sided in [Sidedness::Left, Sidedness::Right] {
            let (l, r) = balance_free_side(&st, sided).unwrap().unwrap();
            prop_assert!((inv_tr(&l) * inv_tr(&r) - energy).abs() <= 1e-10 * energy);
            let pinned = if sided == Sidedness::Left { (&r, &st.alpha_r) } else { (&l, &st.alpha_l) };
            prop_assert_eq!(pinned.0, pinned.1);
        }
    }

    #[test]
    fn kronecker_scale_gauge(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, m in 1usize..12, c in 0.01f64..100.0) {
        let mut rng = rng(seed);
        let meas = random_problem(&mut rng, p, q, m);
        let (al, ar) = (random_pd(&mut rng, p), random_pd(&mut rng, q));
        let a = state_for(&meas, al.clone(), ar.clone(), 2.0);
        let b = state_for(&meas, al.scaled(c).unwrap(), ar.scaled(1.0 / c).unwrap(), 2.0);
        prop_assert!(rel_diff(&b.xhat, &a.xhat) <= 1e-10);
        prop_assert!(rel_diff(b.sigma.as_mat(), a.sigma.as_mat()) <= 1e-10);
        for rule in [NoiseRule::TraceForm, NoiseRule::GammaForm] {
            let cfg = EstimatorConfig { noise_rule: rule, ..EstimatorConfig::default() };
            let (ba, bb) = (noise_update(&a, &meas, &cfg).unwrap(), noise_update(&b, &meas, &cfg).unwrap());
            prop_assert!((ba - bb).abs() <= 1e-10 * ba, "{rule:?}: {ba} vs {bb}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn conjugate_gradients_agree(
        z in prop::collection::vec(0.05f64..20.0, 1..5),
        s in 0.2f64..1.0,
        log_det in any::<bool>(),
    ) {
        let q = 3;
        let kind = if log_det {
            PenaltyKind::LogDet { nu: 4.0, epsilon: 1e-3 }
        } else {
            PenaltyKind::SchattenS { s, epsilon: 1e-3 }
        };
        let (direct, conj) = conjugacy_gradients(&kind, &z, q, 1e-4).unwrap();
        for (d, c) in direct.iter().zip(&conj) {
            prop_assert!((d - c).abs() <= 1e-5 * d.abs().max(1.0), "{kind:?} z={z:?}: {d} vs {c}");
        }
    }
}

#[test]
fn log_det_potential_at_nu_equal_q_is_trace() {
    let mut rng = rng(11);
    for n in 1..5 {
        let alpha = random_pd(&mut rng, n);
        let kind = PenaltyKind::LogDet { nu: 3.0, epsilon: 0.25 };
        assert_eq!(potential_k(&kind, &alpha, 3).unwrap(), 0.25 * alpha.trace());
    }
}
