use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use switchmargin_core::hierarchy::{
    build_level, lift_operator_full, lift_operator_recursive, lift_state, reduce, symmetric_basis, SwitchedLinearSystem,
};
use switchmargin_core::linalg::{self, Matrix, Vector};
use switchmargin_core::lyapunov::{
    find_common_lyapunov, max_delta_fixed_p, under_approximate_margin, AlgorithmConfig, FixedPBound, LyapunovSettings,
};
use switchmargin_core::ode::IntegratorConfig;
use switchmargin_core::periodic::{find_periodic_segment, transition_matrix};
use switchmargin_core::switching::{find_switching_sequence, simulate_fixed_signal, ReplayMode, SwitchingSignal};

fn matrix_strategy(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

fn shift_to_hurwitz(m: &Matrix, margin: f64) -> Matrix {
    let abscissa = linalg::eigenvalues(m).unwrap().max_real_part();
    m - Matrix::identity(m.nrows(), m.ncols()) * (abscissa + margin)
}

fn random_matrix(rng: &mut StdRng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0))
}

// largest δ with λ_max(N₀ + δN₁) ≤ 0, by bisection
fn bisect_delta(n0: &Matrix, n1: &Matrix) -> Option<f64> {
    let ok = |d: f64| linalg::max_symmetric_eigenvalue(&(n0 + n1 * d)).unwrap() <= 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        hi *= 2.0;
        if hi > 1e8 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lifted_trajectory_follows_reduced_operator(m in matrix_strategy(2), x in prop::collection::vec(-1.0f64..1.0, 2), i in 2usize..=3) {
        let a = shift_to_hurwitz(&m, 0.1);
        let sys = SwitchedLinearSystem::new(a.clone(), Matrix::zeros(2, 2)).unwrap();
        let level = build_level(&sys, i).unwrap();
        let x0 = Vector::from_vec(x);
        let xi0 = level.lift(&x0);
        let mut worst: f64 = 0.0;
        for k in 1..=10 {
            let t = 0.2 * k as f64;
            let xt = linalg::expm(&a, t).unwrap() * &x0;
            let direct = lift_state(&xt, &level.basis);
            let lifted = linalg::expm(&level.cal_a, t).unwrap() * &xi0;
            worst = worst.max((direct - lifted).amax());
        }
        prop_assert!(worst <= 1e-6, "sup error {worst}");
    }

    #[test]
    fn recursive_and_closed_form_lifts_agree(m in matrix_strategy(2), i in 1usize..=4) {
        let full = lift_operator_full(&m, i).unwrap();
        let rec = lift_operator_recursive(&m, i).unwrap();
        prop_assert!((full - rec).amax() <= 1e-12);
    }

    #[test]
    fn reduced_spectrum_is_part_of_full_spectrum(m in matrix_strategy(2), i in 2usize..=4) {
        let basis = symmetric_basis(2, i).unwrap();
        let full = lift_operator_full(&m, i).unwrap();
        let reduced = reduce(&full, &basis).unwrap();
        let full_spec: Vec<_> = linalg::eigenvalues(&full).unwrap().complex().collect();
        for lambda in linalg::eigenvalues(&reduced).unwrap().complex() {
            let nearest = full_spec.iter().map(|mu| (mu - lambda).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest <= 1e-6 * (1.0 + lambda.norm()), "eigenvalue {lambda} is {nearest} away");
        }
    }

    #[test]
    fn indicator_choice_maximizes_vdot(m in matrix_strategy(2), m0 in matrix_strategy(2), x in prop::collection::vec(-1.0f64..1.0, 2), delta in 0.0f64..3.0, s in 0.0f64..1.0) {
        let sys = SwitchedLinearSystem::new(m, m0).unwrap();
        let level = build_level(&sys, 2).unwrap();
        let p = Matrix::identity(level.dim(), level.dim());
        let x = Vector::from_vec(x);
        let xi = level.lift(&x);
        let vdot = |d: f64| {
            let md = level.mode(d);
            xi.dot(&((md.transpose() * &p + &p * &md) * &xi))
        };
        let chosen = switchmargin_core::switching::worst_case_delta(&x, delta, &level, &p).unwrap();
        let scale = 1.0 + vdot(0.0).abs() + vdot(delta).abs();
        prop_assert!(vdot(chosen) >= vdot(s * delta) - 1e-10 * scale);
    }
}

#[test]
fn fixed_p_bound_matches_bisection_on_random_certificates() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 20 {
        let a = shift_to_hurwitz(&random_matrix(&mut rng, 2), 0.2);
        let a0 = random_matrix(&mut rng, 2);
        let sys = SwitchedLinearSystem::new(a, a0).unwrap();
        let level = build_level(&sys, 1 + checked % 3).unwrap();
        let Some(common) = find_common_lyapunov(std::slice::from_ref(&level.cal_a), level.dim(), &LyapunovSettings::default())
            .unwrap()
            .certificate()
        else {
            continue;
        };
        let p = &common.p;
        let n0 = level.cal_a.transpose() * p + p * &level.cal_a;
        let n1 = level.cal_a0.transpose() * p + p * &level.cal_a0;
        let oracle = bisect_delta(&n0, &n1);
        match (max_delta_fixed_p(&level, p, 0.0).unwrap(), oracle) {
            (FixedPBound::Bounded(d), Some(o)) => {
                assert!((d - o).abs() <= 1e-6 * (1.0 + o), "closed form {d}, bisection {o}")
            }
            (FixedPBound::Unbounded, None) => {}
            (got, o) => panic!("closed form {got:?}, bisection {o:?}"),
        }
        checked += 1;
    }
}

#[test]
fn returned_certificates_reverify_on_random_systems() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..8 {
        let a = shift_to_hurwitz(&random_matrix(&mut rng, 2), 0.3);
        let a0 = random_matrix(&mut rng, 2);
        let sys = SwitchedLinearSystem::new(a, a0).unwrap();
        let cfg = AlgorithmConfig {
            epsilon: Some(0.05),
            i_max: 3,
            delta_max: 50.0,
            ..Default::default()
        };
        let report = under_approximate_margin(&sys, &cfg).unwrap();
        let cert = &report.certificate;
        let level = build_level(&sys, cert.level).unwrap();
        assert!(cert.verify(&level).unwrap(), "{:?}", cert.check(&level).unwrap());
        // the certified set is an interval: spot-check interior values
        for k in 1..=5 {
            let d = cert.delta_certified * k as f64 / 6.0;
            assert!(cert.check_at(&level, d).unwrap().holds(cert.feasibility_margin));
        }
    }
}

#[test]
fn level_one_certificate_exists_iff_hurwitz() {
    let mut rng = StdRng::seed_from_u64(11);
    let settings = LyapunovSettings::default();
    for _ in 0..50 {
        let a = shift_to_hurwitz(&random_matrix(&mut rng, 3), 0.05);
        let found = find_common_lyapunov(&[a], 3, &settings).unwrap().is_feasible();
        assert!(found);
    }
    for _ in 0..50 {
        let m = random_matrix(&mut rng, 3);
        let abscissa = linalg::eigenvalues(&m).unwrap().max_real_part();
        let a = &m - Matrix::identity(3, 3) * (abscissa - 0.05);
        let found = find_common_lyapunov(&[a], 3, &settings).unwrap().is_feasible();
        assert!(!found);
    }
}

#[test]
fn witness_window_replays_its_transition_matrix() {
    // Example 1 driven by a fixed level-1 quadratic form
    let sys = SwitchedLinearSystem::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]),
        Matrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]),
    )
    .unwrap();
    let level = build_level(&sys, 1).unwrap();
    let p = Matrix::from_row_slice(2, 2, &[1.5, 0.25, 0.25, 1.0]);
    let x0 = Vector::from_vec(vec![1.0, 0.0]);
    let cfg = IntegratorConfig::default();
    let (signal, _) = find_switching_sequence(&sys, &level, &p, 2.0, &x0, 15.0, &cfg).unwrap();
    assert!(signal.segments() >= 5);
    for (j, k) in [(1, 3), (2, 4), (1, 5)] {
        let window = signal.window(j, k).unwrap();
        let a_d = transition_matrix(&sys, &signal, j, k).unwrap();
        let xs = Vector::from_vec(vec![0.3, -0.7]);
        let traj = simulate_fixed_signal(&sys, &window, &xs, ReplayMode::Ode, &cfg).unwrap();
        let end = traj.samples.last().unwrap().state();
        assert!((end - &a_d * &xs).norm() <= 1e-4 * xs.norm());
    }
    // search terminates and reports consistently
    let search = find_periodic_segment(&sys, &signal, 1e-3).unwrap();
    if let Some(w) = search.witness() {
        assert!(w.unit_eig_residual <= 1e-3);
    }
}

#[test]
fn signal_round_trips_through_json() {
    let s = SwitchingSignal::new(vec![0.0, 0.25, 1.5], vec![2.0, 0.0]).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<SwitchingSignal>(&text).unwrap(), s);
}
