use lqr_ioc::assembly::{build_omega, ground_truth_xi, DecisionLayout};
use lqr_ioc::data::{
    build_data_matrices, build_data_matrices_at, estimate_derivatives, identify_gain, DerivativeMethod, Trajectory,
};
use lqr_ioc::lqr::{nominal_instance, random_system, simulate_closed_loop, solve_care};
use lqr_ioc::Mat;
use proptest::prelude::*;

fn nominal_expert() -> (Mat, Trajectory) {
    let inst = nominal_instance();
    let sol = solve_care(&inst.system, &inst.cost).unwrap();
    let ak = &inst.system.a - &inst.system.b * &sol.k;
    let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 8.0, 0.1).unwrap();
    (ak, traj)
}

#[test]
fn nominal_identified_gain_matches_printed_values() {
    let (_, traj) = nominal_expert();
    let k = identify_gain(&traj).unwrap().gain;
    let printed = Mat::from_row_slice(2, 3, &[0.161, -0.316, 0.285, 0.098, -0.135, 0.083]);
    assert!((k - printed).amax() <= 1e-3);
}

#[test]
fn second_order_differences_agree_with_oracle_to_dt_squared() {
    let (ak, traj) = nominal_expert();
    let fd = estimate_derivatives(&traj, 1, &DerivativeMethod::FiniteDifference { accuracy: 2 }).unwrap();
    let oracle = estimate_derivatives(&traj, 1, &DerivativeMethod::ClosedForm { closed_loop: ak.clone() }).unwrap();
    // central difference error bound: |x'''| dt² / 6 with |x'''| <= ‖A_K‖³ ‖x‖
    let dt: f64 = 0.1;
    let bound = ak.norm().powi(3) * traj.states().amax() * dt * dt / 6.0;
    for j in 1..traj.len() - 1 {
        let err = (fd.values[1].column(j) - oracle.values[1].column(j)).amax();
        assert!(err <= bound, "j = {j}: {err:e} > {bound:e}");
    }
}

#[test]
fn higher_accuracy_orders_shrink_the_error() {
    let (ak, traj) = nominal_expert();
    let oracle = estimate_derivatives(&traj, 3, &DerivativeMethod::ClosedForm { closed_loop: ak }).unwrap();
    let mut last = f64::INFINITY;
    for acc in [2, 4, 6, 8, 10] {
        let fd = estimate_derivatives(&traj, 3, &DerivativeMethod::FiniteDifference { accuracy: acc }).unwrap();
        let idx = fd.common_indices(3);
        let err = (1..=3)
            .flat_map(|o| idx.iter().map(move |&j| (o, j)))
            .map(|(o, j)| (fd.values[o].column(j) - oracle.values[o].column(j)).amax())
            .fold(0.0, f64::max);
        assert!(err < last, "accuracy {acc}: {err:e} not below {last:e}");
        last = err;
    }
    assert!(last < 1e-4);
}

#[test]
fn nominal_data_matrices() {
    let (ak, traj) = nominal_expert();
    let d = estimate_derivatives(&traj, 3, &DerivativeMethod::default()).unwrap();
    let dm = build_data_matrices(&d, 3, 5).unwrap();
    assert_eq!(dm.lambda_bar_1.shape(), (3, 15));
    assert_eq!(dm.sample_indices.len(), 5);
    assert_eq!(dm.sample_indices[0], 0);
    assert_eq!(dm.blocks[0].column(0), traj.states().column(0));
    assert!((&dm.lambda_bar_2 - &ak * &dm.lambda_bar_1).norm() <= 1e-5 * dm.lambda_bar_2.norm());
    assert!(dm.consistency_residual < 1e-6);
}

#[test]
fn short_trajectories_are_rejected() {
    let inst = nominal_instance();
    let sol = solve_care(&inst.system, &inst.cost).unwrap();
    let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 0.5, 0.1).unwrap();
    assert!(estimate_derivatives(&traj, 3, &DerivativeMethod::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn initial_state_is_always_first_column(seed in 0u64..10_000, samples in 1usize..12) {
        let inst = random_system(3, 2, seed).unwrap();
        let sol = solve_care(&inst.system, &inst.cost).unwrap();
        let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 8.0, 0.1).unwrap();
        let d = estimate_derivatives(&traj, 3, &DerivativeMethod::default()).unwrap();
        let dm = build_data_matrices(&d, 3, samples).unwrap();
        prop_assert_eq!(dm.blocks[0].column(0), inst.x0.column(0));
        prop_assert!(dm.sample_indices.len() <= samples);
    }

    #[test]
    fn oracle_data_satisfy_closed_loop_relation(seed in 0u64..10_000) {
        let inst = random_system(3, 2, seed).unwrap();
        let sol = solve_care(&inst.system, &inst.cost).unwrap();
        let ak = &inst.system.a - &inst.system.b * &sol.k;
        let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 8.0, 0.1).unwrap();
        let d = estimate_derivatives(&traj, 3, &DerivativeMethod::ClosedForm { closed_loop: ak.clone() }).unwrap();
        let dm = build_data_matrices(&d, 3, 5).unwrap();
        prop_assert!((&dm.lambda_bar_2 - &ak * &dm.lambda_bar_1).norm() <= 1e-10);
    }

    #[test]
    fn permuting_sample_columns_keeps_feasibility(seed in 0u64..10_000) {
        let inst = random_system(3, 2, seed).unwrap();
        let sol = solve_care(&inst.system, &inst.cost).unwrap();
        let ak = &inst.system.a - &inst.system.b * &sol.k;
        let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 8.0, 0.1).unwrap();
        let d = estimate_derivatives(&traj, 3, &DerivativeMethod::ClosedForm { closed_loop: ak }).unwrap();
        let layout = DecisionLayout::new(3, 2).unwrap();
        let xi0 = ground_truth_xi(&layout, &inst, &sol).unwrap();
        let a = build_data_matrices_at(&d, 3, &[0, 10, 30, 50, 70]).unwrap();
        let b = build_data_matrices_at(&d, 3, &[0, 70, 50, 10, 30]).unwrap();
        let ra = (build_omega(&sol.k, &a, &layout).unwrap() * &xi0).norm();
        let rb = (build_omega(&sol.k, &b, &layout).unwrap() * &xi0).norm();
        prop_assert!((ra - rb).abs() <= 1e-12 * (1.0 + xi0.norm()));
    }
}
