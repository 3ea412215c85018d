use lqr_ioc::assembly::{
    build_dual, build_omega, build_omega_multi, ground_truth_xi, selection_matrix, DecisionLayout, DualKernel,
    SignConvention,
};
use lqr_ioc::data::{
    build_data_matrices, estimate_derivatives, multi_traj_closed_loop, DataMatrices, DerivativeMethod,
};
use lqr_ioc::linalg::{self, Mat, Vector};
use lqr_ioc::lqr::{nominal_instance, random_system, simulate_closed_loop, solve_care, Instance, LqrSolution};
use proptest::prelude::*;

fn oracle_data(inst: &Instance, sol: &LqrSolution, samples: usize) -> DataMatrices {
    let ak = &inst.system.a - &inst.system.b * &sol.k;
    let traj = simulate_closed_loop(&inst.system, &sol.k, &inst.x0, 8.0, 0.1).unwrap();
    let d = estimate_derivatives(&traj, inst.system.state_dim(), &DerivativeMethod::ClosedForm { closed_loop: ak }).unwrap();
    build_data_matrices(&d, inst.system.state_dim(), samples).unwrap()
}

#[test]
fn omega_shape_and_feasibility_on_nominal() {
    let inst = nominal_instance();
    let sol = solve_care(&inst.system, &inst.cost).unwrap();
    let layout = DecisionLayout::new(3, 2).unwrap();
    let omega = build_omega(&sol.k, &oracle_data(&inst, &sol, 5), &layout).unwrap();
    assert_eq!(omega.shape(), (63, 40));
    let xi0 = ground_truth_xi(&layout, &inst, &sol).unwrap();
    assert!((&omega * &xi0).norm() <= 1e-8 * omega.norm() * xi0.norm());
}

#[test]
fn zero_gain_zeroes_the_weight_columns() {
    let layout = DecisionLayout::new(2, 1).unwrap();
    let dm = DataMatrices {
        blocks: vec![Mat::zeros(2, 3); 3],
        lambda_bar_1: Mat::zeros(2, 6),
        lambda_bar_2: Mat::zeros(2, 6),
        sample_indices: vec![0, 1, 2],
        requested_samples: 3,
        consistency_residual: 0.0,
    };
    let omega = build_omega(&Mat::zeros(1, 2), &dm, &layout).unwrap();
    assert_eq!(omega.view((0, layout.r().start), (4, 1)).amax(), 0.0);
    assert_eq!(omega.rows(8, 12).amax(), 0.0);
    assert!(build_omega(&Mat::zeros(2, 2), &dm, &layout).is_err());
}

#[test]
fn multi_trajectory_assembly() {
    let inst = nominal_instance();
    let sol = solve_care(&inst.system, &inst.cost).unwrap();
    let ak = &inst.system.a - &inst.system.b * &sol.k;
    let starts = [[1.0, 0.0, 0.0], [0.2, 1.0, -0.3], [-0.5, 0.4, 1.0], [0.3, -0.8, 0.6]];
    let trajs: Vec<_> = starts
        .iter()
        .map(|x0| simulate_closed_loop(&inst.system, &sol.k, &Vector::from_row_slice(x0), 1.0, 0.1).unwrap())
        .collect();
    let est = multi_traj_closed_loop(&trajs, &DerivativeMethod::ClosedForm { closed_loop: ak.clone() }, 3).unwrap();
    assert!((&est - &ak).amax() < 1e-8);

    let layout = DecisionLayout::without_g(3, 2).unwrap();
    let omega = build_omega_multi(&sol.k, &est, &layout).unwrap();
    assert_eq!(omega.shape(), (18, 31));
    let xi0 = ground_truth_xi(&layout, &inst, &sol).unwrap();
    assert!((&omega * &xi0).norm() <= 1e-8 * omega.norm() * xi0.norm());
}

#[test]
fn multi_with_zero_loop_and_gain_constrains_z_transpose() {
    let layout = DecisionLayout::without_g(2, 1).unwrap();
    let omega = build_omega_multi(&Mat::zeros(1, 2), &Mat::zeros(2, 2), &layout).unwrap();
    let second = omega.rows(4, 4);
    let y = linalg::commutation_matrix(2);
    assert_eq!(second.columns(0, 4), y);
    assert_eq!(second.columns(4, layout.dim() - 4).amax(), 0.0);
}

#[test]
fn scalar_toy_matches_hand_assembly() {
    let (k, l1, l2) = (0.7, [1.0, 0.4, -0.3], [-0.5, -0.2, 0.15]);
    let layout = DecisionLayout::new(1, 1).unwrap();
    let dm = DataMatrices {
        blocks: vec![Mat::from_row_slice(1, 3, &l1), Mat::from_row_slice(1, 3, &l2)],
        lambda_bar_1: Mat::from_row_slice(1, 3, &l1),
        lambda_bar_2: Mat::from_row_slice(1, 3, &l2),
        sample_indices: vec![0, 1, 2],
        requested_samples: 3,
        consistency_residual: 0.0,
    };
    let omega = build_omega(&Mat::from_element(1, 1, k), &dm, &layout).unwrap();
    // columns: z, r, q, p, g
    let mut hand = Mat::zeros(5, 5);
    hand.row_mut(0).copy_from_slice(&[2.0, -k * k, 1.0, 0.0, 0.0]);
    hand.row_mut(1).copy_from_slice(&[1.0, -k * k, 0.0, 0.0, -1.0]);
    for c in 0..3 {
        hand.row_mut(2 + c).copy_from_slice(&[0.0, 0.0, 0.0, -l2[c], l1[c]]);
    }
    assert_eq!(omega, hand);

    let problem = build_dual(&omega, &layout, 1e-6, SignConvention::Standard, DualKernel::Pseudoinverse { rtol: 1e-12 }).unwrap();
    assert_eq!(problem.h_dual.shape(), (3, 3));
    let normal = hand.transpose() * &hand;
    let oracle_pinv = normal.clone().pseudo_inverse(1e-12).unwrap();
    let u = selection_matrix(&layout);
    let expect = &u * oracle_pinv * u.transpose();
    assert!((&problem.h_dual - expect).amax() <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ground_truth_is_feasible(seed in 0u64..10_000, samples in 2usize..9) {
        let inst = random_system(3, 2, seed).unwrap();
        let sol = solve_care(&inst.system, &inst.cost).unwrap();
        let layout = DecisionLayout::new(3, 2).unwrap();
        let omega = build_omega(&sol.k, &oracle_data(&inst, &sol, samples), &layout).unwrap();
        let xi0 = ground_truth_xi(&layout, &inst, &sol).unwrap();
        prop_assert!((&omega * &xi0).norm() <= 1e-8 * omega.norm() * xi0.norm());
    }

    #[test]
    fn dual_hessian_is_symmetric_psd(seed in 0u64..10_000, pinv in any::<bool>()) {
        let inst = random_system(3, 2, seed).unwrap();
        let sol = solve_care(&inst.system, &inst.cost).unwrap();
        let layout = DecisionLayout::new(3, 2).unwrap();
        let omega = build_omega(&sol.k, &oracle_data(&inst, &sol, 5), &layout).unwrap();
        let kernel = if pinv { DualKernel::Pseudoinverse { rtol: 1e-12 } } else { DualKernel::default() };
        let p = build_dual(&omega, &layout, 1e-6, SignConvention::Standard, kernel).unwrap();
        prop_assert!((&p.h_dual - p.h_dual.transpose()).amax() <= 1e-10);
        prop_assert!(linalg::min_eig_sym(&p.h_dual).unwrap() >= -1e-8);
        prop_assert_eq!(p.blocks.qq.shape(), (9, 9));
        prop_assert_eq!(p.blocks.pr.shape(), (9, 4));
    }

    #[test]
    fn selection_extracts_weights(seed in 0u64..10_000) {
        let layout = DecisionLayout::new(3, 2).unwrap();
        let xi = Vector::from_fn(layout.dim(), |i, _| ((i as u64 * 31 + seed) % 97) as f64 - 48.0);
        let picked = selection_matrix(&layout) * &xi;
        let b = layout.split(&xi);
        prop_assert_eq!(picked.rows(0, 9).into_owned(), linalg::vectorize(&b.q));
        prop_assert_eq!(picked.rows(9, 9).into_owned(), linalg::vectorize(&b.p));
        prop_assert_eq!(picked.rows(18, 4).into_owned(), linalg::vectorize(&b.r));
    }
}
