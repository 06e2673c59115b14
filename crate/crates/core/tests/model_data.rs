mod common;

use nalgebra::dmatrix;
use proptest::prelude::*;
use rand::Rng;
use ruio_core::data::{build, check_assumption, identify_c, partition_data, AssumptionReport, DataError};
use ruio_core::design::{design_from_trajectory, DesignConfig};
use ruio_core::lti::{partition, simulate, LtiSystem};
use ruio_core::numerics::{pinv, Matrix, Vector};
use ruio_core::runtime::{exact_initial_state, run, ObserverState};

use common::*;

fn random_plant(r: &mut Rng8) -> LtiSystem {
    loop {
        let d = random_dims(r);
        let radius = r.random_range(0.3..1.2);
        if let Ok(sys) = LtiSystem::new(
            with_radius(r, d.n, radius),
            random_matrix(r, d.n, d.m),
            random_matrix(r, d.n, d.q),
            random_matrix(r, d.p, d.n),
        ) {
            return sys;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn output_split_identity_holds_along_trajectories(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_plant(&mut r);
        let ps = partition(&sys).unwrap();
        let traj = experiment(&sys, seed);
        let rdim = sys.n() - sys.p();
        for (x, y) in traj.x.as_ref().unwrap().iter().zip(&traj.y) {
            let xp = ps.permutation.permute_vector(x);
            let x1 = xp.rows(0, rdim).into_owned();
            let x2 = xp.rows(rdim, sys.p()).into_owned();
            let rebuilt = ps.recover_x2(y, &x1);
            prop_assert!((rebuilt - &x2).amax() <= 1e-10 * x.amax().max(1.0));
        }
    }

    #[test]
    fn split_recursion_matches_plant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_plant(&mut r);
        let ps = partition(&sys).unwrap();
        let traj = experiment(&sys, seed);
        let rdim = sys.n() - sys.p();
        let x = traj.x.as_ref().unwrap();
        let d = traj.d.as_ref().unwrap();
        for t in 0..traj.steps() {
            let x1 = ps.permutation.permute_vector(&x[t]).rows(0, rdim).into_owned();
            let next = ps.next_x1(&x1, &traj.y[t], &traj.u[t], Some(&d[t]));
            let truth = ps.permutation.permute_vector(&x[t + 1]).rows(0, rdim).into_owned();
            prop_assert!((next - truth).amax() <= 1e-10 * x[t + 1].amax().max(1.0));
        }
        let back = ps.reassemble().unwrap();
        prop_assert!((back.a() - sys.a()).amax() < 1e-12);
        prop_assert!((back.c() - sys.c()).amax() < 1e-12);
    }

    #[test]
    fn identified_output_matrix_is_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_plant(&mut r);
        let hd = historical(&sys, seed);
        let rtol = DesignConfig::default().rank_rtol;
        prop_assume!(check_assumption(&hd, rtol).unwrap().holds() == Some(true));
        let id = identify_c(&hd, rtol).unwrap();
        prop_assert!((&id.c_full - sys.c()).amax() <= 1e-8);
        prop_assert!(id.dependent_rows.is_empty());
    }

    #[test]
    fn fresh_samples_are_compatible_with_data(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_plant(&mut r);
        let hd = historical(&sys, seed);
        prop_assume!(check_assumption(&hd, 1e-9).unwrap().holds() == Some(true));
        let basis = ruio_core::numerics::vstack(&[&hd.up, &hd.yp, &hd.xp, &hd.xf]).unwrap();
        let x = Vector::from_fn(sys.n(), |_, _| r.random_range(-3.0..3.0));
        let u = Vector::from_fn(sys.m(), |_, _| r.random_range(-3.0..3.0));
        let d = Vector::from_fn(sys.q(), |_, _| r.random_range(-3.0..3.0));
        let sample = ruio_core::numerics::vstack(&[
            &Matrix::from_column_slice(sys.m(), 1, u.as_slice()),
            &Matrix::from_column_slice(sys.p(), 1, sys.output(&x).as_slice()),
            &Matrix::from_column_slice(sys.n(), 1, x.as_slice()),
            &Matrix::from_column_slice(sys.n(), 1, sys.next_state(&x, &u, Some(&d)).as_slice()),
        ]).unwrap();
        let coeffs = pinv(&basis) * &sample;
        let residual = (&basis * coeffs - &sample).norm() / sample.norm();
        prop_assert!(residual < 1e-8, "residual {residual}");
    }
}

#[test]
fn example_assumption_and_identification() {
    let sys = ruio_core::example::example_system();
    let hd = historical(&sys, 11);
    match check_assumption(&hd, 1e-9).unwrap() {
        AssumptionReport::Checked { holds, observed_rank, required_rank, .. } => {
            assert!(holds);
            assert_eq!((observed_rank, required_rank), (9, 9));
        }
        other => panic!("unexpected {other:?}"),
    }
    let id = identify_c(&hd, 1e-9).unwrap();
    assert!((&id.c_hat - sys.c()).amax() < 1e-8);
}

#[test]
fn short_experiment_fails_rank_test() {
    let sys = ruio_core::example::example_system();
    let mut cfg = ruio_core::lti::ExperimentConfig::new(3, 1);
    cfg.x0 = None;
    let exp = ruio_core::lti::generate_experiment(&sys, &cfg).unwrap();
    assert_eq!(exp.warnings.len(), 1);
    let hd = build(&exp.trajectory).unwrap();
    assert_eq!(check_assumption(&hd, 1e-9).unwrap().holds(), Some(false));
    assert!(matches!(identify_c(&hd, 1e-9), Err(DataError::StateRankDeficient { rank: 2, n: 5 })));
}

#[test]
fn missing_disturbance_makes_assumption_unverifiable() {
    let sys = ruio_core::example::example_system();
    let mut traj = experiment(&sys, 2);
    traj.d = None;
    let hd = build(&traj).unwrap();
    assert!(matches!(
        check_assumption(&hd, 1e-9).unwrap(),
        AssumptionReport::Unverifiable { .. }
    ));
    // the design path never needs d
    assert!(design_from_trajectory(&traj, &DesignConfig::default()).is_ok());
}

/// `C = [I | 0]` puts the measured states first, so the partition needs a
/// non-trivial permutation; estimates must still come back in plant order.
#[test]
fn permuted_plant_round_trip() {
    let sys = LtiSystem::new(
        dmatrix![0.5, 0.1, 0.0; 0.2, 0.3, 0.4; 0.0, 0.1, 0.6],
        dmatrix![1.0; 0.0; 0.5],
        dmatrix![0.0; 1.0; 0.3],
        dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0],
    )
    .unwrap();
    let ps = partition(&sys).unwrap();
    assert!(!ps.permutation.is_identity());
    let traj = experiment(&sys, 3);
    let dd = design_from_trajectory(&traj, &DesignConfig::default()).unwrap();
    assert_eq!(dd.ruio.permutation, ps.permutation);

    let steps = 30;
    let u: Vec<Vector> = (0..steps).map(|t| Vector::from_element(1, (t as f64 * 0.3).sin())).collect();
    let d: Vec<Vector> = (0..steps).map(|t| Vector::from_element(1, (t as f64 * 1.7).cos())).collect();
    let x0 = Vector::from_vec(vec![1.0, -2.0, 0.5]);
    let test = simulate(&sys, &x0, &u, Some(&d)).unwrap();
    let z0 = exact_initial_state(&dd.ruio, &x0, &test.y[0]).unwrap();
    let res = run(&dd.ruio, &test, &z0).unwrap();
    for (xhat, x) in res.estimates.iter().zip(test.x.as_ref().unwrap()) {
        assert!((xhat - x).amax() < 1e-9);
    }
    let from_zero = run(&dd.ruio, &test, &ObserverState::zeros(&dd.ruio)).unwrap();
    assert!(from_zero.errors.unwrap().final_norm() < 1e-6);
}

/// A repeated output row is dropped and the observer reads only the kept
/// rows of `y`.
#[test]
fn dependent_output_row_is_ignored() {
    let base = ruio_core::example::example_system();
    let traj = experiment(&base, 4);
    let mut extended = traj.clone();
    for y in extended.y.iter_mut() {
        let extra = 2.0 * y[0] - y[1];
        *y = Vector::from_iterator(4, y.iter().copied().chain(std::iter::once(extra)));
    }
    let hd = build(&extended).unwrap();
    let id = identify_c(&hd, 1e-9).unwrap();
    assert_eq!(id.kept_rows, vec![0, 1, 2]);
    assert_eq!(id.dependent_rows, vec![3]);
    let pd = partition_data(&hd, &id).unwrap();
    assert_eq!(pd.output_rows, vec![0, 1, 2]);
    let dd = design_from_trajectory(&extended, &DesignConfig::default()).unwrap();
    assert_eq!(dd.ruio.measured_outputs, 4);
    let plain = design_from_trajectory(&traj, &DesignConfig::default()).unwrap();
    assert!((&dd.ruio.a_uio - &plain.ruio.a_uio).amax() < 1e-8);
}

#[test]
fn identification_residual_flags_inconsistent_outputs() {
    let sys = solvable_system(&mut rng(6), 0.5);
    let mut traj = experiment(&sys, 6);
    traj.y[3][0] += 1.0;
    let hd = build(&traj).unwrap();
    let id = identify_c(&hd, 1e-9).unwrap();
    assert!(id.residual > 1e-3, "residual {}", id.residual);
}
