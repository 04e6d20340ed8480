use proptest::prelude::*;
use qfl_core::linalg::{matmul_chain, pauli_exp, Axis};
use qfl_core::rng::substream;
use qfl_core::separation::*;
use qfl_core::Error;
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

fn written_product(t1: f64, t2: f64) -> qfl_core::ComplexMatrix {
    let phi = qsp_phases();
    let mut factors = vec![pauli_exp(Axis::Z, phi[0])];
    for k in 0..3 {
        factors.push(pauli_exp(Axis::X, t1));
        factors.push(pauli_exp(Axis::Z, phi[2 * k + 1]));
        factors.push(pauli_exp(Axis::X, t2));
        factors.push(pauli_exp(Axis::Z, phi[2 * k + 2]));
    }
    let refs: Vec<_> = factors.iter().collect();
    matmul_chain(&refs).unwrap()
}

#[test]
fn derived_pair_separates_the_promise_set() {
    let pair = derive_measurement_pair().unwrap();
    assert_eq!(pair, MeasurementPair { input: CanonicalState::Zero, measure: CanonicalState::Zero, fires_on_class1: true });
    let report = run_discrimination(&pair, 64).unwrap();
    assert!(report.pass, "max error {}", report.max_error);
    assert_eq!(report.instances.len(), 72);
    for r in &report.instances {
        match r.class {
            InstanceClass::Zero => assert!(r.probability <= 1e-9),
            InstanceClass::One => assert!(r.probability >= 1.0 - 1e-9),
            InstanceClass::OutsidePromise => unreachable!(),
        }
    }
    assert_eq!(report.queries, QueryCount { theta1_factors: 3, theta2_factors: 3, theta_factors: 6, joint_oracles: 3 });
}

#[test]
fn exhaustive_search_finds_four_pairs() {
    let pairs = search_measurement_pairs(64);
    assert_eq!(pairs.len(), 4);
    assert!(pairs.iter().all(|p| matches!(p.input, CanonicalState::Zero | CanonicalState::One)));
}

#[test]
fn promise_points_are_where_they_should_be() {
    let zeros = class0_points();
    assert_eq!(zeros.len(), 8);
    for p in &zeros {
        assert_eq!(p.class, InstanceClass::Zero);
        assert!((p.theta1.cos() * p.theta2.cos()).abs() < 1e-15);
    }
    for p in class1_points(64) {
        assert_eq!(p.class, InstanceClass::One);
        assert!(p.theta1.abs() <= FRAC_PI_3 + 1e-15);
        assert!((2.0 * p.theta1.cos() * p.theta2.cos() - 1.0).abs() < 1e-12);
    }
    let outside = SeparationInstance::new(0.3, 0.4);
    assert!(matches!(discriminate(&outside, &derive_measurement_pair().unwrap()), Err(Error::PromiseViolation { .. })));
}

#[test]
fn reduction_blocks_on_random_angles() {
    let mut rng = substream(12, "reduction");
    for trial in 0..100 {
        let j = 1 + trial % 6;
        let (t1, t2) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let r = verify_block_encoding_reduction(j, t1, t2).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.block_deviation.iter().all(|&d| d < 1e-10));
    }
    assert!(verify_block_encoding_reduction(0, 0.1, 0.2).is_err());
    assert!(verify_block_encoding_reduction(7, 0.1, 0.2).is_err());
}

#[test]
fn zero_angles_give_the_phase_product() {
    assert!(separation_matrix(0.0, 0.0).max_abs_diff(&zero_angle_matrix()) < 1e-14);
    assert!(separation_matrix(FRAC_PI_2, 0.0).max_abs_diff(&written_product(FRAC_PI_2, 0.0)) < 1e-14);
}

// On the promise set the labels equal 2·cos θ₁·cos θ₂, a product of one function of each
// modality, so a rank-one CP model with (cos θ, sin θ) inputs fits them.
#[test]
fn promise_labels_are_rank_one_separable() {
    for p in class0_points().into_iter().chain(class1_points(64)) {
        let label = if p.class == InstanceClass::One { 1.0 } else { 0.0 };
        let product = 2.0 * modality_features(p.theta1)[0] * modality_features(p.theta2)[0];
        assert!((product - label).abs() < 1e-12);
    }
    let seeds = [0, 1, 2, 3, 4];
    let report = cp_baseline_gap_demo(&[1], 3000, 0.01, &seeds, 64).unwrap();
    let row = &report.rows[0];
    assert!(row.quantum_max_error <= 1e-9);
    assert_eq!(report.parameter_counts, vec![(1, 6)]);
    assert!(row.best_cp_max_error < 0.1, "{row:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circuit_matches_written_product(t1 in -PI..PI, t2 in -PI..PI) {
        let m = separation_matrix(t1, t2);
        prop_assert!(m.max_abs_diff(&written_product(t1, t2)) < 1e-13);
        let (defect, det) = separation_unitarity(t1, t2).unwrap();
        prop_assert!(defect < 1e-12 && det < 1e-12);
        prop_assert_eq!(count_queries(&build_separation_circuit(t1, t2)).theta_factors, 6);
    }

    #[test]
    fn conjugation_turns_y_into_x(theta in -7.0f64..7.0) {
        prop_assert!(conjugated_rotation(theta).max_abs_diff(&pauli_exp(Axis::X, theta)) < 1e-14);
    }
}
