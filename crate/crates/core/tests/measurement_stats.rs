use qfl_core::ansatz::{AnsatzSpec, Entangler, InitMode, ParameterVector};
use qfl_core::linalg::{c64, QuantumState};
use qfl_core::measurement::*;
use qfl_core::qfl::QflCircuitSpec;
use qfl_core::rng::{indexed_stream, substream};
use qfl_core::stateprep::RegisterLayout;

fn small_spec(seed: u64) -> QflCircuitSpec {
    let layout = RegisterLayout::for_features(3).unwrap();
    let a = AnsatzSpec::new(layout.n_index, 3, Entangler::Ring).unwrap();
    let params = ParameterVector::init(3, a.params_per_block(), InitMode::FullRange, &mut substream(seed, "params"));
    QflCircuitSpec::with_ansatz(2, layout, a, params).unwrap()
}

#[test]
fn shot_estimates_are_unbiased_with_bounded_variance() {
    let mut rng = substream(21, "state");
    let state = QuantumState::random(2, &mut rng);
    let obs = Observable::new(Plane::Xy, 0.9, 1);
    let exact = expectation_exact(&state, &obs).unwrap();
    let est = ShotEstimator::new(0.1, 0.05).unwrap().with_shots(200);
    let repeats = 10_000;
    let samples: Vec<f64> = (0..repeats).map(|i| estimate_shots(&state, &obs, &est, &mut indexed_stream(3, "unbiased", i)).unwrap()).collect();
    let mean = samples.iter().sum::<f64>() / repeats as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
    assert!((mean - exact).abs() < 0.03, "mean {mean} vs {exact}");
    let bound = est.m as f64 / est.total_shots() as f64;
    assert!(var <= 1.5 * bound, "variance {var} vs m/N = {bound}");
}

#[test]
fn hoeffding_budget_values() {
    let e = ShotEstimator::new(0.1, 0.05).unwrap();
    assert_eq!(e.required_shots(), 1753);
    assert_eq!(ShotEstimator::new(0.05, 0.05).unwrap().required_shots(), 7012);
    assert_eq!(e.with_shots(1).total_shots(), 1);
    assert!(ShotEstimator::new(0.0, 0.05).is_err());
    assert!(ShotEstimator::new(0.1, 1.0).is_err());
}

#[test]
fn allocation_sums_and_floors() {
    assert_eq!(allocate_shots(&[0.5, 0.5], 1753).iter().sum::<usize>(), 1753);
    assert_eq!(allocate_shots(&[0.3, -0.1, 0.0], 8), vec![6, 2, 0]);
    // one shot cannot cover two terms
    assert_eq!(allocate_shots(&[0.6, 0.8], 1), vec![1, 1]);
    assert_eq!(allocate_shots(&[0.0, 0.0], 10), vec![0, 0]);
}

#[test]
fn bound_holds_at_the_hoeffding_budget() {
    let r = validate_sampling_lemma(0.1, 0.05, 500, 7, None).unwrap();
    assert_eq!(r.shots, 1753);
    assert!(r.pass && r.fraction >= 0.93, "{r:?}");
    let neg = validate_sampling_lemma(0.01, 0.05, 500, 7, Some(1)).unwrap();
    assert!(!neg.pass, "{neg:?}");
}

#[test]
fn shot_mode_tracks_exact_mode() {
    let spec = small_spec(2);
    let plan = draw_plan(6, spec.total_qubits(), 8).unwrap();
    let x = [0.4, -0.2, 0.7];
    let exact = fused_output(&spec, &x, &plan, OutputMode::Exact).unwrap();
    let est = ShotEstimator::new(0.05, 0.01).unwrap();
    let shots = fused_output(&spec, &x, &plan, OutputMode::Shots { estimator: est, seed: 1 }).unwrap();
    for (a, b) in exact.iter().zip(&shots) {
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }
    let again = fused_output(&spec, &x, &plan, OutputMode::Shots { estimator: est, seed: 1 }).unwrap();
    assert_eq!(shots, again);
}

#[test]
fn reduced_density_of_a_bell_pair() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = QuantumState::from_amplitudes(vec![c64(h, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(h, 0.0)]).unwrap();
    for q in 0..2 {
        let rho = reduced_density(&bell, q).unwrap();
        assert!((rho.get(0, 0).re - 0.5).abs() < 1e-15 && rho.get(0, 1).norm() < 1e-15);
        for plane in [Plane::Xz, Plane::Xy, Plane::Yz] {
            assert!(expectation_exact(&bell, &Observable::new(plane, 1.1, q)).unwrap().abs() < 1e-15);
        }
    }
    let unnormalized = QuantumState::from_amplitudes(vec![c64(1.0, 0.0), c64(1.0, 0.0)]);
    if let Ok(s) = unnormalized {
        assert!(expectation_exact(&s, &Observable::new(Plane::Xz, 0.0, 0)).is_err());
    }
}
