use crnsens::estimators::{Estimator, EstimatorError, Method, SensitivityRequest};
use crnsens::model::{builtin, OutputFunction, ReactionNetwork};
use crnsens::oracle::{exact_sensitivity_affine, mean_trajectory};
use crnsens::stats::{run_fixed, EstimateReport};
use proptest::prelude::*;

fn request(net: &ReactionNetwork, param: &str, t: f64, method: Method, seed: u64) -> SensitivityRequest {
    SensitivityRequest::new(net.clone(), param, OutputFunction::species(0), t, method, seed)
}

fn within_4_sigma(r: &EstimateReport, exact: f64) -> bool {
    (r.mean - exact).abs() <= 4.0 * r.std_dev
}

/// E[X(T)] of the first species from the mean ODE.
fn mean_at(net: &ReactionNetwork, t: f64) -> f64 {
    mean_trajectory(net, net.initial_state(), t).unwrap().last().unwrap().0[0]
}

#[test]
fn unbiased_methods_hit_the_exact_value() {
    let net = builtin("birth-death").unwrap();
    let exact = exact_sensitivity_affine(&net, "theta2", &OutputFunction::species(0), 10.0).unwrap();
    for (method, n) in [(Method::ppa(), 5_000), (Method::Girsanov, 20_000)] {
        let r = run_fixed(request(&net, "theta2", 10.0, method, 3), n, Some(exact)).unwrap();
        assert!(within_4_sigma(&r, exact), "{method:?}: {} ± {} vs {exact}", r.mean, r.std_dev);
    }
}

#[test]
fn ppa_is_unbiased_for_a_production_rate() {
    let net = builtin("gene-expression").unwrap();
    let f = OutputFunction::species(1);
    let exact = exact_sensitivity_affine(&net, "theta1", &f, 10.0).unwrap();
    let req = SensitivityRequest::new(net, "theta1", f, 10.0, Method::ppa(), 4);
    let r = run_fixed(req, 4_000, None).unwrap();
    assert!(within_4_sigma(&r, exact), "{} ± {} vs {exact}", r.mean, r.std_dev);
}

#[test]
fn finite_differences_target_the_difference_quotient() {
    let net = builtin("birth-death").unwrap();
    let (t, h) = (20.0, 0.1);
    let shifted = net.with_param("theta2", 0.1 + h).unwrap();
    let quotient = (mean_at(&shifted, t) - mean_at(&net, t)) / h;
    for method in [Method::Crp { h }, Method::Cfd { h }] {
        let r = run_fixed(request(&net, "theta2", t, method, 5), 10_000, None).unwrap();
        assert!(within_4_sigma(&r, quotient), "{method:?}: {} ± {} vs {quotient}", r.mean, r.std_dev);
    }
}

#[test]
fn girsanov_refuses_a_zero_rate_constant() {
    let net = builtin("gene-expression").unwrap().with_param("theta4", 0.0).unwrap();
    let err = Estimator::new(request(&net, "theta4", 20.0, Method::Girsanov, 1)).unwrap_err();
    assert!(matches!(err, EstimatorError::Unusable(_)), "{err:?}");
    // PPA has no such restriction.
    Estimator::new(request(&net, "theta4", 20.0, Method::ppa(), 1)).unwrap();
}

#[test]
fn zero_horizon_gives_exact_zero() {
    let net = builtin("birth-death").unwrap();
    for method in [Method::ppa(), Method::Girsanov, Method::Crp { h: 0.1 }, Method::Cfd { h: 0.1 }] {
        let r = run_fixed(request(&net, "theta2", 0.0, method, 1), 50, None).unwrap();
        assert_eq!((r.mean, r.std_dev), (0.0, 0.0), "{method:?}");
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let net = builtin("toggle-switch").unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let est = Estimator::new(request(&net, "beta", 5.0, Method::ppa(), 17)).unwrap();
            est.samples(0..64).unwrap()
        })
    };
    assert_eq!(run(1), run(5));
}

#[test]
fn calibration_uses_its_own_stream() {
    let net = builtin("birth-death").unwrap();
    let a = Estimator::new(request(&net, "theta2", 20.0, Method::ppa(), 2)).unwrap();
    let b = Estimator::new(request(&net, "theta2", 20.0, Method::ppa(), 2)).unwrap();
    assert_eq!(a.calibration(), b.calibration());
    assert_eq!(a.sample(7).unwrap(), b.sample(7).unwrap());
    assert!(a.calibration().unwrap().c().unwrap() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 16,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// A parameter no propensity uses has sensitivity 0 in every sample.
    #[test]
    fn unused_parameter_samples_are_zero(seed in any::<u64>(), idx in 0u64..1000) {
        let net = builtin("birth-death").unwrap();
        let src = format!("{}param unused = 3;\n", net);
        let net = crnsens::model::parse_model(&src).unwrap();
        for method in [Method::ppa(), Method::Girsanov, Method::Crp { h: 0.1 }, Method::Cfd { h: 0.1 }] {
            let est = Estimator::new(request(&net, "unused", 10.0, method, seed)).unwrap();
            prop_assert_eq!(est.sample(idx).unwrap().value, 0.0);
        }
    }

    #[test]
    fn samples_are_finite_and_repeatable(seed in any::<u64>(), idx in 0u64..1_000_000) {
        let net = builtin("gene-expression").unwrap();
        let req = SensitivityRequest::new(
            net, "theta4", OutputFunction::species(1), 5.0, Method::ppa(), seed,
        );
        let est = Estimator::new(req).unwrap();
        let s = est.sample(idx).unwrap();
        prop_assert!(s.value.is_finite());
        prop_assert_eq!(s, est.sample(idx).unwrap());
    }
}
