use std::f64::consts::PI;

use gradkit::coherence::{
    calibrate_sigma, echo_contrast, echo_time_constant, sample_detuning, MonteCarlo, NoiseModel, PulseSchedule,
};
use proptest::prelude::*;

#[test]
fn ou_samples_have_the_target_autocorrelation() {
    let (sigma, tau, dt) = (0.4, 2.0, 0.02);
    let x = sample_detuning(&NoiseModel::ornstein_uhlenbeck(sigma, tau).unwrap(), 20_000.0, dt, 3).unwrap();
    let n = x.len();
    let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance {var}");
    for lag_ms in [0.5, 2.0, 4.0] {
        let k = (lag_ms / dt) as usize;
        let c = x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64;
        let expected = sigma * sigma * (-lag_ms / tau).exp();
        assert!((c - expected).abs() < 0.05 * sigma * sigma, "lag {lag_ms}: {c} vs {expected}");
    }
}

#[test]
fn quasi_static_ramsey_matches_the_gaussian_average() {
    let sigma = calibrate_sigma(632.0).unwrap();
    let model = NoiseModel::quasi_static(sigma).unwrap();
    let delays = [0.2, 0.4, 0.632, 0.9, 1.2];
    let pts = MonteCarlo::new(20_000, 9).ramsey(&model, &delays).unwrap();
    for p in &pts {
        let exact = (-0.5 * (2.0 * PI * sigma * p.time).powi(2)).exp();
        // contrast is a magnitude, so it carries a bias of order 1/sqrt(N) near zero
        assert!((p.contrast - exact).abs() < 4.0 * p.std_error + 0.01, "{} vs {exact}", p.contrast);
    }
    assert!((pts[2].contrast - (-1.0f64).exp()).abs() < 0.02);
}

#[test]
fn symmetric_echoes_refocus_static_noise() {
    let model = NoiseModel::quasi_static(2.0).unwrap();
    let one = echo_contrast(&model, &PulseSchedule::single_echo(3.0).unwrap(), 500, 1).unwrap();
    assert!(one.contrast > 0.999_999, "{}", one.contrast);
    let cpmg = echo_contrast(&model, &PulseSchedule::periodic(0.5, 1.0, 4.0).unwrap(), 500, 1).unwrap();
    assert!(cpmg.contrast > 0.999_999);
    let off_centre = echo_contrast(&model, &PulseSchedule::new(vec![1.0], 3.0).unwrap(), 500, 1).unwrap();
    assert!(off_centre.contrast < 0.2);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let model = NoiseModel::ornstein_uhlenbeck(0.356, 4.0).unwrap();
    let mc = MonteCarlo::new(400, 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc.echo_series(&model, 0.5, 1.0, &[1.0, 3.0, 6.0]).unwrap())
    };
    let single = run(1);
    assert_eq!(single, run(3));
    assert_eq!(single, run(8));
}

#[test]
fn same_seed_same_result_other_seed_differs() {
    let model = NoiseModel::ornstein_uhlenbeck(0.356, 4.0).unwrap();
    let a = MonteCarlo::new(200, 1).ramsey(&model, &[0.5, 1.0]).unwrap();
    assert_eq!(a, MonteCarlo::new(200, 1).ramsey(&model, &[0.5, 1.0]).unwrap());
    assert_ne!(a, MonteCarlo::new(200, 2).ramsey(&model, &[0.5, 1.0]).unwrap());
}

#[test]
fn slower_noise_echoes_last_longer() {
    let mc = MonteCarlo::new(1000, 4);
    let totals: Vec<f64> = (1..=10).map(f64::from).collect();
    let t2 = |tau: f64| {
        let m = NoiseModel::ornstein_uhlenbeck(0.356, tau).unwrap();
        echo_time_constant(&mc.echo_series(&m, 0.5, 1.0, &totals).unwrap()).unwrap()
    };
    let (fast, slow) = (t2(2.0), t2(10.0));
    assert!(slow > fast, "{fast} {slow}");
}

#[test]
fn echo_outlasts_ramsey_under_slow_noise() {
    let model = NoiseModel::ornstein_uhlenbeck(0.356, 10.0).unwrap();
    let mc = MonteCarlo::new(2000, 6);
    let echo = mc.echo_series(&model, 0.5, 1.0, &[10.0]).unwrap()[0];
    let ramsey = mc.ramsey(&model, &[10.0]).unwrap()[0];
    assert!(echo.contrast >= ramsey.contrast, "{} < {}", echo.contrast, ramsey.contrast);
    assert!(echo.contrast > 0.5);
}

#[test]
fn lifetime_multiplies_the_contrast() {
    let model = NoiseModel::quasi_static(0.0).unwrap();
    let mc = MonteCarlo {
        lifetime: Some(10.0),
        ..MonteCarlo::new(100, 0)
    };
    let p = mc.ramsey(&model, &[5.0]).unwrap()[0];
    assert!((p.contrast - (-0.5f64).exp()).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(NoiseModel::quasi_static(-1.0).is_err());
    assert!(NoiseModel::ornstein_uhlenbeck(1.0, 0.0).is_err());
    let ou = NoiseModel::ornstein_uhlenbeck(1.0, 0.05).unwrap();
    assert!(MonteCarlo::new(100, 0).ramsey(&ou, &[1.0]).is_err());
    assert!(MonteCarlo::new(99, 0).ramsey(&NoiseModel::quasi_static(1.0).unwrap(), &[1.0]).is_err());
    assert!(PulseSchedule::parse_periodic("nonsense", 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn contrast_stays_in_the_unit_interval(sigma in 0.0..3.0f64, tau in 0.5..20.0f64, t in 0.1..5.0f64, seed in any::<u64>()) {
        let model = NoiseModel::ornstein_uhlenbeck(sigma, tau).unwrap();
        let p = MonteCarlo::new(100, seed).ramsey(&model, &[t]).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&p.contrast));
        prop_assert!(p.std_error >= 0.0);
    }
}
