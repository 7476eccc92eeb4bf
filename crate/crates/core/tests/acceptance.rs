//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use gradkit::addressing::{crosstalk_at_pi, excitation_probability, pi_time_us, required_gradient, splitting};
use gradkit::coherence::{
    calibrate_correlation_time, calibrate_sigma, echo_contrast, echo_time_constant, MonteCarlo, NoiseModel,
    PulseSchedule,
};
use gradkit::ionchain::{equilibrium_positions, spacings, Species};
use gradkit::magnetostatics::{power_dissipated, segment_field, FieldSolver, Point3};
use gradkit::optimizer::{build_geometry, detuned_start, optimize, Constraints, OptimizeSpec, SGeometryParams};
use gradkit::report;
use gradkit::spectra::{
    fit_decay, fit_flop, fit_spectrum, simulate_flop, simulate_scan, DecayModel, DecayPoint, FlopParams,
    SpectrumModelParams,
};
use gradkit::DEFAULT_SEED;
use rand::{Rng, SeedableRng};

use common::{quadrature_field, rk4_population, K};

type Criterion = (u32, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn within_rel(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn two_ion_spacing() -> f64 {
    spacings(&equilibrium_positions(&Species::sr88(), 847.0, 2).unwrap()).unwrap()[0]
}

fn criterion_1() -> Outcome {
    let s = two_ion_spacing();
    check((s - 4.80).abs() <= 0.05, format!("two-ion spacing {s:.4} um (target 4.80 +- 0.05)"))
}

fn criterion_2() -> Outcome {
    let s = spacings(&equilibrium_positions(&Species::sr88(), 847.0, 3).unwrap()).unwrap();
    let ok = s.iter().all(|x| (x - 4.11).abs() <= 0.05);
    check(ok, format!("three-ion spacings {:.4}, {:.4} um (target 4.11 +- 0.05)", s[0], s[1]))
}

fn criterion_3() -> Outcome {
    let a = splitting(4.81, 23.0).unwrap();
    let b = splitting(4.11, 23.0).unwrap();
    let c = splitting(4.81, 14.0).unwrap();
    let ok = (a - 309.7).abs() < 0.1
        && (b - 264.7).abs() < 0.1
        && (c - 188.5).abs() < 0.1
        && within_rel(a, 310.0, 0.02)
        && within_rel(b, 266.0, 0.015)
        && within_rel(c, 190.0, 0.02);
    check(ok, format!("splittings {a:.2} / {b:.2} / {c:.2} kHz vs 310 / 266 / 190"))
}

fn criterion_4() -> Outcome {
    let g = required_gradient(5.0, 100.0, 1.0).unwrap();
    check(
        (g - 7.15).abs() < 0.01 && within_rel(g, 7.2, 0.01),
        format!("required gradient {g:.4} G/mm vs 7.2"),
    )
}

fn criterion_5() -> Outcome {
    let c34 = crosstalk_at_pi(34.0, 188.5).unwrap();
    let c35 = crosstalk_at_pi(35.0, 190.0).unwrap();
    let band = |x: f64| (0.012..=0.032).contains(&x);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (r, d, t) = (rng.random_range(5.0..60.0), rng.random_range(-300.0..300.0), rng.random_range(0.0..100.0));
        worst = worst.max((excitation_probability(r, d, t) - rk4_population(r, d, t)).abs());
    }
    for (r, d) in [(34.0, 188.5), (35.0, 190.0)] {
        worst = worst.max((excitation_probability(r, d, pi_time_us(r)) - rk4_population(r, d, pi_time_us(r))).abs());
    }
    let ok = c34.instantaneous <= 0.028 && (band(c35.instantaneous) || band(c35.time_averaged)) && worst < 1e-6;
    check(
        ok,
        format!(
            "34 kHz instantaneous {:.4}%; 35 kHz instantaneous {:.4}% / time-averaged {:.4}%; ODE max diff {worst:.2e}",
            100.0 * c34.instantaneous,
            100.0 * c35.instantaneous,
            100.0 * c35.time_averaged
        ),
    )
}

fn criterion_6() -> Outcome {
    let pt = |v: [f64; 3]| Point3::new(v[0], v[1], v[2]);
    let b = segment_field(pt([-1e7, 0.0, 0.0]), pt([1e7, 0.0, 0.0]), 300.0, pt([0.0, 0.0, 50.0])).unwrap();
    let wire = (b.norm() - 2.0 * K * 300.0 / 50.0).abs() / (2.0 * K * 300.0 / 50.0);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut quad: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let mut r3 = |s: f64| [rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s)];
        let (a, bb, p) = (r3(100.0), r3(100.0), r3(150.0));
        let i = rng.random_range(-500.0..500.0);
        if dist(a, bb) < 1.0 || seg_dist(a, bb, p) < 5.0 {
            continue;
        }
        let closed = segment_field(pt(a), pt(bb), i, pt(p)).unwrap();
        let numeric = quadrature_field(a, bb, i, p);
        quad = quad.max((closed - numeric).norm() / numeric.norm());
        n += 1;
    }

    let paths = build_geometry(&SGeometryParams::reference(), 300.0).unwrap();
    let solver = FieldSolver::default();
    let (mut div, mut curl): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let p = pt([rng.random_range(-1200.0..1200.0), rng.random_range(-400.0..400.0), rng.random_range(20.0..400.0)]);
        let s = solver.sample(&paths, p).unwrap();
        let scale = s.grad.norm();
        div = div.max(s.divergence().abs() / scale);
        curl = curl.max(s.asymmetry() / scale);
    }
    check(
        wire < 1e-4 && quad < 1e-9 && div < 1e-6 && curl < 1e-6,
        format!("infinite wire {wire:.1e}, quadrature {quad:.1e}, divergence {div:.1e}, curl {curl:.1e} (relative)"),
    )
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn seg_dist(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let s = ((w[0] * d[0] + w[1] * d[1] + w[2] * d[2]) / (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).clamp(0.0, 1.0);
    dist(p, [a[0] + s * d[0], a[1] + s * d[1], a[2] + s * d[2]])
}

fn criterion_7() -> Outcome {
    let p = power_dissipated(500.0, 0.2).unwrap();
    check(p == 50.0, format!("power {p} mW"))
}

fn criterion_8() -> Outcome {
    let truth = SpectrumModelParams::evenly_split(2, 310.0, 0.9, 9.0, 50.0).unwrap();
    let freqs = grid(-350.0, 350.0, 2.0);
    let fit_one = |seed: u64| {
        let data = simulate_scan(&truth, &freqs, 100, seed).unwrap();
        fit_spectrum(&data, 2, 50.0, None).unwrap().derived["splitting_khz"]
    };
    let (s, sigma) = fit_one(DEFAULT_SEED);
    let reps: Vec<(f64, f64)> = (0..200u64).map(|i| fit_one(DEFAULT_SEED.wrapping_add(1000 + i))).collect();
    let covered = reps.iter().filter(|(v, e)| (v - 310.0).abs() <= *e).count();
    let coverage = covered as f64 / reps.len() as f64;
    let worst = reps.iter().map(|(v, _)| (v - 310.0).abs()).fold(0.0, f64::max);
    let recovered = (s - 310.0).abs() <= 4.0 && worst <= 4.0;
    // "about 2 kHz" read as within a factor of two
    let sigma_ok = (1.0..=4.0).contains(&sigma);
    let coverage_ok = (0.60..=0.75).contains(&coverage);
    check(
        recovered && sigma_ok && coverage_ok,
        format!(
            "splitting {s:.2} +- {sigma:.3} kHz [within 4 kHz: {recovered}, sigma about 2 kHz: {sigma_ok}]; \
             1-sigma coverage {:.1}% over 200 [{coverage_ok}], worst error {worst:.2} kHz",
            100.0 * coverage
        ),
    )
}

fn criterion_9() -> Outcome {
    let truth = FlopParams {
        rabi: 35.0,
        envelope_hwhm: 170.0,
        contrast: 0.97,
        offset: 0.02,
    };
    let data = simulate_flop(&truth, &grid(0.0, 300.0, 3.0), 100, DEFAULT_SEED).unwrap();
    let fit = fit_flop(&data).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, v) in [("rabi_khz", 35.0), ("envelope_hwhm_us", 170.0), ("contrast", 0.97)] {
        let (x, e) = fit.value(name).unwrap();
        let z = (x - v) / e;
        ok &= z.abs() <= 3.0;
        parts.push(format!("{name} {x:.4}+-{e:.4} ({z:+.2} sigma)"));
    }
    check(ok, parts.join(", "))
}

fn criterion_10() -> Outcome {
    let sigma = calibrate_sigma(632.0).unwrap();
    let qs = NoiseModel::quasi_static(sigma).unwrap();
    let mc = MonteCarlo::new(10_000, DEFAULT_SEED);
    let delays = grid(0.0316, 1.264, 0.0316);
    let pts: Vec<DecayPoint> = mc
        .ramsey(&qs, &delays)
        .unwrap()
        .iter()
        .map(|p| DecayPoint {
            time_us: p.time * 1e3,
            contrast: p.contrast,
        })
        .collect();
    let t2_star = fit_decay(&pts, DecayModel::Gaussian).unwrap().value("time_constant_us").unwrap().0;
    let echo = echo_contrast(&qs, &PulseSchedule::single_echo(1.0).unwrap(), 10_000, DEFAULT_SEED).unwrap().contrast;

    let totals = grid(1.0, 10.0, 1.0);
    let calibration = MonteCarlo::new(2_000, DEFAULT_SEED.wrapping_add(1));
    let tau = calibrate_correlation_time(sigma, 10.0, 0.5, 1.0, &totals, &calibration, (0.5, 100.0)).unwrap();
    let ou = NoiseModel::ornstein_uhlenbeck(sigma, tau).unwrap();
    let t2 = echo_time_constant(&mc.echo_series(&ou, 0.5, 1.0, &totals).unwrap()).unwrap();
    check(
        within_rel(t2_star, 632.0, 0.03) && echo >= 0.99 && (5.0..=20.0).contains(&t2),
        format!("Ramsey T2* {t2_star:.1} us; static echo contrast {echo:.6}; OU echo T2 {t2:.2} ms at tau_c {tau:.2} ms"),
    )
}

fn criterion_11() -> Outcome {
    let spec = OptimizeSpec {
        constraints: Constraints {
            power_max_mw: 18.0,
            ..Constraints::default()
        },
        ..OptimizeSpec::default()
    };
    match optimize(&spec, &detuned_start()) {
        Ok(out) => {
            let m = out.metrics;
            check(
                m.feasible && m.gradient >= 14.0 && m.residual <= 20.0 && m.power <= 18.0 && out.trace.len() <= 500,
                format!(
                    "{:.3} G/mm, residual {:.2} mG, power {:.2} mW after {} evaluations",
                    m.gradient,
                    m.residual,
                    m.power,
                    out.trace.len()
                ),
            )
        }
        Err(e) => check(false, format!("optimizer failed: {e}")),
    }
}

fn criterion_12() -> Outcome {
    let a = report::render(&report::reproduce(DEFAULT_SEED).unwrap());
    let b = report::render(&report::reproduce(DEFAULT_SEED).unwrap());
    check(a == b, format!("two report runs, {} bytes each, identical: {}", a.len(), a == b))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 12] = [
        (1, criterion_1, Duration::from_secs(1)),
        (2, criterion_2, Duration::from_secs(1)),
        (3, criterion_3, Duration::from_secs(1)),
        (4, criterion_4, Duration::from_secs(1)),
        (5, criterion_5, Duration::from_secs(1)),
        (6, criterion_6, Duration::from_secs(10)),
        (7, criterion_7, Duration::from_secs(1)),
        (8, criterion_8, Duration::from_secs(120)),
        (9, criterion_9, Duration::from_secs(30)),
        (10, criterion_10, Duration::from_secs(120)),
        (11, criterion_11, Duration::from_secs(300)),
        (12, criterion_12, Duration::from_secs(300)),
    ];
    let mut failed = Vec::new();
    for (n, f, limit) in criteria {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= limit;
        println!(
            "criterion {n:>2}: {} - {} [{:.2} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        if !pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
