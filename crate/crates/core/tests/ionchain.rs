use gradkit::ionchain::{equilibrium_positions, length_scale, scaled_energy, spacings, Species};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Plain gradient descent on the scaled energy, independent of the solver.
fn descend(mut u: Vec<f64>) -> Vec<f64> {
    let n = u.len();
    for _ in 0..200_000 {
        let mut g = vec![0.0; n];
        for i in 0..n {
            g[i] = u[i];
            for j in 0..n {
                if i != j {
                    let d = u[i] - u[j];
                    g[i] -= d.signum() / (d * d);
                }
            }
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-13 {
            break;
        }
        // step small enough to keep neighbours ordered
        let gap = u.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
        let step = 0.05f64.min(0.1 * gap / norm);
        for i in 0..n {
            u[i] -= step * g[i];
        }
    }
    u.sort_by(f64::total_cmp);
    u
}

#[test]
fn five_ions_agree_with_gradient_descent_from_random_starts() {
    let sr = Species::sr88();
    let l = length_scale(&sr, 847.0).unwrap();
    let sol = equilibrium_positions(&sr, 847.0, 5).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut start: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
        start.sort_by(f64::total_cmp);
        let oracle = descend(start);
        for (a, b) in sol.positions.iter().zip(&oracle) {
            assert!((a / l - b).abs() < 1e-8, "{a} vs {}", b * l);
        }
    }
}

#[test]
fn known_scaled_positions() {
    // two ions: u = +-(1/4)^(1/3); three ions: u = 0, +-(5/4)^(1/3)
    let sr = Species::sr88();
    let l = length_scale(&sr, 847.0).unwrap();
    let two = equilibrium_positions(&sr, 847.0, 2).unwrap();
    assert!((two.positions[1] / l - 0.25f64.cbrt()).abs() < 1e-12);
    let three = equilibrium_positions(&sr, 847.0, 3).unwrap();
    assert!(three.positions[1].abs() < 1e-12);
    assert!((three.positions[2] / l - 1.25f64.cbrt()).abs() < 1e-12);
}

#[test]
fn large_chains_converge() {
    let sol = equilibrium_positions(&Species::ca40(), 1000.0, 50).unwrap();
    assert_eq!(sol.len(), 50);
    assert!(sol.residual_force < 1e-10);
    let gaps = spacings(&sol).unwrap();
    // the chain is densest in the middle
    assert!(gaps[24] < gaps[0]);
    assert!(equilibrium_positions(&Species::ca40(), 1000.0, 51).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spacing_scales_as_frequency_to_the_minus_two_thirds(n in 2usize..12, f in 100.0..3000.0f64, k in 1.1..4.0f64) {
        let sr = Species::sr88();
        let a = equilibrium_positions(&sr, f, n).unwrap();
        let b = equilibrium_positions(&sr, f * k, n).unwrap();
        let ratio = k.powf(-2.0 / 3.0);
        for (x, y) in a.positions.iter().zip(&b.positions) {
            prop_assert!((y - x * ratio).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn spacing_scales_as_mass_to_the_minus_one_third(n in 2usize..8, m in 4.0..200.0f64) {
        let a = equilibrium_positions(&Species::new("a", m, 1).unwrap(), 847.0, n).unwrap();
        let b = equilibrium_positions(&Species::new("b", 8.0 * m, 1).unwrap(), 847.0, n).unwrap();
        for (x, y) in a.positions.iter().zip(&b.positions) {
            prop_assert!((y - 0.5 * x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn equilibrium_is_a_symmetric_local_minimum(n in 1usize..20, dir in prop::collection::vec(-1.0..1.0f64, 20)) {
        let sr = Species::sr88();
        let l = length_scale(&sr, 847.0).unwrap();
        let sol = equilibrium_positions(&sr, 847.0, n).unwrap();
        let u: Vec<f64> = sol.positions.iter().map(|y| y / l).collect();
        for i in 0..n {
            prop_assert!((u[i] + u[n - 1 - i]).abs() < 1e-10);
        }
        let e0 = scaled_energy(&u);
        let moved: Vec<f64> = u.iter().zip(&dir).map(|(x, d)| x + 1e-3 * d).collect();
        prop_assert!(scaled_energy(&moved) >= e0);
    }
}
