//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use gradkit::constants::MU0_OVER_4PI;
use gradkit::magnetostatics::Vector3;

/// G per (mA / um) for the Biot-Savart prefactor mu0 / 4 pi.
pub const K: f64 = MU0_OVER_4PI * 1e-3 / 1e-6 * 1e4;

/// Adaptive Simpson on `dl x r / |r|^3` along a segment.
pub fn quadrature_field(a: [f64; 3], b: [f64; 3], current: f64, p: [f64; 3]) -> Vector3<f64> {
    let a = Vector3::from(a);
    let b = Vector3::from(b);
    let p = Vector3::from(p);
    let dl = b - a;
    let f = |s: f64| {
        let r = p - (a + dl * s);
        dl.cross(&r) / r.norm().powi(3)
    };
    #[allow(clippy::too_many_arguments)]
    fn simpson<F: Fn(f64) -> Vector3<f64>>(
        f: &F,
        lo: f64,
        hi: f64,
        flo: Vector3<f64>,
        fmid: Vector3<f64>,
        fhi: Vector3<f64>,
        whole: Vector3<f64>,
        tol: f64,
        depth: u32,
    ) -> Vector3<f64> {
        let mid = 0.5 * (lo + hi);
        let (lm, rm) = (0.5 * (lo + mid), 0.5 * (mid + hi));
        let (flm, frm) = (f(lm), f(rm));
        let left = (flo + flm * 4.0 + fmid) * ((mid - lo) / 6.0);
        let right = (fmid + frm * 4.0 + fhi) * ((hi - mid) / 6.0);
        let diff = left + right - whole;
        if depth == 0 || diff.amax() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        simpson(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1)
            + simpson(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1)
    }
    let (f0, fm, f1) = (f(0.0), f(0.5), f(1.0));
    let whole = (f0 + fm * 4.0 + f1) / 6.0;
    let scale = whole.amax().max(1e-300);
    simpson(&f, 0.0, 1.0, f0, fm, f1, whole, 1e-14 * scale, 40) * (K * current)
}

/// RK4 on the two-level Schroedinger equation in the rotating frame,
/// amplitudes as (re, im) pairs. Frequencies kHz, time us.
pub fn rk4_population(rabi: f64, detuning: f64, duration_us: f64) -> f64 {
    let w = 2.0 * PI * rabi * 1e-3;
    let d = 2.0 * PI * detuning * 1e-3;
    // i dc/dt = H c, H = [[-d/2, w/2], [w/2, d/2]]
    let deriv = |c: [f64; 4]| {
        let (g_re, g_im, e_re, e_im) = (c[0], c[1], c[2], c[3]);
        let hg = (-0.5 * d * g_re + 0.5 * w * e_re, -0.5 * d * g_im + 0.5 * w * e_im);
        let he = (0.5 * w * g_re + 0.5 * d * e_re, 0.5 * w * g_im + 0.5 * d * e_im);
        // dc/dt = -i H c
        [hg.1, -hg.0, he.1, -he.0]
    };
    let steps = 20_000usize;
    let h = duration_us / steps as f64;
    let mut c = [1.0, 0.0, 0.0, 0.0];
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    for _ in 0..steps {
        let k1 = deriv(c);
        let k2 = deriv(add(c, k1, h / 2.0));
        let k3 = deriv(add(c, k2, h / 2.0));
        let k4 = deriv(add(c, k3, h));
        for i in 0..4 {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    c[2] * c[2] + c[3] * c[3]
}
