//! Closed-form field and field gradient of a thin straight current filament.

use nalgebra::{Matrix3, Vector3};

use crate::constants::{GAUSS_PER_TESLA, MU0_OVER_4PI};

/// Converts `mu0/4pi * I[mA] * (geometry in 1/um)` to gauss.
pub(crate) const GAUSS_PER_MA_PER_UM: f64 = MU0_OVER_4PI * 1.0e-3 * 1.0e6 * GAUSS_PER_TESLA;
pub(crate) const UM_PER_MM: f64 = 1.0e3;

/// Distance from `p` to the closed segment `a`-`b`.
pub(crate) fn distance_to_segment(a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// `R1 R2 + r1.r2`, evaluated without cancellation when the two lever arms
/// point in opposite directions (field point beside the segment).
fn denominator(r1: &Vector3<f64>, r2: &Vector3<f64>, n1: f64, n2: f64) -> f64 {
    let dot = r1.dot(r2);
    if dot >= 0.0 {
        n1 * n2 + dot
    } else {
        r1.cross(r2).norm_squared() / (n1 * n2 - dot)
    }
}

/// Field in gauss at `p` (um) from current `current_ma` flowing `a -> b`.
///
/// `B = mu0 I / 4pi * (dl x r1) (R1 + R2) / (R1 R2 (R1 R2 + r1.r2))` with
/// `r1 = p - a`, `r2 = p - b`, `dl = b - a`. The caller is responsible for the
/// singularity check.
pub(crate) fn field(a: &Vector3<f64>, b: &Vector3<f64>, current_ma: f64, p: &Vector3<f64>) -> Vector3<f64> {
    let dl = b - a;
    let r1 = p - a;
    let r2 = p - b;
    let n1 = r1.norm();
    let n2 = r2.norm();
    let d = denominator(&r1, &r2, n1, n2);
    let f = (n1 + n2) / (n1 * n2 * d);
    dl.cross(&r1) * (f * current_ma * GAUSS_PER_MA_PER_UM)
}

/// Field (gauss) and gradient tensor (gauss/mm, `[i][j] = dB_i/dx_j`).
pub(crate) fn field_and_gradient(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    current_ma: f64,
    p: &Vector3<f64>,
) -> (Vector3<f64>, Matrix3<f64>) {
    let dl = b - a;
    let r1 = p - a;
    let r2 = p - b;
    let n1 = r1.norm();
    let n2 = r2.norm();
    let u1 = r1 / n1;
    let u2 = r2 / n2;
    let sum = n1 + n2;
    let d = denominator(&r1, &r2, n1, n2);
    let f = sum / (n1 * n2 * d);

    // grad D = (R1 + R2)(u1 + u2), grad N = u1 + u2
    let s = u1 + u2;
    let grad_f = (s / sum - u1 / n1 - u2 / n2 - s * (sum / d)) * f;

    let v = dl.cross(&r1);
    let scale = current_ma * GAUSS_PER_MA_PER_UM;
    let mut grad = v * grad_f.transpose();
    for j in 0..3 {
        let col = dl.cross(&Vector3::ith(j, 1.0)) * f;
        for i in 0..3 {
            grad[(i, j)] += col[i];
        }
    }
    (v * (f * scale), grad * (scale * UM_PER_MM))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_handles_endpoints_and_interior() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(10.0, 0.0, 0.0);
        assert!((distance_to_segment(&a, &b, &Vector3::new(5.0, 3.0, 0.0)) - 3.0).abs() < 1e-12);
        assert!((distance_to_segment(&a, &b, &Vector3::new(13.0, 4.0, 0.0)) - 5.0).abs() < 1e-12);
        assert!((distance_to_segment(&a, &b, &Vector3::new(-3.0, 0.0, 4.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn stable_denominator_matches_naive_away_from_wire() {
        let r1 = Vector3::new(-3.0, 2.0, 1.0);
        let r2 = Vector3::new(4.0, 2.5, 1.0);
        let (n1, n2) = (r1.norm(), r2.norm());
        let naive = n1 * n2 + r1.dot(&r2);
        assert!((denominator(&r1, &r2, n1, n2) - naive).abs() < 1e-12 * naive);
    }
}
