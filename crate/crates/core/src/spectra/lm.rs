//! Levenberg-Marquardt least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
pub const COST_TOLERANCE: f64 = 1e-12;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_UP: f64 = 10.0;
const LAMBDA_DOWN: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e16;
const RELATIVE_STEP: f64 = 1e-6;
const ABSOLUTE_STEP: f64 = 1e-9;
const RANK_TOLERANCE: f64 = 1e-10;

pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub cost: f64,
    pub iterations: usize,
}

fn eval<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64]) -> DVector<f64> {
    DVector::from_vec(f(x))
}

pub(crate) fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = (RELATIVE_STEP * x[j].abs()).max(ABSOLUTE_STEP);
        probe[j] = x[j] + h;
        let up = eval(f, &probe);
        probe[j] = x[j] - h;
        let down = eval(f, &probe);
        probe[j] = x[j];
        jac.set_column(j, &((up - down) / (2.0 * h)));
    }
    jac
}

/// Minimises `|f(x)|^2` from `x0`.
pub(crate) fn minimize<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x0: &[f64]) -> Result<Solution> {
    let mut x = x0.to_vec();
    let mut r = eval(f, &x);
    let m = r.len();
    let mut cost = r.norm_squared();
    let mut lambda = LAMBDA_START;
    let mut jac = jacobian(f, &x, m);

    for iteration in 1..=MAX_ITERATIONS {
        if cost == 0.0 {
            return Ok(Solution {
                x,
                jacobian: jac,
                cost,
                iterations: iteration - 1,
            });
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let step = a.clone().cholesky().map(|c| c.solve(&(-&g))).or_else(|| a.lu().solve(&(-&g)));
        let trial = step.map(|s| x.iter().zip(s.iter()).map(|(x, s)| x + s).collect::<Vec<f64>>());
        let accepted = trial.and_then(|t| {
            let rt = eval(f, &t);
            let ct = rt.norm_squared();
            (ct.is_finite() && ct <= cost).then_some((t, rt, ct))
        });
        match accepted {
            Some((t, rt, ct)) => {
                let change = (cost - ct) / cost;
                x = t;
                r = rt;
                cost = ct;
                lambda /= LAMBDA_DOWN;
                jac = jacobian(f, &x, m);
                if change < COST_TOLERANCE {
                    return Ok(Solution {
                        x,
                        jacobian: jac,
                        cost,
                        iterations: iteration,
                    });
                }
            }
            None => {
                lambda *= LAMBDA_UP;
                if lambda > LAMBDA_MAX {
                    // no descent direction left at working precision
                    return Ok(Solution {
                        x,
                        jacobian: jac,
                        cost,
                        iterations: iteration,
                    });
                }
            }
        }
    }
    Err(Error::Convergence {
        what: "least-squares fit",
        iterations: MAX_ITERATIONS,
        best_residual: cost,
        best: x,
    })
}

/// `(J^T J)^-1`, or a degenerate-fit error when `J` is rank deficient.
pub(crate) fn covariance(jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = jac.ncols();
    let svd = jac.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > RANK_TOLERANCE * smax)
        .count();
    if rank < p || smax == 0.0 {
        return Err(Error::DegenerateFit { rank, params: p });
    }
    let v_t = svd.v_t.expect("requested");
    let mut cov = DMatrix::zeros(p, p);
    for k in 0..p {
        let s2 = svd.singular_values[k] * svd.singular_values[k];
        let row = v_t.row(k);
        cov += row.transpose() * row / s2;
    }
    // symmetrise rounding noise
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-t / 1.7).exp()).collect();
        let f = |p: &[f64]| t.iter().zip(&y).map(|(t, y)| p[0] * (-t / p[1]).exp() - y).collect();
        let s = minimize(&f, &[1.0, 1.0]).unwrap();
        assert!((s.x[0] - 2.5).abs() < 1e-9 && (s.x[1] - 1.7).abs() < 1e-9, "{:?}", s.x);
    }

    #[test]
    fn linear_covariance_matches_closed_form() {
        // y = a + b x, unit errors: cov = (X^T X)^-1
        let xs = [0.0, 1.0, 2.0, 3.0];
        let f = |p: &[f64]| xs.iter().map(|x| p[0] + p[1] * x - 1.0).collect::<Vec<_>>();
        let jac = jacobian(&f, &[0.0, 0.0], 4);
        let cov = covariance(&jac).unwrap();
        // X^T X = [[4, 6], [6, 14]], det 20
        assert!((cov[(0, 0)] - 14.0 / 20.0).abs() < 1e-6);
        assert!((cov[(0, 1)] + 6.0 / 20.0).abs() < 1e-6);
        assert!((cov[(1, 1)] - 4.0 / 20.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let f = |p: &[f64]| vec![p[0] + p[1] - 1.0, 2.0 * (p[0] + p[1]) - 2.0];
        let jac = jacobian(&f, &[0.3, 0.4], 2);
        assert!(matches!(covariance(&jac), Err(Error::DegenerateFit { rank: 1, params: 2 })));
    }
}
