//! Equilibrium of a linear ion crystal in a harmonic axial well.
//!
//! Positions are solved in units of the length scale
//! `l = (q^2 / (4 pi eps0 m w^2))^(1/3)`, where the scaled force on ion `i` is
//! `-u_i + sum_j sign(u_i - u_j) / (u_i - u_j)^2`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, EPSILON_0, MASS_CA40, MASS_SR88};
use crate::{Error, Result};

pub const MAX_IONS: usize = 50;
/// Largest net scaled force accepted at a solution.
pub const FORCE_TOLERANCE: f64 = 1e-10;

const NEWTON_ITERATIONS: usize = 200;
const DESCENT_SWEEPS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Species {
    pub name: String,
    /// Atomic mass units.
    pub mass: f64,
    /// Elementary charges.
    pub charge: u32,
}

impl Species {
    pub fn new(name: impl Into<String>, mass: f64, charge: u32) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::domain(format!("mass must be positive, got {mass}")));
        }
        if charge == 0 {
            return Err(Error::domain("charge must be at least 1"));
        }
        Ok(Self {
            name: name.into(),
            mass,
            charge,
        })
    }

    pub fn sr88() -> Self {
        Self {
            name: "Sr88".into(),
            mass: MASS_SR88,
            charge: 1,
        }
    }

    pub fn ca40() -> Self {
        Self {
            name: "Ca40".into(),
            mass: MASS_CA40,
            charge: 1,
        }
    }

    /// `Sr88`, `Ca40` (case-insensitive) or a bare mass in u.
    pub fn parse(text: &str) -> Result<Self> {
        match text.to_ascii_lowercase().as_str() {
            "sr88" | "88sr" | "sr" => Ok(Self::sr88()),
            "ca40" | "40ca" | "ca" => Ok(Self::ca40()),
            _ => {
                let mass: f64 = text
                    .parse()
                    .map_err(|_| Error::domain(format!("unknown species '{text}' (use Sr88, Ca40 or a mass in u)")))?;
                Self::new(format!("m{mass}"), mass, 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    /// Axial positions, um, ascending.
    pub positions: Vec<f64>,
    /// kHz.
    pub secular_freq: f64,
    pub species: Species,
    /// Largest net force on any ion, scaled units.
    pub residual_force: f64,
}

impl ChainSolution {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,position_um\n");
        for (i, y) in self.positions.iter().enumerate() {
            let _ = writeln!(out, "{i},{y}");
        }
        out
    }
}

/// Length scale `l` in um.
pub fn length_scale(species: &Species, secular_freq_khz: f64) -> Result<f64> {
    if !(secular_freq_khz > 0.0) || !secular_freq_khz.is_finite() {
        return Err(Error::domain(format!(
            "secular frequency must be positive, got {secular_freq_khz} kHz"
        )));
    }
    let q = species.charge as f64 * ELEMENTARY_CHARGE;
    let m = species.mass * ATOMIC_MASS_UNIT;
    let omega = 2.0 * std::f64::consts::PI * secular_freq_khz * 1e3;
    let l3 = q * q / (4.0 * std::f64::consts::PI * EPSILON_0 * m * omega * omega);
    Ok(l3.cbrt() * 1e6)
}

/// Scaled net force on every ion.
pub fn scaled_forces(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let coulomb: f64 = (0..u.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d = u[i] - u[j];
                    d.signum() / (d * d)
                })
                .sum();
            coulomb - u[i]
        })
        .collect()
}

/// Scaled potential energy `sum u^2/2 + sum_{i<j} 1/|u_i - u_j|`.
pub fn scaled_energy(u: &[f64]) -> f64 {
    let mut e: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            e += 1.0 / (u[i] - u[j]).abs();
        }
    }
    e
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn is_ordered(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] > w[0])
}

fn hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[(i, i)] += c;
                h[(i, j)] -= c;
            }
        }
    }
    h
}

fn newton(u: &mut Vec<f64>) -> bool {
    let mut energy = scaled_energy(u);
    for _ in 0..NEWTON_ITERATIONS {
        let f = scaled_forces(u);
        if max_abs(&f) <= FORCE_TOLERANCE {
            return true;
        }
        let Some(step) = hessian(u).cholesky().map(|c| c.solve(&DVector::from_vec(f))) else {
            return false;
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect();
            if is_ordered(&trial) {
                let e = scaled_energy(&trial);
                if e <= energy + 1e-15 * energy.abs() {
                    *u = trial;
                    energy = e;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return false;
            }
        }
    }
    max_abs(&scaled_forces(u)) <= FORCE_TOLERANCE
}

/// One-dimensional Newton updates on each coordinate in turn.
fn coordinate_descent(u: &mut [f64]) -> bool {
    let n = u.len();
    for _ in 0..DESCENT_SWEEPS {
        for i in 0..n {
            for _ in 0..3 {
                let f = scaled_forces(u)[i];
                let curvature = 1.0
                    + (0..n)
                        .filter(|&j| j != i)
                        .map(|j| 2.0 / (u[i] - u[j]).abs().powi(3))
                        .sum::<f64>();
                let mut step = f / curvature;
                let lo = if i > 0 { u[i - 1] } else { f64::NEG_INFINITY };
                let hi = if i + 1 < n { u[i + 1] } else { f64::INFINITY };
                while !(u[i] + step > lo && u[i] + step < hi) {
                    step *= 0.5;
                }
                u[i] += step;
            }
        }
        if max_abs(&scaled_forces(u)) <= FORCE_TOLERANCE {
            return true;
        }
    }
    false
}

/// Equilibrium positions of `n` ions, ascending, in um.
pub fn equilibrium_positions(species: &Species, secular_freq_khz: f64, n: usize) -> Result<ChainSolution> {
    if n == 0 || n > MAX_IONS {
        return Err(Error::domain(format!("ion count must be in 1..={MAX_IONS}, got {n}")));
    }
    let scale = length_scale(species, secular_freq_khz)?;
    let half = 0.5 * (n as f64).powf(0.9);
    let mut u: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
    };
    if !newton(&mut u) && !coordinate_descent(&mut u) {
        return Err(Error::Convergence {
            what: "chain equilibrium",
            iterations: NEWTON_ITERATIONS + DESCENT_SWEEPS,
            best_residual: max_abs(&scaled_forces(&u)),
            best: u.iter().map(|x| x * scale).collect(),
        });
    }
    // remove the rounding-level asymmetry left by the solver
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    let residual_force = max_abs(&scaled_forces(&sym));
    let u = if residual_force <= FORCE_TOLERANCE { sym } else { u };
    Ok(ChainSolution {
        residual_force: max_abs(&scaled_forces(&u)),
        positions: u.iter().map(|x| x * scale).collect(),
        secular_freq: secular_freq_khz,
        species: species.clone(),
    })
}

/// Adjacent spacings, um.
pub fn spacings(solution: &ChainSolution) -> Result<Vec<f64>> {
    if solution.positions.len() < 2 {
        return Err(Error::domain("spacings need at least two ions"));
    }
    Ok(solution.positions.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Secular frequency from the carrier and first motional sideband, kHz.
pub fn secular_from_sidebands(carrier_khz: f64, sideband_khz: f64) -> Result<f64> {
    if carrier_khz == sideband_khz {
        return Err(Error::domain("sideband coincides with the carrier"));
    }
    Ok((sideband_khz - carrier_khz).abs())
}
