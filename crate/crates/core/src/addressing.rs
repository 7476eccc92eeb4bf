//! Per-ion qubit frequencies in a field gradient, and off-resonant
//! excitation of neighbouring ions.
//!
//! Rabi frequencies are in cycles: a resonant pi pulse lasts `1 / (2 rabi)`.

use std::f64::consts::PI;

use crate::constants::MU_B_OVER_H_MHZ_PER_GAUSS;
use crate::ionchain::ChainSolution;
use crate::magnetostatics::SiteReport;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QubitConstants {
    /// Difference of the effective g-factors of the two qubit levels.
    pub delta_g: f64,
    /// Bohr magneton over Planck constant, MHz/G.
    pub mu_b_over_h: f64,
    pub transition: String,
}

impl Default for QubitConstants {
    fn default() -> Self {
        Self {
            delta_g: 2.0,
            mu_b_over_h: MU_B_OVER_H_MHZ_PER_GAUSS,
            transition: "S1/2(-1/2)->D5/2(-5/2)".into(),
        }
    }
}

impl QubitConstants {
    pub fn with_delta_g(delta_g: f64) -> Result<Self> {
        if !(delta_g > 0.0) || !delta_g.is_finite() {
            return Err(Error::domain(format!("delta_g must be positive, got {delta_g}")));
        }
        Ok(Self {
            delta_g,
            ..Self::default()
        })
    }

    /// `delta_g = |g_upper m_upper - g_lower m_lower|`.
    pub fn from_lande(g_lower: f64, m_lower: f64, g_upper: f64, m_upper: f64) -> Result<Self> {
        let mut c = Self::with_delta_g((g_upper * m_upper - g_lower * m_lower).abs())?;
        c.transition = format!("g={g_lower} m={m_lower} -> g={g_upper} m={m_upper}");
        Ok(c)
    }

    /// Frequency shift per gauss, kHz/G.
    pub fn khz_per_gauss(&self) -> f64 {
        self.delta_g * self.mu_b_over_h * 1e3
    }

    /// Signed transition shift for a field `bz` (gauss), kHz.
    pub fn zeeman_shift(&self, bz: f64) -> f64 {
        self.khz_per_gauss() * bz
    }

    /// Frequency separation of two ions `spacing_um` apart in a gradient
    /// `gradient_g_per_mm`, kHz.
    pub fn splitting(&self, spacing_um: f64, gradient_g_per_mm: f64) -> Result<f64> {
        if !(spacing_um > 0.0) {
            return Err(Error::domain(format!("spacing must be positive, got {spacing_um} um")));
        }
        Ok(self.khz_per_gauss() * spacing_um * gradient_g_per_mm * 1e-3)
    }

    /// Gradient (G/mm) that separates neighbours by `margin` times the Rabi
    /// frequency.
    pub fn required_gradient(&self, spacing_um: f64, rabi_khz: f64, margin: f64) -> Result<f64> {
        if !(spacing_um > 0.0) || !(rabi_khz > 0.0) {
            return Err(Error::domain("spacing and Rabi frequency must be positive"));
        }
        if !(margin >= 1.0) {
            return Err(Error::domain(format!("margin must be at least 1, got {margin}")));
        }
        Ok(margin * rabi_khz / (self.khz_per_gauss() * spacing_um * 1e-3))
    }
}

pub fn zeeman_shift(bz: f64) -> f64 {
    QubitConstants::default().zeeman_shift(bz)
}

pub fn splitting(spacing_um: f64, gradient_g_per_mm: f64) -> Result<f64> {
    QubitConstants::default().splitting(spacing_um, gradient_g_per_mm)
}

pub fn required_gradient(spacing_um: f64, rabi_khz: f64, margin: f64) -> Result<f64> {
    QubitConstants::default().required_gradient(spacing_um, rabi_khz, margin)
}

/// Lorentzian envelope `rabi^2 / (rabi^2 + detuning^2)`.
pub fn envelope(rabi_khz: f64, detuning_khz: f64) -> f64 {
    let r2 = rabi_khz * rabi_khz;
    r2 / (r2 + detuning_khz * detuning_khz)
}

/// Upper-state population after a square pulse of `duration_us` starting in
/// the lower state.
pub fn excitation_probability(rabi_khz: f64, detuning_khz: f64, duration_us: f64) -> f64 {
    let general = rabi_khz.hypot(detuning_khz);
    if general == 0.0 {
        return 0.0;
    }
    let s = (PI * general * duration_us * 1e-3).sin();
    envelope(rabi_khz, detuning_khz) * s * s
}

/// Resonant pi-pulse length, us.
pub fn pi_time_us(rabi_khz: f64) -> f64 {
    1e3 / (2.0 * rabi_khz)
}

/// The three readings of neighbour excitation during a pi pulse on the
/// addressed ion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crosstalk {
    /// At exactly the pi time.
    pub instantaneous: f64,
    /// Peak of the off-resonant oscillation.
    pub envelope: f64,
    /// Mean over the off-resonant oscillation.
    pub time_averaged: f64,
}

pub fn crosstalk_at_pi(rabi_khz: f64, splitting_khz: f64) -> Result<Crosstalk> {
    if !(rabi_khz > 0.0) || !(splitting_khz > 0.0) {
        return Err(Error::domain("Rabi frequency and splitting must be positive"));
    }
    let env = envelope(rabi_khz, splitting_khz);
    Ok(Crosstalk {
        instantaneous: excitation_probability(rabi_khz, splitting_khz, pi_time_us(rabi_khz)),
        envelope: env,
        time_averaged: 0.5 * env,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AddressEntry {
    pub ion_index: usize,
    pub position_um: f64,
    /// Relative to the zero-field line centre, kHz.
    pub frequency_offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AddressMap {
    pub entries: Vec<AddressEntry>,
    pub rabi_freq: f64,
    /// Common shift from the residual path field, kHz.
    pub center_shift: f64,
}

impl AddressMap {
    /// Worst crosstalk from a pi pulse on any neighbour of ion `i`, taken
    /// component by component. `None` for a single ion.
    pub fn neighbor_crosstalk(&self, i: usize) -> Option<Crosstalk> {
        let me = self.entries.get(i)?;
        let neighbours = [i.checked_sub(1), Some(i + 1)];
        neighbours
            .iter()
            .flatten()
            .filter_map(|&j| self.entries.get(j))
            .map(|n| {
                let d = (n.frequency_offset - me.frequency_offset).abs();
                if d == 0.0 {
                    Crosstalk {
                        instantaneous: 1.0,
                        envelope: 1.0,
                        time_averaged: 0.5,
                    }
                } else {
                    crosstalk_at_pi(self.rabi_freq, d).expect("positive inputs")
                }
            })
            .reduce(|a, b| Crosstalk {
                instantaneous: a.instantaneous.max(b.instantaneous),
                envelope: a.envelope.max(b.envelope),
                time_averaged: a.time_averaged.max(b.time_averaged),
            })
    }
}

/// Qubit offsets of every ion in `chain` for the field environment `site`.
pub fn build_address_map(
    chain: &ChainSolution,
    site: &SiteReport,
    rabi_khz: f64,
    constants: &QubitConstants,
) -> Result<AddressMap> {
    if chain.positions.is_empty() {
        return Err(Error::domain("chain has no ions"));
    }
    if !(rabi_khz > 0.0) {
        return Err(Error::domain(format!("Rabi frequency must be positive, got {rabi_khz} kHz")));
    }
    let center_shift = constants.zeeman_shift(site.residual_b.z);
    let per_um = constants.khz_per_gauss() * site.dbz_dy * 1e-3;
    let entries = chain
        .positions
        .iter()
        .enumerate()
        .map(|(i, y)| AddressEntry {
            ion_index: i,
            position_um: *y,
            frequency_offset: per_um * y + center_shift,
        })
        .collect();
    Ok(AddressMap {
        entries,
        rabi_freq: rabi_khz,
        center_shift,
    })
}
