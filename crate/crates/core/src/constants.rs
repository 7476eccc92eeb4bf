//! Physical constants (CODATA 2018) and species data.

/// Vacuum permeability over 4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Bohr magneton over Planck's constant, MHz per gauss.
pub const MU_B_OVER_H_MHZ_PER_GAUSS: f64 = 1.399_624_493_61;

/// Atomic mass of 88Sr, u.
pub const MASS_SR88: f64 = 87.905_612_1;
/// Atomic mass of 40Ca, u.
pub const MASS_CA40: f64 = 39.962_590_863;

pub const GAUSS_PER_TESLA: f64 = 1.0e4;
