//! End-to-end reproduction table: every headline number recomputed from
//! first principles next to its published value.
//!
//! All randomness is seeded, so the rendered table is byte-stable.

use std::fmt::Write as _;

use crate::addressing::{crosstalk_at_pi, required_gradient, splitting};
use crate::coherence::{calibrate_correlation_time, calibrate_sigma, echo_time_constant, MonteCarlo, NoiseModel};
use crate::ionchain::{equilibrium_positions, spacings, Species};
use crate::magnetostatics::power_dissipated;
use crate::optimizer::{evaluate, SGeometryParams};
use crate::spectra::{
    fit_decay, fit_flop, fit_spectrum, simulate_flop, simulate_scan, DecayModel, DecayPoint, FlopParams,
    SpectrumModelParams,
};
use crate::Result;

pub const SECULAR_KHZ: f64 = 847.0;
const MC_TRAJECTORIES: usize = 10_000;
const CALIBRATION_TRAJECTORIES: usize = 2_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub quantity: &'static str,
    pub unit: &'static str,
    pub computed: f64,
    /// Computed standard error where the quantity comes from a fit.
    pub uncertainty: Option<f64>,
    pub published: &'static str,
}

fn row(quantity: &'static str, unit: &'static str, computed: f64, published: &'static str) -> ReportRow {
    ReportRow {
        quantity,
        unit,
        computed,
        uncertainty: None,
        published,
    }
}

fn fitted(quantity: &'static str, unit: &'static str, (v, e): (f64, f64), published: &'static str) -> ReportRow {
    ReportRow {
        quantity,
        unit,
        computed: v,
        uncertainty: Some(e),
        published,
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Runs the full pipeline with `seed` feeding every stochastic stage.
pub fn reproduce(seed: u64) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let sr = Species::sr88();

    let two = spacings(&equilibrium_positions(&sr, SECULAR_KHZ, 2)?)?[0];
    let three = spacings(&equilibrium_positions(&sr, SECULAR_KHZ, 3)?)?[0];
    rows.push(row("ion_spacing_2", "um", two, "4.8"));
    rows.push(row("ion_spacing_3", "um", three, "4.1"));

    let reference = SGeometryParams::reference();
    let m300 = evaluate(&reference, 300.0)?;
    let m500 = evaluate(&reference, 500.0)?;
    rows.push(row("gradient_300ma", "g_per_mm", m300.gradient, "14"));
    rows.push(row("gradient_500ma", "g_per_mm", m500.gradient, "23"));
    rows.push(row("residual_field_500ma", "mg", m500.residual, "order 10"));
    rows.push(row("power_500ma_0.2ohm", "mw", power_dissipated(500.0, 0.2)?, "50"));

    rows.push(row("splitting_2_ions_23gpmm", "khz", splitting(two, 23.0)?, "310(2)"));
    rows.push(row("splitting_3_ions_23gpmm", "khz", splitting(three, 23.0)?, "266(1)"));
    rows.push(row("splitting_2_ions_14gpmm", "khz", splitting(two, 14.0)?, "190"));
    rows.push(row("required_gradient_5um_100khz", "g_per_mm", required_gradient(5.0, 100.0, 1.0)?, "7.2"));

    let c34 = crosstalk_at_pi(34.0, splitting(two, 14.0)?)?;
    let c35 = crosstalk_at_pi(35.0, 190.0)?;
    rows.push(row("crosstalk_34khz_instantaneous", "percent", 100.0 * c34.instantaneous, "< 2.8"));
    rows.push(row("crosstalk_35khz_instantaneous", "percent", 100.0 * c35.instantaneous, "2.2(1.0)"));
    rows.push(row("crosstalk_35khz_time_averaged", "percent", 100.0 * c35.time_averaged, "2.2(1.0)"));

    let scan2 = SpectrumModelParams::evenly_split(2, 310.0, 0.9, 9.0, 50.0)?;
    let data2 = simulate_scan(&scan2, &grid(-350.0, 350.0, 2.0), 100, seed)?;
    let fit2 = fit_spectrum(&data2, 2, 50.0, None)?;
    rows.push(fitted("fitted_splitting_2_ions", "khz", fit2.derived["splitting_khz"], "310(2)"));
    let scan3 = SpectrumModelParams::evenly_split(3, 266.0, 0.9, 9.0, 50.0)?;
    let data3 = simulate_scan(&scan3, &grid(-500.0, 500.0, 2.0), 100, seed.wrapping_add(1))?;
    let fit3 = fit_spectrum(&data3, 3, 50.0, None)?;
    rows.push(fitted("fitted_splitting_3_ions", "khz", fit3.derived["splitting_khz"], "266(1)"));

    let flop = FlopParams {
        rabi: 35.0,
        envelope_hwhm: 170.0,
        contrast: 0.97,
        offset: 0.02,
    };
    let flop_data = simulate_flop(&flop, &grid(0.0, 300.0, 3.0), 100, seed.wrapping_add(2))?;
    let flop_fit = fit_flop(&flop_data)?;
    rows.push(fitted("flop_rabi", "khz", flop_fit.value("rabi_khz").expect("named"), "35"));
    rows.push(fitted("flop_envelope_hwhm", "us", flop_fit.value("envelope_hwhm_us").expect("named"), "170"));
    let (c, ce) = flop_fit.value("contrast").expect("named");
    rows.push(fitted("flop_contrast", "percent", (100.0 * c, 100.0 * ce), "97"));

    let mc = MonteCarlo::new(MC_TRAJECTORIES, seed.wrapping_add(3));
    for (label, t2) in [("ramsey_t2_star_0ma", 632.0), ("ramsey_t2_star_300ma", 424.0)] {
        let model = NoiseModel::quasi_static(calibrate_sigma(t2)?)?;
        let delays = grid(0.05 * t2 * 1e-3, 2.0 * t2 * 1e-3, 0.05 * t2 * 1e-3);
        let points: Vec<DecayPoint> = mc
            .ramsey(&model, &delays)?
            .iter()
            .map(|p| DecayPoint {
                time_us: p.time * 1e3,
                contrast: p.contrast,
            })
            .collect();
        let fit = fit_decay(&points, DecayModel::Gaussian)?;
        let published = if t2 == 632.0 { "632(12)" } else { "424(9)" };
        rows.push(fitted(label, "us", fit.value("time_constant_us").expect("named"), published));
    }

    let sigma = calibrate_sigma(632.0)?;
    let totals = grid(1.0, 10.0, 1.0);
    let calibration = MonteCarlo::new(CALIBRATION_TRAJECTORIES, seed.wrapping_add(4));
    let tau = calibrate_correlation_time(sigma, 10.0, 0.5, 1.0, &totals, &calibration, (0.5, 100.0))?;
    let ou = NoiseModel::ornstein_uhlenbeck(sigma, tau)?;
    let echo = mc.echo_series(&ou, 0.5, 1.0, &totals)?;
    rows.push(row("echo_noise_correlation_time", "ms", tau, "-"));
    rows.push(row("echo_t2", "ms", echo_time_constant(&echo)?, "~10"));
    Ok(rows)
}

/// CSV rendering with fixed precision.
pub fn render(rows: &[ReportRow]) -> String {
    let mut out = String::from("quantity,unit,computed,computed_std_error,published\n");
    for r in rows {
        let err = r.uncertainty.map(|e| format!("{e:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:.4},{},{}", r.quantity, r.unit, r.computed, err, r.published);
    }
    out
}
