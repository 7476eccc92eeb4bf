//! Constrained design search for the S-shaped gradient structure.
//!
//! The objective is the addressing gradient `dB_z/dy` at the trap centre,
//! maximised subject to a residual-field cap, a dissipation cap and the
//! minimum process line width. Infeasible designs are penalised by a large
//! constant plus their normalised constraint violation, so the simplex can
//! cross infeasible regions.

mod geometry;
pub mod nelder_mead;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::magnetostatics::{FieldSolver, Point3};
use crate::{Error, Result};

pub use geometry::*;
use nelder_mead::{NelderMeadConfig, Score};

/// Objective offset applied to every infeasible design, G/mm.
pub const INFEASIBLE_PENALTY: f64 = 1.0e4;
/// Half-length of the chain segment over which gradient uniformity is
/// reported, um.
const CHAIN_HALF_SPAN_UM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraints {
    pub residual_max_mg: f64,
    pub power_max_mw: f64,
    pub min_trace_width_um: f64,
    pub sheet_resistance_ohm: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            residual_max_mg: 20.0,
            power_max_mw: 50.0,
            min_trace_width_um: MIN_TRACE_WIDTH_UM,
            sheet_resistance_ohm: DEFAULT_SHEET_RESISTANCE_OHM,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignMetrics {
    /// `dB_z/dy` at the trap centre, G/mm.
    pub gradient: f64,
    /// |path field| at the trap centre, mG.
    pub residual: f64,
    /// Dissipation at the feed current, mW.
    pub power: f64,
    /// Relative spread of `dB_z/dy` over +-5 um along the chain.
    pub gradient_inhomogeneity: f64,
    pub feasible: bool,
    /// Sum of normalised constraint excesses; zero iff feasible.
    pub violation: f64,
}

/// Metrics of `params` at `current_ma` against the default constraints.
pub fn evaluate(params: &SGeometryParams, current_ma: f64) -> Result<DesignMetrics> {
    evaluate_with(params, current_ma, &Constraints::default())
}

pub fn evaluate_with(
    params: &SGeometryParams,
    current_ma: f64,
    constraints: &Constraints,
) -> Result<DesignMetrics> {
    let paths = build_geometry(params, current_ma)?;
    let resistance = effective_resistance(&paths, constraints.sheet_resistance_ohm);
    let solver = FieldSolver::default();
    let centre = params.trap_center();
    let site = solver.site_report(&paths, centre, Vector3::zeros(), resistance)?;

    let along: Vec<f64> = [-CHAIN_HALF_SPAN_UM, CHAIN_HALF_SPAN_UM]
        .iter()
        .map(|dy| solver.sample(&paths, centre + Point3::new(0.0, *dy, 0.0)).map(|s| s.dbz_dy()))
        .collect::<Result<_>>()?;
    let spread = along
        .iter()
        .chain(std::iter::once(&site.dbz_dy))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(*g), hi.max(*g)));
    let gradient_inhomogeneity = if site.dbz_dy != 0.0 {
        (spread.1 - spread.0) / site.dbz_dy.abs()
    } else {
        0.0
    };

    let residual = site.residual_mg();
    let excess = |value: f64, limit: f64| if value > limit { (value - limit) / limit } else { 0.0 };
    let violation = excess(residual, constraints.residual_max_mg)
        + excess(site.power_mw, constraints.power_max_mw)
        + if params.trace_width < constraints.min_trace_width_um {
            (constraints.min_trace_width_um - params.trace_width) / constraints.min_trace_width_um
        } else {
            0.0
        };
    let feasible = residual <= constraints.residual_max_mg
        && site.power_mw <= constraints.power_max_mw
        && params.trace_width >= constraints.min_trace_width_um;
    Ok(DesignMetrics {
        gradient: site.dbz_dy,
        residual,
        power: site.power_mw,
        gradient_inhomogeneity,
        feasible,
        violation,
    })
}

/// Inclusive bounds for the continuous design parameters. `n_s_turns` and
/// `trap_height` are taken from the starting design and held fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub s_leg_length: (f64, f64),
    pub s_leg_pitch: (f64, f64),
    pub trace_width: (f64, f64),
    pub return_path_offset: (f64, f64),
}

pub const PARAM_NAMES: [&str; 4] = ["s_leg_length", "s_leg_pitch", "trace_width", "return_path_offset"];

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            s_leg_length: (800.0, 3000.0),
            s_leg_pitch: (20.0, 120.0),
            trace_width: (10.0, 30.0),
            return_path_offset: (70.0, 200.0),
        }
    }
}

impl ParamBounds {
    fn as_array(&self) -> [(f64, f64); 4] {
        [self.s_leg_length, self.s_leg_pitch, self.trace_width, self.return_path_offset]
    }

    fn slot(&mut self, name: &str) -> Option<&mut (f64, f64)> {
        match name {
            "s_leg_length" => Some(&mut self.s_leg_length),
            "s_leg_pitch" => Some(&mut self.s_leg_pitch),
            "trace_width" => Some(&mut self.trace_width),
            "return_path_offset" => Some(&mut self.return_path_offset),
            _ => None,
        }
    }

    pub fn contains(&self, p: &SGeometryParams) -> bool {
        self.as_array()
            .iter()
            .zip(to_vector(p))
            .all(|((lo, hi), v)| v >= *lo && v <= *hi)
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in PARAM_NAMES.iter().zip(self.as_array()) {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::domain(format!("empty bounds for {name}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn to_vector(p: &SGeometryParams) -> [f64; 4] {
    [p.s_leg_length, p.s_leg_pitch, p.trace_width, p.return_path_offset]
}

fn from_vector(x: &[f64], template: &SGeometryParams) -> SGeometryParams {
    SGeometryParams {
        s_leg_length: x[0],
        s_leg_pitch: x[1],
        trace_width: x[2],
        return_path_offset: x[3],
        ..*template
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeSpec {
    pub current_ma: f64,
    pub bounds: ParamBounds,
    pub constraints: Constraints,
    /// Maximum number of design evaluations.
    pub budget: usize,
    pub seed: u64,
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            current_ma: 300.0,
            bounds: ParamBounds::default(),
            constraints: Constraints::default(),
            budget: 500,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub params: SGeometryParams,
    /// `None` when the layout could not be built (overlapping traces).
    pub metrics: Option<DesignMetrics>,
    /// Minimised objective; `-gradient` for feasible designs.
    pub objective: f64,
    /// Best objective seen so far.
    pub best_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub best: SGeometryParams,
    pub metrics: DesignMetrics,
    pub trace: Vec<TraceEntry>,
}

fn score(metrics: &Option<DesignMetrics>) -> Score {
    match metrics {
        Some(m) if m.feasible => Score([-m.gradient, m.power, m.residual]),
        Some(m) => Score([INFEASIBLE_PENALTY * (1.0 + m.violation) - m.gradient, m.power, m.residual]),
        None => Score([f64::MAX, f64::MAX, f64::MAX]),
    }
}

/// Nelder-Mead search for the largest feasible gradient.
pub fn optimize(spec: &OptimizeSpec, init: &SGeometryParams) -> Result<OptimizeOutcome> {
    if spec.budget == 0 {
        return Err(Error::domain("budget must be at least 1"));
    }
    spec.bounds.validate()?;
    if !spec.bounds.contains(init) {
        return Err(Error::domain(format!("initial design {init:?} lies outside the bounds")));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = spec.bounds.as_array().iter().copied().unzip();
    let objective = |x: &[f64]| {
        let p = from_vector(x, init);
        score(&evaluate_with(&p, spec.current_ma, &spec.constraints).ok())
    };
    let log = nelder_mead::minimize(
        &objective,
        &to_vector(init),
        &lo,
        &hi,
        spec.budget,
        spec.seed,
        NelderMeadConfig::default(),
    );

    let mut trace = Vec::with_capacity(log.len());
    let mut best: Option<(Score, SGeometryParams, Option<DesignMetrics>)> = None;
    for (i, e) in log.iter().enumerate() {
        let params = from_vector(&e.x, init);
        // re-evaluated so the trace carries full metrics; the objective is pure
        let metrics = evaluate_with(&params, spec.current_ma, &spec.constraints).ok();
        if best.as_ref().is_none_or(|(s, _, _)| e.score.better_than(s)) {
            best = Some((e.score, params, metrics));
        }
        trace.push(TraceEntry {
            evaluation: i + 1,
            params,
            metrics,
            objective: e.score.0[0],
            best_objective: best.as_ref().map(|b| b.0 .0[0]).unwrap_or(f64::MAX),
        });
    }
    let (_, best_params, best_metrics) = best.expect("at least one evaluation");
    match best_metrics {
        Some(m) if m.feasible => Ok(OptimizeOutcome {
            best: best_params,
            metrics: m,
            trace,
        }),
        other => Err(Error::Infeasible {
            evaluations: trace.len(),
            violation: other.map(|m| m.violation).unwrap_or(f64::INFINITY),
            best: to_vector(&best_params).to_vec(),
        }),
    }
}

/// Parses an optimizer bounds file:
///
/// ```text
/// # comment
/// bound <param> <lo> <hi>
/// start <param> <value>
/// n_s_turns <n>
/// ```
///
/// Parameters not mentioned keep the values from `bounds` / `start`.
pub fn parse_bounds(text: &str, bounds: &mut ParamBounds, start: &mut SGeometryParams) -> Result<()> {
    let err = |line: usize, message: String| Error::Parse { line, message };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let t: Vec<&str> = content.split_whitespace().collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("invalid number '{s}'")))
        };
        match (t[0], t.len()) {
            ("bound", 4) => {
                let (lo, hi) = (num(t[2])?, num(t[3])?);
                if lo > hi {
                    return Err(err(line, format!("lower bound {lo} exceeds upper bound {hi}")));
                }
                *bounds
                    .slot(t[1])
                    .ok_or_else(|| err(line, format!("unknown parameter '{}'", t[1])))? = (lo, hi);
            }
            ("start", 3) => {
                let v = num(t[2])?;
                match t[1] {
                    "s_leg_length" => start.s_leg_length = v,
                    "s_leg_pitch" => start.s_leg_pitch = v,
                    "trace_width" => start.trace_width = v,
                    "return_path_offset" => start.return_path_offset = v,
                    "trap_height" => start.trap_height = v,
                    other => return Err(err(line, format!("unknown parameter '{other}'"))),
                }
            }
            ("n_s_turns", 2) => {
                start.n_s_turns = t[1]
                    .parse()
                    .map_err(|_| err(line, format!("invalid turn count '{}'", t[1])))?;
            }
            _ => return Err(err(line, format!("unrecognised line '{content}'"))),
        }
    }
    Ok(())
}

pub fn read_bounds(path: impl AsRef<Path>, bounds: &mut ParamBounds, start: &mut SGeometryParams) -> Result<()> {
    parse_bounds(&std::fs::read_to_string(path)?, bounds, start)
}

/// Evaluation trace as CSV.
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from(
        "evaluation,s_leg_length_um,s_leg_pitch_um,trace_width_um,return_path_offset_um,\
         gradient_g_per_mm,residual_mg,power_mw,feasible,objective,best_objective\n",
    );
    for e in trace {
        let (g, r, p, f) = match &e.metrics {
            Some(m) => (m.gradient, m.residual, m.power, m.feasible),
            None => (f64::NAN, f64::NAN, f64::NAN, false),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.evaluation,
            e.params.s_leg_length,
            e.params.s_leg_pitch,
            e.params.trace_width,
            e.params.return_path_offset,
            g,
            r,
            p,
            f,
            e.objective,
            e.best_objective
        );
    }
    out
}

/// Starting point deliberately away from the reference design: shorter
/// legs, narrower traces, return runs pulled in and the pitch well off the
/// field null.
pub const fn detuned_start() -> SGeometryParams {
    SGeometryParams {
        s_leg_length: 1200.0,
        s_leg_pitch: 50.0,
        trace_width: 12.0,
        return_path_offset: 85.0,
        ..SGeometryParams::reference()
    }
}
