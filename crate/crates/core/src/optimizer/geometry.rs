//! Parameterised S-shaped gradient structure.
//!
//! The feed current enters at the corner node `(leg/2, -return_path_offset)`
//! and crosses under the trap centre along an S-shaped meander of `2n + 1` transverse legs
//! stacked along the chain axis `y`. At the far end it splits into two return
//! branches carrying half the current each: they run along `x` at
//! `y = +return_path_offset`, down the sides at `x = +-(leg/2 + clearance)`,
//! and back along `x` at `y = -return_path_offset` to the feed node.
//!
//! The whole circuit maps onto itself, with reversed current, under a 180°
//! rotation about the vertical axis through the trap centre. That pins the
//! path field's `B_z` at the centre to zero while leaving `dB_z/dy` free.
//! The two horizontal components are set by the dimensions and are what the
//! residual-field constraint controls.

use nalgebra::Vector3;

use crate::magnetostatics::{CurrentPath, FieldSolver, Point3, DEFAULT_TRAP_HEIGHT_UM};
use crate::{Error, Result};

/// Narrowest trace the process can make, um.
pub const MIN_TRACE_WIDTH_UM: f64 = 10.0;
/// Centre-to-centre distance between the leg ends and the side returns, in
/// trace widths.
pub const RETURN_CLEARANCE_WIDTHS: f64 = 3.0;
/// Sheet resistance of the plated gold at 4 K, ohm per square.
pub const DEFAULT_SHEET_RESISTANCE_OHM: f64 = 4.0e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SGeometryParams {
    /// Length of each transverse leg along `x`, um.
    pub s_leg_length: f64,
    /// Axial spacing between neighbouring legs, um.
    pub s_leg_pitch: f64,
    /// Trace width, um.
    pub trace_width: f64,
    /// Axial distance from the trap centre to the transverse return runs, um.
    pub return_path_offset: f64,
    /// Number of S units; the meander has `2 n + 1` legs. Zero gives a
    /// straight feed along the trap axis.
    pub n_s_turns: usize,
    /// Height of the trap centre above the chip, um.
    pub trap_height: f64,
}

impl SGeometryParams {
    /// Reference reconstruction of the fabricated structure.
    pub const fn reference() -> Self {
        Self {
            s_leg_length: 1800.0,
            s_leg_pitch: 56.5616,
            trace_width: 16.0,
            return_path_offset: 97.0,
            n_s_turns: 1,
            trap_height: DEFAULT_TRAP_HEIGHT_UM,
        }
    }

    pub fn trap_center(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.trap_height)
    }

    /// `x` position of the side returns, um.
    pub fn return_x(&self) -> f64 {
        0.5 * self.s_leg_length + RETURN_CLEARANCE_WIDTHS * self.trace_width
    }

    /// Checks positivity and that no two traces overlap. Width below the
    /// process minimum is allowed here; it only makes the design infeasible.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("s_leg_length", self.s_leg_length),
            ("s_leg_pitch", self.s_leg_pitch),
            ("trace_width", self.trace_width),
            ("return_path_offset", self.return_path_offset),
            ("trap_height", self.trap_height),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Geometry(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let w = self.trace_width;
        if self.n_s_turns > 0 {
            if self.s_leg_pitch <= w {
                return Err(Error::Geometry(format!(
                    "self-intersecting layout: leg pitch {} um does not clear trace width {w} um",
                    self.s_leg_pitch
                )));
            }
            if self.s_leg_length <= 2.0 * w {
                return Err(Error::Geometry(format!(
                    "self-intersecting layout: leg length {} um is below two trace widths",
                    self.s_leg_length
                )));
            }
        }
        let outer_leg = self.n_s_turns as f64 * self.s_leg_pitch;
        if self.return_path_offset - outer_leg <= w {
            return Err(Error::Geometry(format!(
                "self-intersecting layout: return runs at {} um overlap the outer leg at {outer_leg} um",
                self.return_path_offset
            )));
        }
        Ok(())
    }
}

/// Builds the S path (carrying `current_ma`) and the two half-current return
/// branches.
pub fn build_geometry(params: &SGeometryParams, current_ma: f64) -> Result<Vec<CurrentPath>> {
    params.validate()?;
    let w = params.trace_width;
    let l = params.return_path_offset;
    let xr = params.return_x();

    let mut s = Vec::new();
    let (bottom, top) = if params.n_s_turns == 0 {
        let bottom = Point3::new(0.0, -l, 0.0);
        let top = Point3::new(0.0, l, 0.0);
        s.push(bottom);
        s.push(top);
        (bottom, top)
    } else {
        let a = 0.5 * params.s_leg_length;
        let n = params.n_s_turns as i64;
        let bottom = Point3::new(a, -l, 0.0);
        let top = Point3::new(-a, l, 0.0);
        s.push(bottom);
        for k in 0..(2 * n + 1) {
            let y = (k - n) as f64 * params.s_leg_pitch;
            let x0 = if k % 2 == 0 { a } else { -a };
            s.push(Point3::new(x0, y, 0.0));
            s.push(Point3::new(-x0, y, 0.0));
        }
        s.push(top);
        (bottom, top)
    };

    let east = vec![
        top,
        Point3::new(xr, l, 0.0),
        Point3::new(xr, -l, 0.0),
        bottom,
    ];
    let west = vec![
        top,
        Point3::new(-xr, l, 0.0),
        Point3::new(-xr, -l, 0.0),
        bottom,
    ];
    Ok(vec![
        CurrentPath::new("s_path", s, current_ma, w)?,
        CurrentPath::new("return_east", east, 0.5 * current_ma, w)?,
        CurrentPath::new("return_west", west, 0.5 * current_ma, w)?,
    ])
}

/// `R` such that the total dissipation is `I_feed^2 R`, from each path's
/// length in squares weighted by its share of the feed current.
pub fn effective_resistance(paths: &[CurrentPath], sheet_resistance_ohm: f64) -> f64 {
    let feed = paths.iter().map(|p| p.current_ma().abs()).fold(0.0, f64::max);
    if feed == 0.0 {
        // geometry-only resistance with every branch counted at full current
        return paths
            .iter()
            .map(|p| sheet_resistance_ohm * p.length_um() / p.trace_width_um())
            .sum();
    }
    paths
        .iter()
        .map(|p| {
            let share = p.current_ma() / feed;
            share * share * sheet_resistance_ohm * p.length_um() / p.trace_width_um()
        })
        .sum()
}

/// Path field at the trap centre per unit current (gauss per mA); used for
/// symmetry checks that must hold for any current.
pub fn center_field_per_ma(params: &SGeometryParams) -> Result<Vector3<f64>> {
    let paths = build_geometry(params, 100.0)?;
    Ok(FieldSolver::default().field_at(&paths, params.trap_center())? / 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid_and_closed() {
        let p = SGeometryParams::reference();
        let paths = build_geometry(&p, 300.0).unwrap();
        assert_eq!(paths.len(), 3);
        let s = &paths[0];
        // legs alternate direction and are stacked symmetrically about y = 0
        assert_eq!(s.vertices().len(), 2 + 2 * 3);
        let first = s.vertices()[0];
        let last = *s.vertices().last().unwrap();
        assert_eq!(first, last * -1.0);
        for r in &paths[1..] {
            assert_eq!(r.vertices()[0], last);
            assert_eq!(*r.vertices().last().unwrap(), first);
            assert_eq!(r.current_ma(), 150.0);
        }
    }

    #[test]
    fn rotation_symmetry_of_vertices() {
        let p = SGeometryParams {
            n_s_turns: 2,
            return_path_offset: 160.0,
            ..SGeometryParams::reference()
        };
        let paths = build_geometry(&p, 100.0).unwrap();
        let rot = |v: &Point3| Point3::new(-v.x, -v.y, v.z);
        let s: Vec<Point3> = paths[0].vertices().iter().map(rot).rev().collect();
        assert_eq!(s, paths[0].vertices());
        let east: Vec<Point3> = paths[1].vertices().iter().map(rot).rev().collect();
        assert_eq!(east, paths[2].vertices());
    }

    #[test]
    fn overlapping_layouts_are_rejected() {
        let base = SGeometryParams::reference();
        for bad in [
            SGeometryParams { s_leg_pitch: 10.0, ..base },
            SGeometryParams { return_path_offset: 60.0, ..base },
            SGeometryParams { s_leg_length: 20.0, ..base },
            SGeometryParams { trace_width: -1.0, ..base },
        ] {
            assert!(matches!(build_geometry(&bad, 100.0), Err(Error::Geometry(_))), "{bad:?}");
        }
    }

    #[test]
    fn straight_feed_has_no_gradient() {
        let p = SGeometryParams {
            n_s_turns: 0,
            ..SGeometryParams::reference()
        };
        let paths = build_geometry(&p, 300.0).unwrap();
        let s = FieldSolver::default().sample(&paths, p.trap_center()).unwrap();
        assert!(s.dbz_dy().abs() < 1e-9, "{}", s.dbz_dy());
    }

    #[test]
    fn resistance_weights_branch_currents() {
        let p = SGeometryParams::reference();
        let paths = build_geometry(&p, 300.0).unwrap();
        let r = effective_resistance(&paths, 1.0);
        let manual = paths[0].length_um() / p.trace_width
            + 2.0 * 0.25 * paths[1].length_um() / p.trace_width;
        assert!((r - manual).abs() < 1e-9 * manual);
    }
}
