//! Magnetostatics of piecewise-linear current paths.
//!
//! Trap coordinates: `y` runs along the ion chain, `z` is the quantization
//! axis (normal to the chip, along the external bias) and `x` completes the
//! right-handed frame. Lengths are micrometres, currents milliamps, fields
//! gauss and gradients gauss/mm.

mod geometry_file;
mod segment;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::{Error, Result};

pub use geometry_file::{parse_geometry, read_geometry, write_geometry};
pub use nalgebra::Vector3;

/// Largest |current| accepted by [`CurrentPath::new`], mA.
pub const DEFAULT_MAX_CURRENT_MA: f64 = 500.0;
/// Minimum distance between a field point and a conductor, um.
pub const DEFAULT_EPSILON_UM: f64 = 0.1;
/// Height of the trap centre above the chip surface, um.
pub const DEFAULT_TRAP_HEIGHT_UM: f64 = 100.0;

/// A point in trap coordinates, micrometres.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Trap centre `(0, 0, DEFAULT_TRAP_HEIGHT_UM)`.
    pub const fn trap_center() -> Self {
        Self::new(0.0, 0.0, DEFAULT_TRAP_HEIGHT_UM)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// Mirror image under `y -> -y`.
    pub fn mirror_y(self) -> Self {
        Self::new(self.x, -self.y, self.z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, rhs: f64) -> Point3 {
        Point3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A named polyline carrying a signed current.
///
/// Positive current flows from the first vertex towards the last.
/// `trace_width_um` is only used when the solver subdivides traces into
/// several parallel filaments, and by geometric constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentPath {
    name: String,
    vertices: Vec<Point3>,
    current_ma: f64,
    trace_width_um: f64,
}

impl CurrentPath {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Point3>,
        current_ma: f64,
        trace_width_um: f64,
    ) -> Result<Self> {
        Self::with_current_limit(name, vertices, current_ma, trace_width_um, DEFAULT_MAX_CURRENT_MA)
    }

    pub fn with_current_limit(
        name: impl Into<String>,
        vertices: Vec<Point3>,
        current_ma: f64,
        trace_width_um: f64,
        max_current_ma: f64,
    ) -> Result<Self> {
        let name = name.into();
        if vertices.len() < 2 {
            return Err(Error::Geometry(format!(
                "path '{name}' needs at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("path '{name}' vertex {i} is not finite")));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Geometry(format!(
                "path '{name}' segment {i} has zero length"
            )));
        }
        if !(trace_width_um > 0.0) || !trace_width_um.is_finite() {
            return Err(Error::Geometry(format!(
                "path '{name}' trace width must be positive, got {trace_width_um}"
            )));
        }
        if !current_ma.is_finite() || current_ma.abs() > max_current_ma {
            return Err(Error::Geometry(format!(
                "path '{name}' current {current_ma} mA exceeds the {max_current_ma} mA limit"
            )));
        }
        Ok(Self {
            name,
            vertices,
            current_ma,
            trace_width_um,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn current_ma(&self) -> f64 {
        self.current_ma
    }

    pub fn trace_width_um(&self) -> f64 {
        self.trace_width_um
    }

    /// Consecutive vertex pairs.
    pub fn segments(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    /// Total centreline length, um.
    pub fn length_um(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(&b)).sum()
    }

    /// Copy of this path with its current multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.vertices.clone(),
            self.current_ma * factor,
            self.trace_width_um,
        )
    }

    /// Replaces the path by `k` parallel filaments spread across the trace
    /// width in the chip plane, each carrying `current / k`.
    fn filaments(&self, k: usize) -> Vec<(Vec<Vector3<f64>>, f64)> {
        let pts: Vec<Vector3<f64>> = self.vertices.iter().map(|v| v.to_vector()).collect();
        if k <= 1 {
            return vec![(pts, self.current_ma)];
        }
        let normals: Vec<Vector3<f64>> = pts
            .windows(2)
            .map(|w| {
                let t = w[1] - w[0];
                let n = Vector3::new(-t.y, t.x, 0.0);
                if n.norm() > 1e-12 * t.norm() {
                    n.normalize()
                } else {
                    Vector3::x()
                }
            })
            .collect();
        // miter offsets keep the filaments parallel to the centreline
        let miters: Vec<Vector3<f64>> = (0..pts.len())
            .map(|i| {
                if i == 0 {
                    normals[0]
                } else if i == pts.len() - 1 {
                    normals[i - 1]
                } else {
                    let m = normals[i - 1] + normals[i];
                    if m.norm() < 1e-9 {
                        normals[i]
                    } else {
                        let m = m.normalize();
                        m / m.dot(&normals[i])
                    }
                }
            })
            .collect();
        (0..k)
            .map(|f| {
                let offset = ((f as f64 + 0.5) / k as f64 - 0.5) * self.trace_width_um;
                let shifted = pts
                    .iter()
                    .zip(&miters)
                    .map(|(p, m)| p + m * offset)
                    .collect();
                (shifted, self.current_ma / k as f64)
            })
            .collect()
    }
}

/// Field and gradient tensor at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    /// Gauss.
    pub b: Vector3<f64>,
    /// Gauss/mm, `grad[(i, j)] = dB_i / dx_j`.
    pub grad: Matrix3<f64>,
}

impl FieldSample {
    pub fn divergence(&self) -> f64 {
        self.grad.trace()
    }

    /// Largest entry of `|grad - grad^T|`.
    pub fn asymmetry(&self) -> f64 {
        (self.grad - self.grad.transpose()).amax()
    }

    /// The addressing gradient `dB_z/dy`.
    pub fn dbz_dy(&self) -> f64 {
        self.grad[(2, 1)]
    }
}

/// Summary of the field environment at the trap centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteReport {
    /// Path field plus external bias, gauss.
    pub b_total: Vector3<f64>,
    /// Path field alone, gauss.
    pub residual_b: Vector3<f64>,
    /// `dB_z/dy` of the path field, gauss/mm.
    pub dbz_dy: f64,
    /// Resistive dissipation at the feed current, mW.
    pub power_mw: f64,
}

impl SiteReport {
    /// Magnitude of the residual path field in milligauss.
    pub fn residual_mg(&self) -> f64 {
        self.residual_b.norm() * 1.0e3
    }
}

/// Biot-Savart evaluator for collections of straight-segment paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSolver {
    /// Points closer than this to any conductor are rejected, um.
    pub epsilon_um: f64,
    /// Number of parallel filaments each trace is split into across its width.
    pub filaments_per_trace: usize,
}

impl Default for FieldSolver {
    fn default() -> Self {
        Self {
            epsilon_um: DEFAULT_EPSILON_UM,
            filaments_per_trace: 1,
        }
    }
}

impl FieldSolver {
    pub fn with_filaments(filaments_per_trace: usize) -> Self {
        Self {
            filaments_per_trace: filaments_per_trace.max(1),
            ..Self::default()
        }
    }

    fn check_clearance(&self, name: &str, index: usize, a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> Result<()> {
        let d = segment::distance_to_segment(a, b, p);
        if d <= self.epsilon_um {
            return Err(Error::Singularity {
                path: name.to_string(),
                segment: index,
                distance_um: d,
                epsilon_um: self.epsilon_um,
            });
        }
        Ok(())
    }

    /// Field of a single segment carrying `current_ma` from `a` to `b`.
    pub fn segment_field(&self, a: Point3, b: Point3, current_ma: f64, p: Point3) -> Result<Vector3<f64>> {
        if a == b {
            return Err(Error::Geometry("segment endpoints coincide".into()));
        }
        let (a, b, p) = (a.to_vector(), b.to_vector(), p.to_vector());
        self.check_clearance("<segment>", 0, &a, &b, &p)?;
        Ok(segment::field(&a, &b, current_ma, &p))
    }

    fn accumulate<T, F>(&self, paths: &[CurrentPath], p: Point3, zero: T, mut f: F) -> Result<T>
    where
        F: FnMut(&mut T, &Vector3<f64>, &Vector3<f64>, f64, &Vector3<f64>),
    {
        let pv = p.to_vector();
        let mut acc = zero;
        for path in paths {
            for (pts, current) in path.filaments(self.filaments_per_trace) {
                for (i, w) in pts.windows(2).enumerate() {
                    self.check_clearance(&path.name, i, &w[0], &w[1], &pv)?;
                    if current != 0.0 {
                        f(&mut acc, &w[0], &w[1], current, &pv);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Superposed field of every segment of every path, gauss.
    pub fn field_at(&self, paths: &[CurrentPath], p: Point3) -> Result<Vector3<f64>> {
        self.accumulate(paths, p, Vector3::zeros(), |acc, a, b, i, p| {
            *acc += segment::field(a, b, i, p)
        })
    }

    /// Field gradient tensor, gauss/mm.
    pub fn gradient_at(&self, paths: &[CurrentPath], p: Point3) -> Result<Matrix3<f64>> {
        Ok(self.sample(paths, p)?.grad)
    }

    pub fn sample(&self, paths: &[CurrentPath], p: Point3) -> Result<FieldSample> {
        let (b, grad) = self.accumulate(
            paths,
            p,
            (Vector3::zeros(), Matrix3::zeros()),
            |acc, a, b, i, p| {
                let (fb, fg) = segment::field_and_gradient(a, b, i, p);
                acc.0 += fb;
                acc.1 += fg;
            },
        )?;
        Ok(FieldSample { b, grad })
    }

    /// Samples many points in parallel; output order follows `points`.
    pub fn sample_many(&self, paths: &[CurrentPath], points: &[Point3]) -> Result<Vec<FieldSample>> {
        points.par_iter().map(|p| self.sample(paths, *p)).collect()
    }

    /// `d|B_path + bias|/dy` in gauss/mm, the gradient of the total field
    /// magnitude along the chain.
    pub fn magnitude_gradient_y(&self, paths: &[CurrentPath], p: Point3, bias: Vector3<f64>) -> Result<f64> {
        let s = self.sample(paths, p)?;
        let total = s.b + bias;
        let norm = total.norm();
        if norm == 0.0 {
            return Err(Error::domain("total field vanishes; |B| is not differentiable"));
        }
        Ok(total.dot(&s.grad.column(1)) / norm)
    }

    /// Field, addressing gradient and dissipation at the trap centre.
    ///
    /// Power is evaluated at the largest |current| among `paths` (the feed
    /// current of a series circuit) through `resistance_ohm`.
    pub fn site_report(
        &self,
        paths: &[CurrentPath],
        trap_center: Point3,
        bias: Vector3<f64>,
        resistance_ohm: f64,
    ) -> Result<SiteReport> {
        let s = self.sample(paths, trap_center)?;
        let feed = paths.iter().map(|p| p.current_ma.abs()).fold(0.0, f64::max);
        Ok(SiteReport {
            b_total: s.b + bias,
            residual_b: s.b,
            dbz_dy: s.dbz_dy(),
            power_mw: power_dissipated(feed, resistance_ohm)?,
        })
    }
}

/// Field of one segment with the default solver settings, gauss.
pub fn segment_field(a: Point3, b: Point3, current_ma: f64, p: Point3) -> Result<Vector3<f64>> {
    FieldSolver::default().segment_field(a, b, current_ma, p)
}

pub fn field_at(paths: &[CurrentPath], p: Point3) -> Result<Vector3<f64>> {
    FieldSolver::default().field_at(paths, p)
}

pub fn gradient_at(paths: &[CurrentPath], p: Point3) -> Result<Matrix3<f64>> {
    FieldSolver::default().gradient_at(paths, p)
}

pub fn site_report(
    paths: &[CurrentPath],
    trap_center: Point3,
    bias: Vector3<f64>,
    resistance_ohm: f64,
) -> Result<SiteReport> {
    FieldSolver::default().site_report(paths, trap_center, bias, resistance_ohm)
}

/// Ohmic dissipation `I^2 R` in milliwatts for a current in milliamps.
pub fn power_dissipated(current_ma: f64, resistance_ohm: f64) -> Result<f64> {
    if !(resistance_ohm >= 0.0) {
        return Err(Error::domain(format!(
            "resistance must be non-negative, got {resistance_ohm} ohm"
        )));
    }
    Ok(current_ma * current_ma * resistance_ohm * 1.0e-3)
}
