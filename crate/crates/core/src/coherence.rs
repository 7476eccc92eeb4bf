//! Ramsey and spin-echo Monte Carlo under detuning noise.
//!
//! Each trajectory draws a detuning record `df(t)` (kHz) on a uniform grid,
//! accumulates the phase `2 pi * integral s(t) df(t) dt` with `s` flipping
//! sign at every pi pulse, and contributes `exp(i phase)` to the ensemble
//! average. Pulses are ideal and instantaneous; times are in ms.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::spectra::{fit_decay, DecayModel, DecayPoint};
use crate::{rng, Error, Result};

/// Default integration step, ms.
pub const DEFAULT_DT_MS: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    /// One Gaussian detuning per shot.
    QuasiStatic,
    /// Stationary Gaussian process with exponential autocorrelation.
    OrnsteinUhlenbeck {
        /// ms.
        correlation_time: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Detuning standard deviation, kHz.
    pub sigma: f64,
}

impl NoiseModel {
    pub fn quasi_static(sigma_khz: f64) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::QuasiStatic,
            sigma: sigma_khz,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn ornstein_uhlenbeck(sigma_khz: f64, correlation_time_ms: f64) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::OrnsteinUhlenbeck {
                correlation_time: correlation_time_ms,
            },
            sigma: sigma_khz,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if let NoiseKind::OrnsteinUhlenbeck { correlation_time } = self.kind {
            if !(correlation_time > 0.0) || !correlation_time.is_finite() {
                return Err(Error::domain(format!(
                    "correlation time must be positive, got {correlation_time} ms"
                )));
            }
        }
        Ok(())
    }

    fn check_step(&self, dt_ms: f64) -> Result<()> {
        if !(dt_ms > 0.0) || !dt_ms.is_finite() {
            return Err(Error::domain(format!("time step must be positive, got {dt_ms} ms")));
        }
        if let NoiseKind::OrnsteinUhlenbeck { correlation_time } = self.kind {
            if dt_ms > correlation_time / 10.0 {
                return Err(Error::domain(format!(
                    "time step {dt_ms} ms exceeds a tenth of the correlation time {correlation_time} ms"
                )));
            }
        }
        Ok(())
    }

    /// Fills `out` with samples at `t = k dt`.
    fn fill<R: Rng>(&self, rng: &mut R, dt_ms: f64, out: &mut [f64]) {
        let mut x = self.sigma * rng.sample::<f64, _>(StandardNormal);
        match self.kind {
            NoiseKind::QuasiStatic => out.fill(x),
            NoiseKind::OrnsteinUhlenbeck { correlation_time } => {
                let a = (-dt_ms / correlation_time).exp();
                let kick = self.sigma * (1.0 - a * a).sqrt();
                for v in out.iter_mut() {
                    *v = x;
                    x = a * x + kick * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// One detuning record (kHz) at `t = 0, dt, ..., duration`.
pub fn sample_detuning(model: &NoiseModel, duration_ms: f64, dt_ms: f64, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    model.check_step(dt_ms)?;
    if !(duration_ms >= 0.0) {
        return Err(Error::domain("duration must be non-negative"));
    }
    let n = (duration_ms / dt_ms).ceil() as usize + 1;
    let mut out = vec![0.0; n];
    model.fill(&mut rng::stream(seed, 0), dt_ms, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSchedule {
    /// ms, strictly increasing, inside `(0, total_time)`.
    pub pi_pulse_times: Vec<f64>,
    /// ms.
    pub total_time: f64,
}

impl PulseSchedule {
    pub fn new(pi_pulse_times: Vec<f64>, total_time: f64) -> Result<Self> {
        if !(total_time > 0.0) || !total_time.is_finite() {
            return Err(Error::domain(format!("total time must be positive, got {total_time} ms")));
        }
        if pi_pulse_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("pulse times must be strictly increasing"));
        }
        if pi_pulse_times.iter().any(|t| !(*t > 0.0 && *t < total_time)) {
            return Err(Error::domain("pulse times must lie strictly inside the sequence"));
        }
        Ok(Self {
            pi_pulse_times,
            total_time,
        })
    }

    /// Free evolution without refocusing.
    pub fn ramsey(total_time: f64) -> Result<Self> {
        Self::new(Vec::new(), total_time)
    }

    /// One pi pulse at the midpoint.
    pub fn single_echo(total_time: f64) -> Result<Self> {
        Self::new(vec![0.5 * total_time], total_time)
    }

    /// Pulses at `first`, `first + period`, ... strictly before `total_time`.
    pub fn periodic(first: f64, period: f64, total_time: f64) -> Result<Self> {
        if !(first > 0.0) || !(period > 0.0) {
            return Err(Error::domain("pulse start and period must be positive"));
        }
        let times = (0..)
            .map(|k| first + k as f64 * period)
            .take_while(|t| *t < total_time)
            .collect();
        Self::new(times, total_time)
    }

    /// Parses `<first>ms+<period>ms` (units optional) into a periodic
    /// schedule of length `total_time`.
    pub fn parse_periodic(text: &str, total_time: f64) -> Result<Self> {
        let bad = || Error::domain(format!("schedule '{text}' is not of the form <first>ms+<period>ms"));
        let (a, b) = text.split_once('+').ok_or_else(bad)?;
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .trim_end_matches("ms")
                .trim()
                .parse::<f64>()
                .map_err(|_| bad())
        };
        Self::periodic(num(a)?, num(b)?, total_time)
    }
}

/// `integral_0^T s(t) x(t) dt` for the piecewise-linear interpolant of
/// samples `x` at spacing `dt`, with `s` flipping at each pulse time.
fn signed_integral(x: &[f64], dt: f64, pulses: &[f64], total: f64) -> f64 {
    let at = |t: f64| -> f64 {
        let k = ((t / dt) as usize).min(x.len() - 2);
        let f = t / dt - k as f64;
        x[k] + f * (x[k + 1] - x[k])
    };
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut t = 0.0;
    let mut next = pulses.iter().copied().chain(std::iter::once(total)).peekable();
    let mut k = 0usize;
    while t < total {
        let grid_next = (k + 1) as f64 * dt;
        let stop = *next.peek().expect("total is last");
        let end = grid_next.min(stop);
        if end > t {
            sum += sign * (end - t) * 0.5 * (at(t) + at(end));
        }
        t = end;
        if end == stop {
            next.next();
            sign = -sign;
        }
        if end == grid_next {
            k += 1;
        }
    }
    sum
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastPoint {
    /// ms.
    pub time: f64,
    pub contrast: f64,
    /// Monte Carlo standard error of `contrast`.
    pub std_error: f64,
}

/// Monte Carlo settings shared by all sequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarlo {
    pub trajectories: usize,
    pub seed: u64,
    /// ms.
    pub dt: f64,
    /// Optional upper-state lifetime, ms; multiplies the contrast by
    /// `exp(-T / lifetime)`.
    pub lifetime: Option<f64>,
}

impl MonteCarlo {
    pub fn new(trajectories: usize, seed: u64) -> Self {
        Self {
            trajectories,
            seed,
            dt: DEFAULT_DT_MS,
            lifetime: None,
        }
    }

    /// Contrast at the end of each schedule, all read from the same noise
    /// records.
    pub fn run(&self, model: &NoiseModel, schedules: &[PulseSchedule]) -> Result<Vec<ContrastPoint>> {
        model.validate()?;
        model.check_step(self.dt)?;
        if self.trajectories < 100 {
            return Err(Error::domain(format!(
                "at least 100 trajectories are required, got {}",
                self.trajectories
            )));
        }
        let t_max = schedules.iter().map(|s| s.total_time).fold(0.0, f64::max);
        let n = (t_max / self.dt).ceil() as usize + 2;
        let phasors: Vec<Vec<(f64, f64)>> = (0..self.trajectories)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, i| {
                    model.fill(&mut rng::stream(self.seed, i as u64), self.dt, buf);
                    schedules
                        .iter()
                        .map(|s| {
                            let phase = 2.0 * PI * signed_integral(buf, self.dt, &s.pi_pulse_times, s.total_time);
                            (phase.cos(), phase.sin())
                        })
                        .collect()
                },
            )
            .collect();

        let m = self.trajectories as f64;
        Ok(schedules
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let (re, im) = phasors
                    .iter()
                    .fold((0.0, 0.0), |(a, b), p| (a + p[j].0, b + p[j].1));
                let (re, im) = (re / m, im / m);
                let c = re.hypot(im);
                // spread of the projections onto the mean direction
                let (ux, uy) = if c > 0.0 { (re / c, im / c) } else { (1.0, 0.0) };
                let var = phasors
                    .iter()
                    .map(|p| (p[j].0 * ux + p[j].1 * uy - c).powi(2))
                    .sum::<f64>()
                    / (m - 1.0);
                let decay = self.lifetime.map_or(1.0, |l| (-s.total_time / l).exp());
                ContrastPoint {
                    time: s.total_time,
                    contrast: (c * decay).min(1.0),
                    std_error: (var / m).sqrt() * decay,
                }
            })
            .collect())
    }

    pub fn ramsey(&self, model: &NoiseModel, delays_ms: &[f64]) -> Result<Vec<ContrastPoint>> {
        let schedules = delays_ms
            .iter()
            .map(|d| PulseSchedule::ramsey(*d))
            .collect::<Result<Vec<_>>>()?;
        self.run(model, &schedules)
    }

    /// Echo contrast at each `total_time` of a periodic schedule
    /// `first, first + period, ...`.
    pub fn echo_series(&self, model: &NoiseModel, first: f64, period: f64, totals_ms: &[f64]) -> Result<Vec<ContrastPoint>> {
        let schedules = totals_ms
            .iter()
            .map(|t| PulseSchedule::periodic(first, period, *t))
            .collect::<Result<Vec<_>>>()?;
        self.run(model, &schedules)
    }
}

/// Ramsey contrast `|<exp(i phase)>|` at each delay (ms).
pub fn ramsey_contrast(model: &NoiseModel, delays_ms: &[f64], trajectories: usize, seed: u64) -> Result<Vec<ContrastPoint>> {
    MonteCarlo::new(trajectories, seed).ramsey(model, delays_ms)
}

/// Contrast at the end of `schedule`.
pub fn echo_contrast(model: &NoiseModel, schedule: &PulseSchedule, trajectories: usize, seed: u64) -> Result<ContrastPoint> {
    Ok(MonteCarlo::new(trajectories, seed).run(model, std::slice::from_ref(schedule))?[0])
}

/// Quasi-static detuning spread (kHz) giving the Gaussian decay
/// `exp(-(T / t2_star)^2)`; `t2_star` in us.
pub fn calibrate_sigma(t2_star_us: f64) -> Result<f64> {
    if !(t2_star_us > 0.0) {
        return Err(Error::domain(format!("T2* must be positive, got {t2_star_us} us")));
    }
    Ok(2f64.sqrt() / (2.0 * PI * t2_star_us * 1e-3))
}

/// Exponential time constant (ms) of an echo series.
pub fn echo_time_constant(points: &[ContrastPoint]) -> Result<f64> {
    let pts: Vec<DecayPoint> = points
        .iter()
        .map(|p| DecayPoint {
            time_us: p.time * 1e3,
            contrast: p.contrast.clamp(0.0, 1.0),
        })
        .collect();
    let fit = fit_decay(&pts, DecayModel::Exponential)?;
    Ok(fit.values[1] * 1e-3)
}

/// Correlation time (ms) for which OU noise of spread `sigma_khz` gives an
/// echo series with exponential time constant `target_ms`, found by
/// bisection in `log tau` over `[lo_ms, hi_ms]`.
pub fn calibrate_correlation_time(
    sigma_khz: f64,
    target_ms: f64,
    first: f64,
    period: f64,
    totals_ms: &[f64],
    mc: &MonteCarlo,
    (lo_ms, hi_ms): (f64, f64),
) -> Result<f64> {
    let t2 = |tau: f64| -> Result<f64> {
        let model = NoiseModel::ornstein_uhlenbeck(sigma_khz, tau)?;
        let mc = MonteCarlo {
            dt: mc.dt.min(tau / 10.0),
            ..*mc
        };
        echo_time_constant(&mc.echo_series(&model, first, period, totals_ms)?)
    };
    // with a fixed spread, slower noise refocuses better
    let (mut a, mut b) = (lo_ms.ln(), hi_ms.ln());
    let (fa, fb) = (t2(lo_ms)? - target_ms, t2(hi_ms)? - target_ms);
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!(
            "target {target_ms} ms is not bracketed by correlation times [{lo_ms}, {hi_ms}] ms"
        )));
    }
    for _ in 0..30 {
        let mid = 0.5 * (a + b);
        let fm = t2(mid.exp())? - target_ms;
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-3 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_calibration() {
        assert!((calibrate_sigma(632.0).unwrap() - 0.356).abs() < 5e-4);
        assert!((calibrate_sigma(424.0).unwrap() - 0.531).abs() < 5e-4);
        assert!(calibrate_sigma(1e12).unwrap() < 1e-9);
        assert!(calibrate_sigma(0.0).is_err());
    }

    #[test]
    fn signed_integral_of_linear_record() {
        // x(t) = t on [0, 1]; pulse at 0.5 -> 0.125 - 0.375
        let dt = 0.1;
        let x: Vec<f64> = (0..12).map(|k| k as f64 * dt).collect();
        let v = signed_integral(&x, dt, &[0.5], 1.0);
        assert!((v + 0.25).abs() < 1e-12, "{v}");
        let v = signed_integral(&x, dt, &[0.55], 1.0);
        let exact = 0.5 * 0.55 * 0.55 - (0.5 - 0.5 * 0.55 * 0.55);
        assert!((v - exact).abs() < 1e-12, "{v}");
        let v = signed_integral(&x, dt, &[], 0.37);
        assert!((v - 0.5 * 0.37 * 0.37).abs() < 1e-12);
    }

    #[test]
    fn noiseless_contrast_is_one() {
        let m = NoiseModel::quasi_static(0.0).unwrap();
        for p in ramsey_contrast(&m, &[0.1, 1.0, 5.0], 100, 1).unwrap() {
            assert_eq!(p.contrast, 1.0);
        }
        let s = PulseSchedule::periodic(0.5, 1.0, 3.0).unwrap();
        assert_eq!(echo_contrast(&m, &s, 100, 1).unwrap().contrast, 1.0);
    }

    #[test]
    fn detuning_records() {
        let q = NoiseModel::quasi_static(1.0).unwrap();
        let r = sample_detuning(&q, 1.0, 0.01, 3).unwrap();
        assert!(r.iter().all(|v| *v == r[0]));
        let z = NoiseModel::ornstein_uhlenbeck(0.0, 1.0).unwrap();
        assert!(sample_detuning(&z, 1.0, 0.01, 3).unwrap().iter().all(|v| *v == 0.0));
        assert!(sample_detuning(&z, 1.0, 0.2, 3).is_err());
    }

    #[test]
    fn schedules() {
        let s = PulseSchedule::parse_periodic("0.5ms+1ms", 3.0).unwrap();
        assert_eq!(s.pi_pulse_times, vec![0.5, 1.5, 2.5]);
        assert!(PulseSchedule::new(vec![1.0, 0.5], 2.0).is_err());
        assert!(PulseSchedule::new(vec![2.0], 2.0).is_err());
        assert!(PulseSchedule::parse_periodic("half", 1.0).is_err());
    }

    #[test]
    fn too_few_trajectories() {
        let m = NoiseModel::quasi_static(0.3).unwrap();
        assert!(ramsey_contrast(&m, &[1.0], 10, 0).is_err());
    }
}
