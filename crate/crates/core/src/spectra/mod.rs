//! Synthetic spectroscopy datasets and their least-squares fits.
//!
//! Three model families share one fitting engine:
//!
//! * frequency scans: a sum of off-resonant Rabi lineshapes
//!   `A_k Om^2/(Om^2+D^2) sin^2(pi sqrt(Om^2+D^2) tau)`;
//! * Rabi flops with a Gaussian envelope;
//! * Gaussian or exponential contrast decay.
//!
//! Count data are fitted by weighted least squares with binomial standard
//! errors taken from the model itself; the weights are refreshed between
//! Levenberg-Marquardt runs until the parameters settle.

mod io;
mod lm;

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand_distr::Binomial;

use crate::addressing::excitation_probability;
use crate::{rng, Error, Result};

pub use io::*;

pub const DEFAULT_PULSE_US: f64 = 50.0;
pub const DEFAULT_TRIALS: u64 = 100;
/// Model probabilities are clipped to `[P_CLIP, 1 - P_CLIP]` before weighting.
pub const P_CLIP: f64 = 1e-9;
const SMOOTHING_WINDOW: usize = 5;
const MAX_REWEIGHTS: usize = 20;
const REWEIGHT_TOLERANCE: f64 = 1e-9;

/// One frequency of a scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    /// kHz.
    pub frequency_offset: f64,
    pub successes: u64,
    pub trials: u64,
}

impl ScanPoint {
    pub fn new(frequency_offset_khz: f64, successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::domain(format!(
                "need 0 <= successes <= trials and trials > 0, got {successes}/{trials}"
            )));
        }
        if !frequency_offset_khz.is_finite() {
            return Err(Error::domain("frequency must be finite"));
        }
        Ok(Self {
            frequency_offset: frequency_offset_khz,
            successes,
            trials,
        })
    }

    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// One pulse length of a Rabi-flop dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlopPoint {
    pub time_us: f64,
    pub successes: u64,
    pub trials: u64,
}

impl FlopPoint {
    pub fn new(time_us: f64, successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::domain(format!(
                "need 0 <= successes <= trials and trials > 0, got {successes}/{trials}"
            )));
        }
        if !(time_us >= 0.0) || !time_us.is_finite() {
            return Err(Error::domain(format!("pulse time must be non-negative, got {time_us}")));
        }
        Ok(Self {
            time_us,
            successes,
            trials,
        })
    }

    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayPoint {
    pub time_us: f64,
    pub contrast: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    /// kHz.
    pub center: f64,
    /// Resonant excitation scale, 0..1.
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumModelParams {
    /// Sorted by centre.
    pub peaks: Vec<Peak>,
    /// kHz.
    pub rabi: f64,
    /// us.
    pub pulse: f64,
}

impl SpectrumModelParams {
    pub fn new(mut peaks: Vec<Peak>, rabi: f64, pulse: f64) -> Result<Self> {
        if !(rabi > 0.0) || !(pulse > 0.0) {
            return Err(Error::domain("Rabi frequency and pulse length must be positive"));
        }
        if peaks.iter().any(|p| !(0.0..=1.0).contains(&p.amplitude) || !p.center.is_finite()) {
            return Err(Error::domain("peak amplitudes must lie in [0, 1]"));
        }
        peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
        Ok(Self { peaks, rabi, pulse })
    }

    /// Peaks spaced by `splitting` symmetrically about zero.
    pub fn evenly_split(n: usize, splitting: f64, amplitude: f64, rabi: f64, pulse: f64) -> Result<Self> {
        let mid = 0.5 * (n as f64 - 1.0);
        let peaks = (0..n)
            .map(|k| Peak {
                center: (k as f64 - mid) * splitting,
                amplitude,
            })
            .collect();
        Self::new(peaks, rabi, pulse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlopParams {
    /// kHz.
    pub rabi: f64,
    /// Half width at half maximum of the Gaussian contrast envelope, us.
    pub envelope_hwhm: f64,
    pub contrast: f64,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayModel {
    /// `C0 exp(-(t/T)^2)`
    Gaussian,
    /// `C0 exp(-t/T)`
    Exponential,
}

impl DecayModel {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "gaussian" => Ok(Self::Gaussian),
            "exponential" => Ok(Self::Exponential),
            other => Err(Error::domain(format!("unknown decay model '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Exponential => "exponential",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayParams {
    pub model: DecayModel,
    pub c0: f64,
    /// Decay time, us.
    pub time_constant: f64,
}

impl DecayParams {
    pub fn value(&self, t_us: f64) -> f64 {
        let x = t_us / self.time_constant;
        match self.model {
            DecayModel::Gaussian => self.c0 * (-x * x).exp(),
            DecayModel::Exponential => self.c0 * (-x).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitParams {
    Spectrum(SpectrumModelParams),
    Flop(FlopParams),
    Decay(DecayParams),
}

impl FitParams {
    /// Model value at `x` (kHz for spectra, us otherwise).
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Self::Spectrum(p) => model_spectrum(p, x),
            Self::Flop(p) => model_flop(p, x),
            Self::Decay(p) => p.value(x),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Spectrum(_) => "spectrum",
            Self::Flop(_) => "flop",
            Self::Decay(p) => p.model.name(),
        }
    }

    fn axis(&self) -> (&'static str, &'static str) {
        match self {
            Self::Spectrum(_) => ("freq_offset_khz", "model_probability"),
            Self::Flop(_) => ("time_us", "model_probability"),
            Self::Decay(_) => ("time_us", "model_contrast"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    /// Fitted parameter names (with units) in covariance order.
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Derived quantities as (value, standard error).
    pub derived: BTreeMap<String, (f64, f64)>,
    pub chi2_per_dof: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }

    pub fn value(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.values[i], self.covariance[(i, i)].max(0.0).sqrt()))
    }

    /// Plain-text table followed by a `key=value` block.
    pub fn report(&self) -> String {
        let mut out = String::from("parameter,value,std_error\n");
        let errors = self.std_errors();
        for ((n, v), e) in self.names.iter().zip(&self.values).zip(&errors) {
            let _ = writeln!(out, "{n},{v:.6},{e:.6}");
        }
        for (n, (v, e)) in &self.derived {
            let _ = writeln!(out, "{n},{v:.6},{e:.6}");
        }
        let _ = writeln!(out, "chi2_per_dof,{:.6},", self.chi2_per_dof);
        out.push('\n');
        let _ = writeln!(out, "model={}", self.params.kind());
        for ((n, v), e) in self.names.iter().zip(&self.values).zip(&errors) {
            let _ = writeln!(out, "{n}={v:e}");
            let _ = writeln!(out, "{n}_err={e:e}");
        }
        for (n, (v, e)) in &self.derived {
            let _ = writeln!(out, "{n}={v:e}");
            let _ = writeln!(out, "{n}_err={e:e}");
        }
        let _ = writeln!(out, "chi2_per_dof={:e}", self.chi2_per_dof);
        let _ = writeln!(out, "iterations={}", self.iterations);
        out
    }

    /// Fitted curve on `n` evenly spaced points of `[lo, hi]`.
    pub fn plot_csv(&self, lo: f64, hi: f64, n: usize) -> String {
        let (xh, yh) = self.params.axis();
        let mut out = format!("{xh},{yh}\n");
        for i in 0..n {
            let x = if n > 1 { lo + (hi - lo) * i as f64 / (n - 1) as f64 } else { lo };
            let _ = writeln!(out, "{x},{}", self.params.evaluate(x));
        }
        out
    }
}

/// Excitation probability at detuning `f` (kHz) from the line centre.
pub fn model_spectrum(params: &SpectrumModelParams, f: f64) -> f64 {
    params
        .peaks
        .iter()
        .map(|p| p.amplitude * excitation_probability(params.rabi, f - p.center, params.pulse))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

pub fn model_flop(params: &FlopParams, t_us: f64) -> f64 {
    let x = t_us / params.envelope_hwhm;
    let s = (PI * params.rabi * t_us * 1e-3).sin();
    (params.offset + params.contrast * (-LN_2 * x * x).exp() * s * s).clamp(0.0, 1.0)
}

fn binomial_draw(seed: u64, index: usize, trials: u64, p: f64) -> u64 {
    let mut rng = rng::stream(seed, index as u64);
    Binomial::new(trials, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(&mut rng)
}

/// Binomially sampled scan; point `i` uses its own stream `(seed, i)`.
pub fn simulate_scan(params: &SpectrumModelParams, grid: &[f64], trials: u64, seed: u64) -> Result<Vec<ScanPoint>> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    grid.iter()
        .enumerate()
        .map(|(i, f)| ScanPoint::new(*f, binomial_draw(seed, i, trials, model_spectrum(params, *f)), trials))
        .collect()
}

pub fn simulate_flop(params: &FlopParams, times_us: &[f64], trials: u64, seed: u64) -> Result<Vec<FlopPoint>> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    times_us
        .iter()
        .enumerate()
        .map(|(i, t)| FlopPoint::new(*t, binomial_draw(seed, i, trials, model_flop(params, *t)), trials))
        .collect()
}

/// Binomial standard error of the model value, floored at `1 / (trials + 2)`.
fn binomial_sigma(p: f64, trials: u64) -> f64 {
    let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
    (p * (1.0 - p) / trials as f64)
        .sqrt()
        .max(1.0 / (trials as f64 + 2.0))
}

struct CountFit {
    x: Vec<f64>,
    covariance: DMatrix<f64>,
    chi2_per_dof: f64,
    iterations: usize,
}

/// Weighted fit of count data; weights follow the model and are refreshed
/// until the parameters stop moving.
fn fit_counts<M>(xs: &[f64], observed: &[f64], trials: &[u64], model: M, x0: Vec<f64>) -> Result<CountFit>
where
    M: Fn(&[f64], f64) -> f64,
{
    let mut params = x0;
    let mut iterations = 0;
    let sigmas = |p: &[f64]| -> Vec<f64> {
        xs.iter()
            .zip(trials)
            .map(|(x, n)| binomial_sigma(model(p, *x), *n))
            .collect()
    };
    let mut sigma = sigmas(&params);
    for _ in 0..MAX_REWEIGHTS {
        let residuals = |p: &[f64]| -> Vec<f64> {
            xs.iter()
                .zip(observed)
                .zip(&sigma)
                .map(|((x, y), s)| (model(p, *x) - y) / s)
                .collect()
        };
        let sol = lm::minimize(&residuals, &params)?;
        iterations += sol.iterations;
        let change = sol
            .x
            .iter()
            .zip(&params)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
            .fold(0.0, f64::max);
        params = sol.x;
        sigma = sigmas(&params);
        if change < REWEIGHT_TOLERANCE {
            break;
        }
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        xs.iter()
            .zip(observed)
            .zip(&sigma)
            .map(|((x, y), s)| (model(p, *x) - y) / s)
            .collect()
    };
    let jac = lm::jacobian(&residuals, &params, xs.len());
    let covariance = lm::covariance(&jac)?;
    let cost: f64 = residuals(&params).iter().map(|r| r * r).sum();
    let dof = xs.len().saturating_sub(params.len()).max(1);
    Ok(CountFit {
        x: params,
        covariance,
        chi2_per_dof: cost / dof as f64,
        iterations,
    })
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Initial peaks from the largest local maxima of the smoothed scan. Maxima
/// closer than `exclusion` to a stronger one are skipped.
fn seed_peaks(freqs: &[f64], fractions: &[f64], n_peaks: usize, exclusion: f64) -> Vec<(f64, f64)> {
    let s = moving_average(fractions, SMOOTHING_WINDOW);
    let n = s.len();
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || s[i] > s[i - 1];
            let right = i + 1 == n || s[i] >= s[i + 1];
            left && right
        })
        .collect();
    maxima.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(freqs[a].total_cmp(&freqs[b])));
    let mut chosen: Vec<(f64, f64)> = Vec::new();
    for i in maxima {
        if chosen.len() == n_peaks {
            break;
        }
        if chosen.iter().all(|(c, _)| (freqs[i] - c).abs() >= exclusion) {
            chosen.push((freqs[i], s[i]));
        }
    }
    chosen
}

fn spectrum_from_vector(x: &[f64], pulse: f64) -> SpectrumModelParams {
    let n = (x.len() - 1) / 2;
    SpectrumModelParams {
        peaks: (0..n)
            .map(|k| Peak {
                center: x[2 * k],
                amplitude: x[2 * k + 1],
            })
            .collect(),
        rabi: x[2 * n].abs(),
        pulse,
    }
}

/// Fits `n_peaks` lineshapes to a scan. Without `init`, the peaks are seeded
/// from the data and the Rabi frequency from the pi-pulse condition
/// `rabi = 1 / (2 pulse)`.
pub fn fit_spectrum(
    data: &[ScanPoint],
    n_peaks: usize,
    pulse_us: f64,
    init: Option<&SpectrumModelParams>,
) -> Result<FitResult> {
    if n_peaks == 0 {
        return Err(Error::domain("at least one peak is required"));
    }
    let n_params = 2 * n_peaks + 1;
    if data.len() < 5 * n_params {
        return Err(Error::domain(format!(
            "{} points are too few for {n_peaks} peaks (need {})",
            data.len(),
            5 * n_params
        )));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.frequency_offset.total_cmp(&b.frequency_offset));
    let freqs: Vec<f64> = sorted.iter().map(|p| p.frequency_offset).collect();
    let fractions: Vec<f64> = sorted.iter().map(ScanPoint::fraction).collect();
    let trials: Vec<u64> = sorted.iter().map(|p| p.trials).collect();

    let (x0, pulse) = match init {
        Some(p) => {
            if p.peaks.len() != n_peaks {
                return Err(Error::domain(format!(
                    "initial guess has {} peaks, expected {n_peaks}",
                    p.peaks.len()
                )));
            }
            let mut x: Vec<f64> = p.peaks.iter().flat_map(|k| [k.center, k.amplitude]).collect();
            x.push(p.rabi);
            (x, p.pulse)
        }
        None => {
            if !(pulse_us > 0.0) {
                return Err(Error::domain("pulse length must be positive"));
            }
            let rabi = 1e3 / (2.0 * pulse_us);
            let seeds = seed_peaks(&freqs, &fractions, n_peaks, 2.0 * rabi);
            if seeds.len() < n_peaks {
                return Err(Error::domain(format!(
                    "found {} candidate peaks, expected {n_peaks}",
                    seeds.len()
                )));
            }
            let on_resonance = excitation_probability(rabi, 0.0, pulse_us).max(1e-3);
            let mut seeds = seeds;
            seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut x: Vec<f64> = seeds
                .iter()
                .flat_map(|(c, h)| [*c, (h / on_resonance).clamp(0.05, 1.0)])
                .collect();
            x.push(rabi);
            (x, pulse_us)
        }
    };

    let model = |p: &[f64], f: f64| model_spectrum(&spectrum_from_vector(p, pulse), f);
    let fit = fit_counts(&freqs, &fractions, &trials, model, x0)?;

    // order peaks by centre and permute the covariance to match
    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| fit.x[2 * a].total_cmp(&fit.x[2 * b]));
    let perm: Vec<usize> = order
        .iter()
        .flat_map(|&k| [2 * k, 2 * k + 1])
        .chain(std::iter::once(2 * n_peaks))
        .collect();
    let mut values: Vec<f64> = perm.iter().map(|&i| fit.x[i]).collect();
    values[2 * n_peaks] = values[2 * n_peaks].abs();
    let covariance = DMatrix::from_fn(n_params, n_params, |i, j| fit.covariance[(perm[i], perm[j])]);

    let mut names = Vec::with_capacity(n_params);
    for k in 1..=n_peaks {
        names.push(format!("center_{k}_khz"));
        names.push(format!("amplitude_{k}"));
    }
    names.push("rabi_khz".into());

    let mut derived = BTreeMap::new();
    if n_peaks >= 2 {
        // mean adjacent splitting telescopes to (last - first) / (n - 1)
        let (a, b) = (0, 2 * (n_peaks - 1));
        let d = (n_peaks - 1) as f64;
        let mean = (values[b] - values[a]) / d;
        let var = (covariance[(a, a)] + covariance[(b, b)] - 2.0 * covariance[(a, b)]) / (d * d);
        derived.insert("splitting_khz".to_string(), (mean, var.max(0.0).sqrt()));
        for k in 0..n_peaks - 1 {
            let (i, j) = (2 * k, 2 * k + 2);
            let v = covariance[(i, i)] + covariance[(j, j)] - 2.0 * covariance[(i, j)];
            derived.insert(format!("splitting_{}_{}_khz", k + 1, k + 2), (values[j] - values[i], v.max(0.0).sqrt()));
        }
    }
    Ok(FitResult {
        params: FitParams::Spectrum(spectrum_from_vector(&values, pulse)),
        names,
        values,
        covariance,
        derived,
        chi2_per_dof: fit.chi2_per_dof,
        iterations: fit.iterations,
    })
}

/// Dominant oscillation frequency of unevenly sampled data, kHz, from a
/// zero-padded discrete Fourier scan over `[1/span, nyquist]`.
pub fn dominant_frequency(times_us: &[f64], values: &[f64]) -> Option<f64> {
    let n = times_us.len();
    let t0 = times_us.iter().copied().fold(f64::INFINITY, f64::min);
    let t1 = times_us.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = t1 - t0;
    if n < 4 || !(span > 0.0) {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let resolution = 1.0 / span;
    let nyquist = 0.5 * (n - 1) as f64 / span;
    const OVERSAMPLE: usize = 8;
    let bins = ((nyquist / resolution) as usize * OVERSAMPLE).max(1);
    (OVERSAMPLE..=bins)
        .map(|k| {
            let f = k as f64 * resolution / OVERSAMPLE as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in times_us.iter().zip(values) {
                let phase = 2.0 * PI * f * (t - t0);
                re += (v - mean) * phase.cos();
                im += (v - mean) * phase.sin();
            }
            (f, re * re + im * im)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f * 1e3)
}

/// Residuals after removing a least-squares quadratic in time.
fn detrend_quadratic(times: &[f64], values: &[f64]) -> Vec<f64> {
    let t0 = times[0];
    let span = (times[times.len() - 1] - t0).max(f64::MIN_POSITIVE);
    let basis = |t: f64| {
        let u = (t - t0) / span;
        [1.0, u, u * u]
    };
    let a = DMatrix::from_fn(times.len(), 3, |i, j| basis(times[i])[j]);
    let b = DVector::from_column_slice(values);
    match a.clone().svd(true, true).solve(&b, 1e-12) {
        Ok(c) => (&b - &a * c).iter().copied().collect(),
        Err(_) => values.to_vec(),
    }
}

const MIN_FLOP_PERIODS: usize = 3;

fn flop_from_vector(x: &[f64]) -> FlopParams {
    FlopParams {
        rabi: x[0].abs(),
        envelope_hwhm: x[1].abs(),
        contrast: x[2],
        offset: x[3],
    }
}

/// Fits a Gaussian-damped Rabi flop. The Rabi frequency is seeded from the
/// dominant Fourier component of the data.
pub fn fit_flop(data: &[FlopPoint]) -> Result<FitResult> {
    if data.len() < 20 {
        return Err(Error::domain(format!("need at least 20 points, got {}", data.len())));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));
    let times: Vec<f64> = sorted.iter().map(|p| p.time_us).collect();
    let fractions: Vec<f64> = sorted.iter().map(FlopPoint::fraction).collect();
    let trials: Vec<u64> = sorted.iter().map(|p| p.trials).collect();
    let span = times[times.len() - 1] - times[0];

    // the decaying mean would otherwise dominate the low bins
    let rabi = dominant_frequency(&times, &detrend_quadratic(&times, &fractions))
        .ok_or_else(|| Error::domain("flop data need distinct pulse times"))?;
    if span * rabi * 1e-3 < MIN_FLOP_PERIODS as f64 {
        return Err(Error::domain(format!(
            "data span {span} us covers fewer than 3 flop periods at {rabi:.3} kHz"
        )));
    }
    let lo = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x0 = vec![rabi, 0.5 * times[times.len() - 1], (hi - lo).max(0.05), lo];

    let fit = fit_counts(&times, &fractions, &trials, |p, t| model_flop(&flop_from_vector(p), t), x0)?;
    let mut values = fit.x.clone();
    values[0] = values[0].abs();
    values[1] = values[1].abs();
    let params = flop_from_vector(&values);
    let mut derived = BTreeMap::new();
    let rabi_err = fit.covariance[(0, 0)].max(0.0).sqrt();
    derived.insert(
        "pi_time_us".to_string(),
        (1e3 / (2.0 * params.rabi), 1e3 / (2.0 * params.rabi * params.rabi) * rabi_err),
    );
    Ok(FitResult {
        params: FitParams::Flop(params),
        names: vec!["rabi_khz".into(), "envelope_hwhm_us".into(), "contrast".into(), "offset".into()],
        values,
        covariance: fit.covariance,
        derived,
        chi2_per_dof: fit.chi2_per_dof,
        iterations: fit.iterations,
    })
}

/// Fits a decay envelope to unweighted contrast data; the covariance is
/// scaled by the residual variance.
pub fn fit_decay(points: &[DecayPoint], model: DecayModel) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::domain(format!("need at least 5 points, got {}", points.len())));
    }
    if points
        .iter()
        .any(|p| !(0.0..=1.0).contains(&p.contrast) || !p.time_us.is_finite())
    {
        return Err(Error::domain("contrasts must lie in [0, 1]"));
    }
    // straight-line fit of ln C against t or t^2 for the starting point
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.contrast > 0.05)
        .map(|p| {
            let u = match model {
                DecayModel::Gaussian => p.time_us * p.time_us,
                DecayModel::Exponential => p.time_us,
            };
            (u, p.contrast.ln())
        })
        .collect();
    let c_max = points.iter().map(|p| p.contrast).fold(0.0, f64::max);
    let t_max = points.iter().map(|p| p.time_us).fold(0.0, f64::max);
    let (mut c0, mut tc) = (c_max.max(1e-3), (0.5 * t_max).max(1e-3));
    if usable.len() >= 2 {
        let n = usable.len() as f64;
        let mu = usable.iter().map(|p| p.0).sum::<f64>() / n;
        let mv = usable.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = usable.iter().map(|p| (p.0 - mu).powi(2)).sum();
        let sxy: f64 = usable.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
        if sxx > 0.0 && sxy < 0.0 {
            let slope = sxy / sxx;
            c0 = (mv - slope * mu).exp();
            tc = match model {
                DecayModel::Gaussian => (-1.0 / slope).sqrt(),
                DecayModel::Exponential => -1.0 / slope,
            };
        }
    }
    let eval = |p: &[f64], t: f64| {
        DecayParams {
            model,
            c0: p[0],
            time_constant: p[1],
        }
        .value(t)
    };
    let residuals = |p: &[f64]| -> Vec<f64> { points.iter().map(|q| eval(p, q.time_us) - q.contrast).collect() };
    let sol = lm::minimize(&residuals, &[c0, tc])?;
    let unit = lm::covariance(&sol.jacobian)?;
    let dof = (points.len() - 2) as f64;
    let covariance = unit * (sol.cost / dof);
    let params = DecayParams {
        model,
        c0: sol.x[0],
        time_constant: sol.x[1].abs(),
    };
    Ok(FitResult {
        params: FitParams::Decay(params),
        names: vec!["c0".into(), "time_constant_us".into()],
        values: vec![params.c0, params.time_constant],
        covariance,
        derived: BTreeMap::new(),
        chi2_per_dof: sol.cost / dof,
        iterations: sol.iterations,
    })
}
