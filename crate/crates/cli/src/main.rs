//! `gradkit`: command-line front end for the gradient-addressing toolkit.
//!
//! Exit status: 0 on success, 1 on usage or input-file errors, 2 when a
//! computation fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod output;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gradkit::addressing::{build_address_map, crosstalk_at_pi, QubitConstants};
use gradkit::coherence::{ContrastPoint, MonteCarlo, NoiseModel, PulseSchedule};
use gradkit::ionchain::{equilibrium_positions, secular_from_sidebands, spacings, Species};
use gradkit::magnetostatics::{read_geometry, write_geometry, CurrentPath, FieldSolver, Point3, Vector3};
use gradkit::optimizer::{
    build_geometry, detuned_start, effective_resistance, optimize, read_bounds, trace_csv, Constraints,
    OptimizeSpec, ParamBounds, SGeometryParams, DEFAULT_SHEET_RESISTANCE_OHM,
};
use gradkit::spectra::{
    fit_decay, fit_flop, fit_spectrum, flop_csv, parse_decay_csv, parse_flop_csv, parse_scan_csv, scan_csv,
    simulate_flop, simulate_scan, DecayModel, FitResult, FlopParams, SpectrumModelParams,
};
use gradkit::{report, DEFAULT_SEED};

use output::{comment_block, fit_json, Output, Table};

#[derive(Parser, Debug)]
#[command(
    name = "gradkit",
    version,
    about = "Magnetic-gradient addressing of trapped ions: fields, chains, spectra, coherence and geometry search.",
    long_about = "Magnetic-gradient addressing of trapped ions.\n\n\
        Units at every interface: lengths um, currents mA, fields G, gradients G/mm, \
        power mW, frequencies kHz, pulse times us, sequence times ms.\n\
        Tabular output is CSV with unit-labelled headers; --json emits the same content as JSON."
)]
struct Cli {
    /// Emit JSON instead of CSV/text.
    #[arg(long, global = true)]
    json: bool,

    /// Write the main output to this file instead of stdout.
    #[arg(long, short, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct SeedArg {
    /// Random seed (the GRADKIT_SEED environment variable overrides the default).
    #[arg(long, env = "GRADKIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Geometry file (um, mA); defaults to the built-in reference S structure.
    #[arg(long, value_name = "PATH")]
    geometry: Option<PathBuf>,

    /// Feed current in mA. For a file, every path is rescaled so the largest
    /// |current| equals this value; the reference structure defaults to 300 mA.
    #[arg(long, value_name = "MA")]
    current: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Field, addressing gradient dB_z/dy, residual field and power at a point.
    Field {
        #[command(flatten)]
        geometry: GeometryArgs,

        /// Evaluation point x,y,z in um.
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,100", allow_hyphen_values = true)]
        point: [f64; 3],

        /// Uniform external bias bx,by,bz in G.
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,4", allow_hyphen_values = true)]
        bias: [f64; 3],

        /// Total circuit resistance in ohm; by default derived from trace
        /// lengths and widths at the sheet resistance.
        #[arg(long, value_name = "OHM")]
        resistance: Option<f64>,

        /// Sheet resistance in ohm per square.
        #[arg(long, default_value_t = DEFAULT_SHEET_RESISTANCE_OHM, value_name = "OHM")]
        sheet_resistance: f64,

        /// Parallel filaments per trace across its width (1 = centreline).
        #[arg(long, default_value_t = 1)]
        filaments: usize,
    },

    /// Equilibrium positions (um) and spacings of a linear ion chain.
    Chain {
        #[command(flatten)]
        species: SpeciesArgs,

        /// Axial secular frequency in kHz.
        #[arg(long, default_value_t = 847.0, value_name = "KHZ")]
        secular: f64,

        /// Carrier and first sideband frequencies in kHz; overrides --secular
        /// with their difference.
        #[arg(long, value_parser = parse_pair, value_name = "KHZ,KHZ", allow_hyphen_values = true)]
        sidebands: Option<(f64, f64)>,

        /// Number of ions.
        #[arg(long, default_value_t = 2)]
        n: usize,
    },

    /// Qubit frequency offsets (kHz) and crosstalk, either for one spacing and
    /// gradient or for a full chain above a geometry.
    Address {
        /// Ion spacing in um (with --gradient: two-ion mode).
        #[arg(long, value_name = "UM", requires = "gradient")]
        spacing: Option<f64>,

        /// Field gradient dB_z/dy in G/mm.
        #[arg(long, value_name = "G_PER_MM", requires = "spacing", allow_hyphen_values = true)]
        gradient: Option<f64>,

        /// Rabi frequency in kHz (cycles; pi time = 1/(2 rabi)).
        #[arg(long, default_value_t = 35.0, value_name = "KHZ")]
        rabi: f64,

        /// Difference of Lande factors of the qubit levels.
        #[arg(long, default_value_t = 2.0)]
        delta_g: f64,

        #[command(flatten)]
        geometry: GeometryArgs,

        #[command(flatten)]
        species: SpeciesArgs,

        /// Axial secular frequency in kHz.
        #[arg(long, default_value_t = 847.0, value_name = "KHZ")]
        secular: f64,

        /// Number of ions.
        #[arg(long, default_value_t = 2)]
        n: usize,
    },

    /// Frequency-scan datasets: simulate or fit.
    Spectrum {
        #[command(subcommand)]
        action: SpectrumAction,
    },

    /// Rabi-flop datasets: simulate or fit.
    Flop {
        #[command(subcommand)]
        action: FlopAction,
    },

    /// Fit a contrast decay curve (CSV time_us,contrast).
    Decay {
        /// Input CSV.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,

        /// Envelope model.
        #[arg(long, value_enum, default_value_t = DecayArg::Gaussian)]
        model: DecayArg,
    },

    /// Ramsey and spin-echo Monte Carlo under detuning noise.
    Coherence {
        #[command(subcommand)]
        action: CoherenceAction,
    },

    /// Search S-structure dimensions for the largest feasible gradient.
    Optimize {
        /// Feed current in mA.
        #[arg(long, default_value_t = 300.0, value_name = "MA")]
        current: f64,

        /// Maximum number of design evaluations.
        #[arg(long, default_value_t = 500)]
        budget: usize,

        #[command(flatten)]
        seed: SeedArg,

        /// Bounds file (`bound <param> <lo_um> <hi_um>`, `start <param> <um>`, `n_s_turns <n>`).
        #[arg(long, value_name = "PATH")]
        bounds: Option<PathBuf>,

        /// Starting design.
        #[arg(long, value_enum, default_value_t = StartArg::Detuned)]
        start: StartArg,

        /// Residual-field cap in mG.
        #[arg(long, default_value_t = 20.0, value_name = "MG")]
        residual_max: f64,

        /// Dissipation cap in mW.
        #[arg(long, default_value_t = 50.0, value_name = "MW")]
        power_max: f64,

        /// Sheet resistance in ohm per square.
        #[arg(long, default_value_t = DEFAULT_SHEET_RESISTANCE_OHM, value_name = "OHM")]
        sheet_resistance: f64,

        /// Write the evaluation trace CSV here.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },

    /// Recompute every headline number and tabulate it next to the published value.
    Report {
        #[command(flatten)]
        seed: SeedArg,
    },
}

#[derive(Args, Debug)]
struct SpeciesArgs {
    /// Ion species: Sr88, Ca40, or a mass in atomic mass units.
    #[arg(long, default_value = "Sr88")]
    species: String,

    /// Ion charge in elementary charges.
    #[arg(long, default_value_t = 1)]
    charge: u32,
}

impl SpeciesArgs {
    fn resolve(&self) -> gradkit::Result<Species> {
        let s = Species::parse(&self.species)?;
        Species::new(s.name, s.mass, self.charge)
    }
}

#[derive(Subcommand, Debug)]
enum SpectrumAction {
    /// Binomially sampled scan (CSV freq_offset_khz,successes,trials).
    Sim {
        /// Number of peaks, evenly split about zero.
        #[arg(long, default_value_t = 2)]
        peaks: usize,
        /// Peak-to-peak splitting in kHz.
        #[arg(long, default_value_t = 310.0, value_name = "KHZ")]
        splitting: f64,
        /// Peak amplitude, 0..1.
        #[arg(long, default_value_t = 0.9)]
        amplitude: f64,
        /// Rabi frequency in kHz.
        #[arg(long, default_value_t = 9.0, value_name = "KHZ")]
        rabi: f64,
        /// Probe pulse length in us.
        #[arg(long, default_value_t = 50.0, value_name = "US")]
        pulse: f64,
        /// Scan range start in kHz.
        #[arg(long, default_value_t = -350.0, value_name = "KHZ", allow_hyphen_values = true)]
        from: f64,
        /// Scan range end in kHz.
        #[arg(long, default_value_t = 350.0, value_name = "KHZ", allow_hyphen_values = true)]
        to: f64,
        /// Scan step in kHz.
        #[arg(long, default_value_t = 2.0, value_name = "KHZ")]
        step: f64,
        /// Repetitions per frequency.
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Fit a sum of Rabi lineshapes to a scan CSV.
    Fit {
        /// Input CSV (freq_offset_khz,successes,trials).
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Number of peaks.
        #[arg(long, default_value_t = 2)]
        peaks: usize,
        /// Probe pulse length in us.
        #[arg(long, default_value_t = 50.0, value_name = "US")]
        pulse: f64,
        /// Write the fitted curve (kHz, probability) to this CSV.
        #[arg(long, value_name = "PATH")]
        plot: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum FlopAction {
    /// Binomially sampled Rabi flop (CSV time_us,successes,trials).
    Sim {
        /// Rabi frequency in kHz.
        #[arg(long, default_value_t = 35.0, value_name = "KHZ")]
        rabi: f64,
        /// Gaussian envelope HWHM in us.
        #[arg(long, default_value_t = 170.0, value_name = "US")]
        hwhm: f64,
        /// Initial contrast, 0..1.
        #[arg(long, default_value_t = 0.97)]
        contrast: f64,
        /// Baseline probability.
        #[arg(long, default_value_t = 0.02)]
        offset: f64,
        /// Longest pulse in us.
        #[arg(long, default_value_t = 300.0, value_name = "US")]
        to: f64,
        /// Pulse-length step in us.
        #[arg(long, default_value_t = 3.0, value_name = "US")]
        step: f64,
        /// Repetitions per pulse length.
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Fit a Gaussian-damped Rabi flop.
    Fit {
        /// Input CSV (time_us,successes,trials).
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Write the fitted curve (us, probability) to this CSV.
        #[arg(long, value_name = "PATH")]
        plot: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Noise process.
    #[arg(long, value_enum, default_value_t = NoiseArg::QuasiStatic)]
    model: NoiseArg,
    /// Detuning standard deviation in kHz.
    #[arg(long, value_name = "KHZ", conflicts_with = "t2_star")]
    sigma: Option<f64>,
    /// Set sigma from a Gaussian free-induction time in us.
    #[arg(long, value_name = "US")]
    t2_star: Option<f64>,
    /// OU correlation time in ms.
    #[arg(long, default_value_t = 4.3, value_name = "MS")]
    tau_c: f64,
    /// Monte Carlo trajectories.
    #[arg(long, default_value_t = 10_000)]
    trajectories: usize,
    /// Integration step in ms.
    #[arg(long, default_value_t = gradkit::coherence::DEFAULT_DT_MS, value_name = "MS")]
    dt: f64,
    /// Upper-state lifetime in ms (omit to ignore decay).
    #[arg(long, value_name = "MS")]
    lifetime: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    /// Also fit a decay envelope to the result.
    #[arg(long)]
    fit: bool,
}

impl NoiseArgs {
    fn model(&self) -> gradkit::Result<NoiseModel> {
        let sigma = match (self.sigma, self.t2_star) {
            (Some(s), _) => s,
            (None, Some(t)) => gradkit::coherence::calibrate_sigma(t)?,
            (None, None) => gradkit::coherence::calibrate_sigma(632.0)?,
        };
        match self.model {
            NoiseArg::QuasiStatic => NoiseModel::quasi_static(sigma),
            NoiseArg::Ou => NoiseModel::ornstein_uhlenbeck(sigma, self.tau_c),
        }
    }

    fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo {
            dt: self.dt,
            lifetime: self.lifetime,
            ..MonteCarlo::new(self.trajectories, self.seed.seed)
        }
    }
}

#[derive(Subcommand, Debug)]
enum CoherenceAction {
    /// Ramsey contrast versus free delay (CSV delay_ms,contrast,std_error).
    Ramsey {
        #[command(flatten)]
        noise: NoiseArgs,
        /// Comma-separated delays in ms.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        delays: Vec<f64>,
    },
    /// Spin-echo contrast at each total time (CSV total_ms,contrast,std_error).
    Echo {
        #[command(flatten)]
        noise: NoiseArgs,
        /// Pi-pulse schedule `<first>ms+<period>ms`.
        #[arg(long, default_value = "0.5ms+1ms")]
        echo: String,
        /// Comma-separated total sequence times in ms.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        totals: Vec<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NoiseArg {
    QuasiStatic,
    Ou,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DecayArg {
    Gaussian,
    Exponential,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StartArg {
    Reference,
    Detuned,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected three comma-separated numbers, got '{s}'"))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok((a, b)),
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn with_file<T>(path: &Path, r: gradkit::Result<T>) -> anyhow::Result<T> {
    r.with_context(|| format!("in {}", path.display()))
}

fn load_paths(args: &GeometryArgs) -> anyhow::Result<Vec<CurrentPath>> {
    match &args.geometry {
        None => Ok(build_geometry(&SGeometryParams::reference(), args.current.unwrap_or(300.0))?),
        Some(path) => {
            let paths = with_file(path, read_geometry(path))?;
            let Some(target) = args.current else {
                return Ok(paths);
            };
            let feed = paths.iter().map(|p| p.current_ma().abs()).fold(0.0, f64::max);
            if feed == 0.0 {
                bail!("cannot rescale {}: every path carries zero current", path.display());
            }
            Ok(paths
                .iter()
                .map(|p| p.scaled(target / feed))
                .collect::<gradkit::Result<_>>()?)
        }
    }
}

fn fit_output(fit: &FitResult) -> Output {
    Output::Document {
        text: fit.report(),
        json: fit_json(fit),
    }
}

fn write_plot(fit: &FitResult, path: &Option<PathBuf>, lo: f64, hi: f64) -> anyhow::Result<()> {
    if let Some(p) = path {
        fs::write(p, fit.plot_csv(lo, hi, 2001)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn contrast_table(first: &str, points: &[ContrastPoint]) -> Table {
    let mut t = Table::new(&[first, "contrast", "std_error"]);
    for p in points {
        t.push(vec![p.time.into(), p.contrast.into(), p.std_error.into()]);
    }
    t
}

fn with_decay_fit(table: Table, points: &[ContrastPoint], model: DecayModel) -> anyhow::Result<Output> {
    let pts: Vec<_> = points
        .iter()
        .map(|p| gradkit::spectra::DecayPoint {
            time_us: p.time * 1e3,
            contrast: p.contrast.clamp(0.0, 1.0),
        })
        .collect();
    let fit = fit_decay(&pts, model)?;
    let mut text = table.csv();
    text.push('\n');
    text.push_str(&fit.report());
    Ok(Output::Document {
        text,
        json: json!({ "points": table.json(), "fit": fit_json(&fit) }),
    })
}

fn run(cli: &Cli) -> anyhow::Result<Output> {
    Ok(match &cli.command {
        Command::Field {
            geometry,
            point,
            bias,
            resistance,
            sheet_resistance,
            filaments,
        } => {
            let paths = load_paths(geometry)?;
            let r = resistance.unwrap_or_else(|| effective_resistance(&paths, *sheet_resistance));
            let solver = FieldSolver::with_filaments(*filaments);
            let p = Point3::new(point[0], point[1], point[2]);
            let bias = Vector3::from(*bias);
            let site = solver.site_report(&paths, p, bias, r)?;
            let dmag = solver.magnitude_gradient_y(&paths, p, bias).ok();
            let mut t = Table::new(&[
                "x_um",
                "y_um",
                "z_um",
                "b_total_x_g",
                "b_total_y_g",
                "b_total_z_g",
                "residual_x_mg",
                "residual_y_mg",
                "residual_z_mg",
                "residual_mg",
                "dbz_dy_g_per_mm",
                "dbtotal_dy_g_per_mm",
                "resistance_ohm",
                "power_mw",
            ]);
            t.push(vec![
                p.x.into(),
                p.y.into(),
                p.z.into(),
                site.b_total.x.into(),
                site.b_total.y.into(),
                site.b_total.z.into(),
                (site.residual_b.x * 1e3).into(),
                (site.residual_b.y * 1e3).into(),
                (site.residual_b.z * 1e3).into(),
                site.residual_mg().into(),
                site.dbz_dy.into(),
                dmag.into(),
                r.into(),
                site.power_mw.into(),
            ]);
            Output::Table(t)
        }

        Command::Chain {
            species,
            secular,
            sidebands,
            n,
        } => {
            let secular = match sidebands {
                Some((c, s)) => secular_from_sidebands(*c, *s)?,
                None => *secular,
            };
            let sol = equilibrium_positions(&species.resolve()?, secular, *n)?;
            let gaps = if sol.len() > 1 { spacings(&sol)? } else { Vec::new() };
            let mut t = Table::new(&["index", "position_um", "spacing_to_next_um", "secular_khz"]);
            for (i, y) in sol.positions.iter().enumerate() {
                t.push(vec![i.into(), (*y).into(), gaps.get(i).copied().into(), secular.into()]);
            }
            Output::Table(t)
        }

        Command::Address {
            spacing,
            gradient,
            rabi,
            delta_g,
            geometry,
            species,
            secular,
            n,
        } => {
            let constants = QubitConstants::with_delta_g(*delta_g)?;
            if let (Some(s), Some(g)) = (spacing, gradient) {
                let split = constants.splitting(*s, *g)?;
                let c = crosstalk_at_pi(*rabi, split.abs())?;
                let need = constants.required_gradient(*s, *rabi, 1.0)?;
                let mut t = Table::new(&[
                    "spacing_um",
                    "gradient_g_per_mm",
                    "splitting_khz",
                    "rabi_khz",
                    "crosstalk_instantaneous",
                    "crosstalk_envelope",
                    "crosstalk_time_averaged",
                    "required_gradient_g_per_mm",
                ]);
                t.push(vec![
                    (*s).into(),
                    (*g).into(),
                    split.into(),
                    (*rabi).into(),
                    c.instantaneous.into(),
                    c.envelope.into(),
                    c.time_averaged.into(),
                    need.into(),
                ]);
                Output::Table(t)
            } else {
                let paths = load_paths(geometry)?;
                let chain = equilibrium_positions(&species.resolve()?, *secular, *n)?;
                let site = FieldSolver::default().site_report(
                    &paths,
                    Point3::trap_center(),
                    Vector3::zeros(),
                    effective_resistance(&paths, DEFAULT_SHEET_RESISTANCE_OHM),
                )?;
                let map = build_address_map(&chain, &site, *rabi, &constants)?;
                let mut t = Table::new(&[
                    "ion_index",
                    "position_um",
                    "offset_khz",
                    "dbz_dy_g_per_mm",
                    "crosstalk_instantaneous",
                    "crosstalk_envelope",
                    "crosstalk_time_averaged",
                ]);
                for e in &map.entries {
                    let c = map.neighbor_crosstalk(e.ion_index);
                    t.push(vec![
                        e.ion_index.into(),
                        e.position_um.into(),
                        e.frequency_offset.into(),
                        site.dbz_dy.into(),
                        c.map(|c| c.instantaneous).into(),
                        c.map(|c| c.envelope).into(),
                        c.map(|c| c.time_averaged).into(),
                    ]);
                }
                Output::Table(t)
            }
        }

        Command::Spectrum { action } => match action {
            SpectrumAction::Sim {
                peaks,
                splitting,
                amplitude,
                rabi,
                pulse,
                from,
                to,
                step,
                trials,
                seed,
            } => {
                if !(*step > 0.0) || to < from {
                    bail!("scan range needs --from <= --to and a positive --step");
                }
                let params = SpectrumModelParams::evenly_split(*peaks, *splitting, *amplitude, *rabi, *pulse)?;
                let n = ((to - from) / step).floor() as usize;
                let grid: Vec<f64> = (0..=n).map(|i| from + step * i as f64).collect();
                let data = simulate_scan(&params, &grid, *trials, seed.seed)?;
                let mut t = Table::new(&["freq_offset_khz", "successes", "trials"]);
                for p in &data {
                    t.push(vec![p.frequency_offset.into(), p.successes.into(), p.trials.into()]);
                }
                debug_assert_eq!(t.csv(), scan_csv(&data));
                Output::Table(t)
            }
            SpectrumAction::Fit {
                input,
                peaks,
                pulse,
                plot,
            } => {
                let data = with_file(input, parse_scan_csv(&read_text(input)?))?;
                let fit = fit_spectrum(&data, *peaks, *pulse, None)?;
                let lo = data.iter().map(|p| p.frequency_offset).fold(f64::INFINITY, f64::min);
                let hi = data.iter().map(|p| p.frequency_offset).fold(f64::NEG_INFINITY, f64::max);
                write_plot(&fit, plot, lo, hi)?;
                fit_output(&fit)
            }
        },

        Command::Flop { action } => match action {
            FlopAction::Sim {
                rabi,
                hwhm,
                contrast,
                offset,
                to,
                step,
                trials,
                seed,
            } => {
                if !(*step > 0.0) || !(*to >= 0.0) {
                    bail!("need a positive --step and non-negative --to");
                }
                let params = FlopParams {
                    rabi: *rabi,
                    envelope_hwhm: *hwhm,
                    contrast: *contrast,
                    offset: *offset,
                };
                let n = (to / step).floor() as usize;
                let times: Vec<f64> = (0..=n).map(|i| step * i as f64).collect();
                let data = simulate_flop(&params, &times, *trials, seed.seed)?;
                let mut t = Table::new(&["time_us", "successes", "trials"]);
                for p in &data {
                    t.push(vec![p.time_us.into(), p.successes.into(), p.trials.into()]);
                }
                debug_assert_eq!(t.csv(), flop_csv(&data));
                Output::Table(t)
            }
            FlopAction::Fit { input, plot } => {
                let data = with_file(input, parse_flop_csv(&read_text(input)?))?;
                let fit = fit_flop(&data)?;
                let hi = data.iter().map(|p| p.time_us).fold(0.0, f64::max);
                write_plot(&fit, plot, 0.0, hi)?;
                fit_output(&fit)
            }
        },

        Command::Decay { input, model } => {
            let data = with_file(input, parse_decay_csv(&read_text(input)?))?;
            let model = match model {
                DecayArg::Gaussian => DecayModel::Gaussian,
                DecayArg::Exponential => DecayModel::Exponential,
            };
            fit_output(&fit_decay(&data, model)?)
        }

        Command::Coherence { action } => match action {
            CoherenceAction::Ramsey { noise, delays } => {
                let points = noise.monte_carlo().ramsey(&noise.model()?, delays)?;
                let table = contrast_table("delay_ms", &points);
                if noise.fit {
                    with_decay_fit(table, &points, DecayModel::Gaussian)?
                } else {
                    Output::Table(table)
                }
            }
            CoherenceAction::Echo { noise, echo, totals } => {
                let schedules = totals
                    .iter()
                    .map(|t| PulseSchedule::parse_periodic(echo, *t))
                    .collect::<gradkit::Result<Vec<_>>>()?;
                let points = noise.monte_carlo().run(&noise.model()?, &schedules)?;
                let table = contrast_table("total_ms", &points);
                if noise.fit {
                    with_decay_fit(table, &points, DecayModel::Exponential)?
                } else {
                    Output::Table(table)
                }
            }
        },

        Command::Optimize {
            current,
            budget,
            seed,
            bounds,
            start,
            residual_max,
            power_max,
            sheet_resistance,
            trace,
        } => {
            let mut init = match start {
                StartArg::Reference => SGeometryParams::reference(),
                StartArg::Detuned => detuned_start(),
            };
            let mut b = ParamBounds::default();
            if let Some(path) = bounds {
                with_file(path, read_bounds(path, &mut b, &mut init))?;
            }
            let spec = OptimizeSpec {
                current_ma: *current,
                bounds: b,
                constraints: Constraints {
                    residual_max_mg: *residual_max,
                    power_max_mw: *power_max,
                    sheet_resistance_ohm: *sheet_resistance,
                    ..Constraints::default()
                },
                budget: *budget,
                seed: seed.seed,
            };
            let out = optimize(&spec, &init)?;
            if let Some(p) = trace {
                fs::write(p, trace_csv(&out.trace)).with_context(|| format!("cannot write {}", p.display()))?;
            }
            let paths = build_geometry(&out.best, *current)?;
            let m = &out.metrics;
            let best = &out.best;
            let pairs = [
                ("s_leg_length_um", best.s_leg_length.to_string()),
                ("s_leg_pitch_um", best.s_leg_pitch.to_string()),
                ("trace_width_um", best.trace_width.to_string()),
                ("return_path_offset_um", best.return_path_offset.to_string()),
                ("n_s_turns", best.n_s_turns.to_string()),
                ("trap_height_um", best.trap_height.to_string()),
                ("current_ma", current.to_string()),
                ("gradient_g_per_mm", m.gradient.to_string()),
                ("residual_mg", m.residual.to_string()),
                ("power_mw", m.power.to_string()),
                ("gradient_inhomogeneity", m.gradient_inhomogeneity.to_string()),
                ("feasible", m.feasible.to_string()),
                ("evaluations", out.trace.len().to_string()),
            ];
            let text = format!("{}{}", write_geometry(&paths), comment_block(&pairs));
            let json = json!({
                "geometry": write_geometry(&paths),
                "metrics": pairs.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
            });
            Output::Document { text, json }
        }

        Command::Report { seed } => {
            let rows = report::reproduce(seed.seed)?;
            let text = report::render(&rows);
            let mut t = Table::new(&["quantity", "unit", "computed", "computed_std_error", "published"]);
            for r in &rows {
                t.push(vec![
                    r.quantity.into(),
                    r.unit.into(),
                    r.computed.into(),
                    r.uncertainty.into(),
                    r.published.into(),
                ]);
            }
            Output::Document { text, json: t.json() }
        }
    })
}

/// 1 for bad input (parse or I/O problems), 2 for failed computations.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gradkit::Error>() {
            return match e {
                gradkit::Error::Parse { .. } | gradkit::Error::Io(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = run(&cli).and_then(|out| {
        let text = out.render(cli.json);
        match &cli.output {
            Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .context("cannot write to stdout"),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
