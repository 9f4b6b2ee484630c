use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use wpd_core::duality::{noncontextual_line, tradeoff_sweep, write_curves_csv, TradeoffCurve};
use wpd_core::interferometer::{sample_counts, CountsTable, NoiseModel, WHICH_PHASE, WHICH_WAY};
use wpd_core::ontic::{nc_model_feasibility_on, OnticSpace, SOLVER_TOL};
use wpd_core::orbit::{check_orbit, OrbitQuadruple};
use wpd_core::pipeline::{ideal_witness, run_pipeline, Experiment, PipelineConfig};
use wpd_core::secondary::{find_secondary_quadruple, witness_report, ORBIT_TOL};
use wpd_core::tomography::{fit_gpt, TomographyFit};
use wpd_core::StateSpaceModel;

#[derive(Parser, Debug)]
#[command(
    name = "wpd",
    version,
    about = "Wave-particle duality as a contextuality witness"
)]
struct Cli {
    /// Report errors as JSON on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tradeoff curves for several state spaces plus the noncontextual line.
    #[command(allow_negative_numbers = true)]
    Curves {
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Witness of the ideal pipeline at reflectivity R.
    #[command(allow_negative_numbers = true)]
    Witness {
        #[arg(long)]
        r: f64,
        /// Depolarizing strength.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the orbit conditions of a quadruple JSON file.
    #[command(allow_negative_numbers = true)]
    OrbitCheck {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Decide whether a quadruple admits a noncontextual model.
    #[command(allow_negative_numbers = true)]
    NcModel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = SOLVER_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Space::Deterministic)]
        space: Space,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample outcome counts for the fiducial experiment.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit GPT states and effects to a counts CSV.
    #[command(allow_negative_numbers = true)]
    Tomography {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Secondary quadruple and witness report from a tomography fit.
    #[command(allow_negative_numbers = true)]
    Secondary {
        #[arg(long)]
        fit: PathBuf,
        /// Preparations to mix (default: all fitted preparations).
        #[arg(long, value_delimiter = ',')]
        preps: Vec<String>,
        #[arg(long, default_value = WHICH_WAY)]
        m: String,
        #[arg(long, default_value = WHICH_PHASE)]
        m_prime: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, fit, build the secondary quadruple and report.
    #[command(allow_negative_numbers = true)]
    Pipeline {
        #[arg(long, default_value_t = 0.75)]
        r: f64,
        #[arg(long, default_value_t = 100_000)]
        shots: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
        ranks: Vec<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Deterministic,
    CoinFlips,
    Grid16,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Files are only written once every result is in hand.
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: String,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            files: Vec::new(),
            stdout: String::new(),
        }
    }

    fn file(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    /// Writes to `path` if given, otherwise to stdout.
    fn file_or_stdout(&mut self, path: Option<PathBuf>, bytes: Vec<u8>) {
        match path {
            Some(p) => self.file(p, bytes),
            None => self.stdout.push_str(&String::from_utf8_lossy(&bytes)),
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.push_str(s.as_ref());
        self.stdout.push('\n');
    }

    fn flush(self) -> anyhow::Result<()> {
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        io::stdout().write_all(self.stdout.as_bytes())?;
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!(wpd_core::Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {v}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> anyhow::Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!(wpd_core::Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pretty(v: &impl serde::Serialize) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn run(command: Command) -> anyhow::Result<Outputs> {
    let mut out = Outputs::new();
    match command {
        Command::Curves { grid, out_dir } => {
            if grid < 2 {
                bail!(wpd_core::Error::InvalidParameter(format!(
                    "grid must be >= 2, got {grid}"
                )));
            }
            let spaces = [
                StateSpaceModel::disc(3),
                StateSpaceModel::diamond(3),
                StateSpaceModel::square(3),
                StateSpaceModel::regular_polygon(3, 6)?,
            ];
            let line = noncontextual_line(grid)?;
            let mut curves: Vec<TradeoffCurve> = Vec::new();
            for space in &spaces {
                curves.push(tradeoff_sweep(space, grid)?);
            }
            for c in curves.iter().chain(std::iter::once(&line)) {
                let mut buf = Vec::new();
                c.write_csv(&mut buf)?;
                out.file(out_dir.join(format!("{}.csv", c.label)), buf);
                out.line(format!("{}: {} points", c.label, c.points.len()));
            }
            let mut both = Vec::new();
            write_curves_csv(&[curves[0].clone(), line], &mut both)?;
            out.file(out_dir.join("comparison.csv"), both);
        }
        Command::Witness {
            r,
            noise,
            out: path,
        } => {
            check_unit("r", r)?;
            check_unit("noise", noise)?;
            let (secondary, report) = ideal_witness(r, noise)?;
            out.line(format!("r = {r}, depolarizing = {noise}"));
            out.stdout.push_str(&report.summary());
            if let Some(p) = path {
                out.file(
                    p,
                    pretty(&json!({ "secondary": secondary, "report": report }))?,
                );
            }
        }
        Command::OrbitCheck { input, tol } => {
            check_positive("tol", tol)?;
            let q: OrbitQuadruple = serde_json::from_str(&read(&input)?)?;
            let q = OrbitQuadruple::new(q.states, q.m, q.m_prime)?;
            out.file_or_stdout(None, pretty(&check_orbit(&q, tol)?)?);
        }
        Command::NcModel {
            input,
            tol,
            space,
            out: path,
        } => {
            check_positive("tol", tol)?;
            let q: OrbitQuadruple = serde_json::from_str(&read(&input)?)?;
            let q = OrbitQuadruple::new(q.states, q.m, q.m_prime)?;
            let space = match space {
                Space::Deterministic => OnticSpace::deterministic(),
                Space::CoinFlips => OnticSpace::with_coin_flips(),
                Space::Grid16 => OnticSpace::grid16(),
            };
            let result = nc_model_feasibility_on(&q, &space, tol)?;
            out.file_or_stdout(path, pretty(&result)?);
        }
        Command::Simulate {
            r,
            shots,
            seed,
            noise,
            bias,
            format,
            out: path,
        } => {
            check_unit("r", r)?;
            let noise = NoiseModel::new(noise, bias)?;
            let experiment = Experiment::standard(r)?;
            let counts = sample_counts(
                &experiment.noisy_states(&noise)?,
                &experiment.noisy_measurements(&noise)?,
                shots,
                seed,
            )?;
            let bytes = match format {
                Format::Csv => counts.to_csv_string()?.into_bytes(),
                Format::Json => pretty(&counts)?,
            };
            out.file_or_stdout(path, bytes);
        }
        Command::Tomography {
            input,
            ranks,
            seed,
            restarts,
            out: path,
        } => {
            let counts = CountsTable::read_csv(read(&input)?.as_bytes())?;
            let fit = fit_gpt(&counts, &ranks, seed, restarts)?;
            if path.is_some() {
                out.line(format!(
                    "rank {} (training residual {:.6e}, holdout residual {:.6e})",
                    fit.rank, fit.training_residual, fit.holdout_residual
                ));
            }
            out.file_or_stdout(path, pretty(&fit)?);
        }
        Command::Secondary {
            fit,
            preps,
            m,
            m_prime,
            out: path,
        } => {
            let fit = TomographyFit::from_json(&read(&fit)?)?;
            let realized = if preps.is_empty() {
                fit.states.clone()
            } else {
                preps
                    .iter()
                    .map(|id| {
                        fit.state(id).cloned().ok_or_else(|| {
                            wpd_core::Error::InvalidParameter(format!(
                                "no fitted preparation '{id}'"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let (m, m_prime) = (fit.measurement(&m)?, fit.measurement(&m_prime)?);
            let secondary = find_secondary_quadruple(&realized, &m, &m_prime, ORBIT_TOL)?;
            let report = witness_report(&secondary)?;
            out.stdout.push_str(&report.summary());
            if let Some(p) = path {
                out.file(
                    p,
                    pretty(&json!({ "secondary": secondary, "report": report }))?,
                );
            }
        }
        Command::Pipeline {
            r,
            shots,
            noise,
            seed,
            restarts,
            ranks,
            out_dir,
        } => {
            check_unit("r", r)?;
            check_unit("noise", noise)?;
            let config = PipelineConfig {
                reflectivity: r,
                depolarizing: noise,
                bias: 0.0,
                shots,
                seed,
                restarts,
                ranks,
            };
            config.validate()?;
            let res = run_pipeline(&config)?;
            out.line(format!(
                "fitted rank {}; alignment error {:.3e}; expectation error {:.3e}",
                res.fit.rank, res.alignment_error, res.expectation_error
            ));
            out.line(format!("ideal V + P {:.6}", res.ideal_witness));
            out.stdout.push_str(&res.report.summary());
            if let Some(dir) = out_dir {
                out.file(
                    dir.join("counts.csv"),
                    res.counts.to_csv_string()?.into_bytes(),
                );
                out.file(dir.join("fit.json"), pretty(&res.fit)?);
                out.file(dir.join("aligned_fit.json"), pretty(&res.aligned)?);
                out.file(dir.join("secondary.json"), pretty(&res.secondary)?);
                out.file(dir.join("report.json"), pretty(&res.report)?);
            }
        }
    }
    Ok(out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<wpd_core::Error>() {
        Some(e) if e.is_solver_failure() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli.command).and_then(Outputs::flush) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            if json {
                let kind = match code {
                    3 => "solver_failure",
                    _ => "validation_error",
                };
                eprintln!(
                    "{}",
                    json!({ "error": kind, "message": format!("{err:#}"), "exit_code": code })
                );
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}
