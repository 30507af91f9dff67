use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use delayrc::benchmarks::{baseline_linear, run_narma10, NarmaSequence, Split};
use delayrc::capacity::memory_capacity;
use delayrc::dde::Simulator;
use delayrc::reservoir::{build_drive, harvest, InputSequence};
use delayrc::spectra::{
    operating_spectrum, predictors, refine_spectrum, resonance_distance, write_spectrum_csv,
    NewtonOptions, DEFAULT_BAND,
};
use delayrc::sweep::{fmt9, run_sweep, ExperimentConfig, PointSetup, SCHEMA};
use serde_json::json;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Delay-based laser reservoir computing: simulation, memory capacity,
/// NARMA10, eigenvalue predictors and parameter sweeps.
#[derive(Parser, Debug)]
#[command(name = "delayrc", version)]
struct Cli {
    /// Worker threads for sweeps and capacity evaluation.
    #[arg(long, global = true, env = "DELAYRC_JOBS")]
    jobs: Option<usize>,

    /// Use full-length defaults (250000 rows, degree 5, 500 delays) instead of desk scale.
    #[arg(long, global = true)]
    paper_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output file; stdout when omitted (or the path in the config's `output` block).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Dotted overrides such as `laser.kappa=0.1` or `reservoir.n_virtual=20`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the laser and dump the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated time.
        #[arg(long, default_value_t = 1000.0)]
        duration: f64,
        /// Time between output samples.
        #[arg(long, default_value_t = 1.0)]
        every: f64,
        /// Number of reservoir inputs injected from t = 0 (0 for a free-running laser).
        #[arg(long, default_value_t = 0)]
        inputs: usize,
    },
    /// Memory capacity of a single operating point as JSON.
    Capacity {
        #[command(flatten)]
        common: Common,
    },
    /// NARMA10 train/test NRMSE and the no-reservoir baseline as JSON.
    Narma10 {
        #[command(flatten)]
        common: Common,
        /// Lags of the baseline regression; defaults to the number of virtual nodes.
        #[arg(long)]
        lags: Option<usize>,
    },
    /// Eigenvalue spectrum and predictors as JSON.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Also write the spectrum as CSV (Re, Im, branch, k, Phi, Lambda).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Newton-refine the pseudocontinuous spectrum.
        #[arg(long)]
        refine: bool,
    },
    /// Evaluate every grid point of the configured axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write the full result (with timings) as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Phi_hat / Lambda_hat over the grid with resonance flags, without simulation.
    Lines {
        #[command(flatten)]
        common: Common,
        /// Half width of the resonance band around 0 and pi.
        #[arg(long, default_value_t = DEFAULT_BAND)]
        band: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<delayrc::Error> for Failure {
    fn from(e: delayrc::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_config(common: &Common, paper_scale: bool) -> Result<ExperimentConfig, Failure> {
    let (text, name) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Config(format!("{}: cannot read config: {e}", path.display()))
            })?;
            (text, path.display().to_string())
        }
        None => ("{}".to_string(), "<defaults>".to_string()),
    };
    ExperimentConfig::load(&text, paper_scale, &common.overrides).map_err(|e| match e {
        delayrc::Error::Config {
            message,
            line: Some(line),
        } => Failure::Config(format!("{name}:{line}: {message}")),
        other => Failure::Config(format!("{name}: {other}")),
    })
}

fn single_point(cfg: &ExperimentConfig) -> Result<PointSetup, Failure> {
    if !cfg.axes.is_empty() {
        return Err(Failure::Config(
            "this subcommand evaluates one point; remove the sweep axes or use `sweep`".into(),
        ));
    }
    Ok(cfg.point(0)?)
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn output_path<'a>(common: &'a Common, fallback: Option<&'a String>) -> Option<&'a Path> {
    common
        .output
        .as_deref()
        .or(fallback.map(|s| Path::new(s.as_str())))
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut w = open_output(path).context("opening output")?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Simulate {
            common,
            duration,
            every,
            inputs,
        } => {
            let cfg = load_config(common, cli.paper_scale)?;
            let p = single_point(&cfg)?;
            simulate(&p, common, *duration, *every, *inputs)?;
            Ok(0)
        }
        Command::Capacity { common } => {
            let cfg = load_config(common, cli.paper_scale)?;
            let p = single_point(&cfg)?;
            let buffer = cfg.data.buffer;
            let inputs = InputSequence::uniform(buffer + cfg.data.rows, -1.0, 1.0, p.seeds.input);
            let states = harvest(
                &p.laser,
                &p.clocking()?,
                &inputs,
                &p.harvest_config(&cfg.data, buffer),
            )?;
            let report = memory_capacity(&states, &inputs.values, buffer, &cfg.capacity)?;
            let value = serde_json::to_value(&report).map_err(anyhow::Error::from)?;
            write_json(output_path(common, cfg.output.json.as_ref()), &value)?;
            Ok(0)
        }
        Command::Narma10 { common, lags } => {
            let cfg = load_config(common, cli.paper_scale)?;
            let p = single_point(&cfg)?;
            let hc = p.harvest_config(&cfg.data, cfg.data.buffer);
            let r = run_narma10(&p.laser, &p.clocking()?, &cfg.narma, &hc, p.seeds.input)?;
            let n_lags = lags.unwrap_or(p.n_virtual);
            let seq = NarmaSequence::generate(
                cfg.narma.burn_in + cfg.narma.train + cfg.narma.test,
                p.seeds.input,
            )?;
            let base = baseline_linear(
                &seq.inputs.values,
                &seq.targets,
                n_lags,
                Split {
                    start: cfg.narma.burn_in,
                    train: cfg.narma.train,
                    test: cfg.narma.test,
                },
            )?;
            let value = json!({
                "schema": SCHEMA,
                "train_nrmse": r.train_nrmse,
                "test_nrmse": r.test_nrmse,
                "baseline_lags": n_lags,
                "baseline_train_nrmse": base.train_nrmse,
                "baseline_test_nrmse": base.test_nrmse,
            });
            write_json(output_path(common, cfg.output.json.as_ref()), &value)?;
            Ok(0)
        }
        Command::Spectrum {
            common,
            csv,
            refine,
        } => {
            let cfg = load_config(common, cli.paper_scale)?;
            let p = single_point(&cfg)?;
            let n = cfg.run.eigenvalues;
            let mut s = operating_spectrum(&p.laser, n)?;
            if (*refine || cfg.run.refine) && p.laser.kappa != 0.0 {
                s = refine_spectrum(&s, &NewtonOptions::default())?;
            }
            let n_used = if p.laser.kappa == 0.0 {
                1
            } else {
                n.min(s.len())
            };
            let pr = predictors(&s, p.clock_cycle, n_used)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = csv {
                let f =
                    File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_spectrum_csv(&s, p.clock_cycle, BufWriter::new(f))?;
            }
            let value = json!({
                "schema": SCHEMA,
                "clock_cycle": p.clock_cycle,
                "spectrum": s,
                "predictors": pr,
            });
            write_json(output_path(common, cfg.output.json.as_ref()), &value)?;
            Ok(0)
        }
        Command::Sweep { common, json } => {
            let cfg = load_config(common, cli.paper_scale)?;
            let result = run_sweep(&cfg)?;
            let mut w = open_output(output_path(common, cfg.output.csv.as_ref()))?;
            result.write_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = json
                .as_deref()
                .or(cfg.output.json.as_deref().map(Path::new))
            {
                let value = serde_json::to_value(&result).map_err(anyhow::Error::from)?;
                write_json(Some(path), &value)?;
            }
            Ok(report_failures(result.failures(), result.records.len()))
        }
        Command::Lines { common, band } => {
            let mut cfg = load_config(common, cli.paper_scale)?;
            cfg.run.capacity = false;
            cfg.run.narma = false;
            cfg.run.spectra = true;
            let result = run_sweep(&cfg)?;
            let mut w = csv_writer(output_path(common, cfg.output.csv.as_ref()))?;
            let mut header = vec!["index".to_string()];
            header.extend(result.axes.iter().cloned());
            header.extend(
                [
                    "clock_cycle_used",
                    "tau_used",
                    "phi_hat",
                    "lambda_hat",
                    "distance",
                    "resonant",
                    "error",
                ]
                .map(String::from),
            );
            w.write_record(&header).map_err(anyhow::Error::from)?;
            for r in &result.records {
                let mut row = vec![r.index.to_string()];
                row.extend(r.coordinates.iter().map(|&v| fmt9(v)));
                row.push(fmt9(r.clock_cycle));
                row.push(fmt9(r.tau));
                let dist = r.phi_hat.map(resonance_distance);
                row.push(r.phi_hat.map(fmt9).unwrap_or_default());
                row.push(r.lambda_hat.map(fmt9).unwrap_or_default());
                row.push(dist.map(fmt9).unwrap_or_default());
                row.push(dist.map(|d| (d <= *band).to_string()).unwrap_or_default());
                row.push(r.errors.join("; "));
                w.write_record(&row).map_err(anyhow::Error::from)?;
            }
            w.flush()?;
            Ok(report_failures(result.failures(), result.records.len()))
        }
    }
}

fn csv_writer(path: Option<&Path>) -> io::Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(open_output(path)?))
}

fn report_failures(failed: usize, total: usize) -> u8 {
    if failed == 0 {
        0
    } else {
        eprintln!("{failed} of {total} grid points failed; see the error column");
        EXIT_PARTIAL
    }
}

fn simulate(
    p: &PointSetup,
    common: &Common,
    duration: f64,
    every: f64,
    n_inputs: usize,
) -> Result<(), Failure> {
    let dt = p.laser.dt;
    if !(duration > 0.0 && every > 0.0) {
        bail_config("--duration and --every must be positive")?;
    }
    let steps = (duration / dt).round() as usize;
    let stride = ((every / dt).round() as usize).max(1);
    let drive = if n_inputs > 0 {
        let inputs = InputSequence::uniform(n_inputs, -1.0, 1.0, p.seeds.input);
        Some(build_drive(&inputs.values, &p.clocking()?, 0.0)?)
    } else {
        None
    };
    let mut sim = Simulator::new(&p.laser, Default::default(), p.seeds.noise)?;
    let mut w = csv_writer(common.output.as_deref())?;
    let row = |w: &mut csv::Writer<Box<dyn Write>>, sim: &Simulator| -> anyhow::Result<()> {
        let s = sim.state();
        w.write_record([
            fmt9(sim.time()),
            fmt9(s.e_re),
            fmt9(s.e_im),
            fmt9(s.n),
            fmt9(s.intensity()),
        ])?;
        Ok(())
    };
    w.write_record(["t", "e_re", "e_im", "n", "intensity"])
        .map_err(anyhow::Error::from)?;
    row(&mut w, &sim)?;
    for k in 0..steps {
        // segment boundaries lie on the grid, so the step midpoint picks the segment
        let u = drive
            .as_ref()
            .map_or(0.0, |d| d.value_at((k as f64 + 0.5) * dt));
        sim.step(u);
        if (k + 1) % stride == 0 {
            row(&mut w, &sim)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bail_config(msg: &str) -> Result<(), Failure> {
    Err(Failure::Config(msg.to_string()))
}
