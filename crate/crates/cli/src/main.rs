//! `csmqc` command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use csmqc::characterize::{characterize_qubit, fit_rotation_axis, AxisFit, BlochPoint};
use csmqc::crosstalk::{hsa_crosstalk, HsaParameterSet};
use csmqc::protocol::multi_set_layout_from_deltas;
use csmqc_experiments::config::{DetectionConfig, FalsePositiveConfig, FilteringConfig, SweepConfig};
use csmqc_experiments::{detection, filtering, sweeps, ExpError, ExperimentResult, Manifest};

mod validate;

#[derive(Parser, Debug)]
#[command(name = "csmqc", version, about = "Spectator-qubit crosstalk detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// False-positive rate from idle noise alone.
    SweepFp(RunArgs),
    /// False-negative rate against ZZ and pair-coupling ratios.
    SweepFn(RunArgs),
    /// False-negative rate over the full ratio grid.
    GridFn(RunArgs),
    /// Detection success under HSA-model crosstalk.
    DetectRate(RunArgs),
    /// Bell-pair idle tomography with post-selection.
    BellIdt(RunArgs),
    /// Random-circuit fidelity with post-selection.
    RandomCircuit(RunArgs),
    /// Flag rate of the constant-period baseline alone.
    Baseline(RunArgs),
    /// Rotation axis and angle from Bloch points or HSA parameters.
    FitAxis(RunArgs),
    /// Channel and protocol self-checks.
    Validate(RunArgs),
    /// Spectator sets for a list of per-event angles.
    Plan(PlanArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum EngineArg {
    Pure,
    Density,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV and manifest.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Simulation engine, for the false-negative sweeps.
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Comma-separated per-event Bloch angles of the candidates.
    #[arg(long)]
    deltas: String,
    #[arg(long)]
    max_count: usize,
}

fn read_config(args: &RunArgs) -> Result<Map<String, Value>, ExpError> {
    let mut map = match &args.config {
        Some(p) => match serde_json::from_str::<Value>(&std::fs::read_to_string(p)?)? {
            Value::Object(m) => m,
            _ => return Err(ExpError::Config("configuration must be a JSON object".into())),
        },
        None => Map::new(),
    };
    if let Some(s) = args.seed {
        map.insert("seed".into(), s.into());
    }
    if let Some(m) = args.mode {
        map.insert("mode".into(), Value::from(format!("{m:?}").to_lowercase()));
    }
    if let Some(e) = args.engine {
        map.insert("engine".into(), Value::from(format!("{e:?}").to_lowercase()));
    }
    Ok(map)
}

/// Defaults overlaid with the file and flag values, so the manifest records
/// every field that shaped the run.
fn load<T: DeserializeOwned + Serialize + Default>(args: &RunArgs) -> Result<(T, Value), ExpError> {
    let mut full = match serde_json::to_value(T::default())? {
        Value::Object(m) => m,
        _ => unreachable!("configs serialize as objects"),
    };
    full.extend(read_config(args)?);
    let value = Value::Object(full);
    let cfg = T::deserialize(&value)?;
    let value = serde_json::to_value(&cfg)?;
    Ok((cfg, value))
}

fn write_outputs(out: &Path, result: &ExperimentResult, config: &Value, seed: u64, start: Instant) -> Result<(), ExpError> {
    result.check().map_err(|e| ExpError::Numerical(csmqc::Error::Engine(e)))?;
    std::fs::create_dir_all(out)?;
    let csv = out.join(format!("{}.csv", result.experiment));
    std::fs::write(&csv, result.to_csv())?;
    let manifest = Manifest::new(result, config, seed, start.elapsed().as_secs_f64());
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("wrote {} ({} rows)", csv.display(), result.rows.len());
    Ok(())
}

fn run_experiment<T, F>(args: &RunArgs, f: F, seed_of: fn(&T) -> u64) -> Result<(), ExpError>
where
    T: DeserializeOwned + Serialize + Default,
    F: FnOnce(&T) -> Result<ExperimentResult, ExpError>,
{
    let start = Instant::now();
    let (cfg, value) = load::<T>(args)?;
    let result = f(&cfg)?;
    write_outputs(&args.out, &result, &value, seed_of(&cfg), start)
}

#[derive(serde::Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum FitInput {
    Points { points: [BlochPoint; 3] },
    Params { params: HsaParameterSet, n_qubits: usize, qubits: Vec<usize> },
}

#[derive(Serialize)]
struct QubitFit {
    qubit: Option<usize>,
    #[serde(flatten)]
    fit: AxisFit,
}

fn fit_axis(args: &RunArgs) -> Result<(), ExpError> {
    let Some(path) = &args.config else {
        return Err(ExpError::Config("fit-axis needs --config with points or params".into()));
    };
    let input: FitInput = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let fits = match input {
        FitInput::Points { points } => vec![QubitFit { qubit: None, fit: fit_rotation_axis(&points)? }],
        FitInput::Params { params, n_qubits, qubits } => {
            params.validate(n_qubits)?;
            let ch = hsa_crosstalk(&params, n_qubits)?;
            qubits
                .iter()
                .map(|&q| Ok(QubitFit { qubit: Some(q), fit: characterize_qubit(&ch, n_qubits, q)? }))
                .collect::<Result<_, csmqc::Error>>()?
        }
    };
    let text = serde_json::to_string_pretty(&fits)? + "\n";
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("fit_axis.json"), &text)?;
    print!("{text}");
    Ok(())
}

fn plan(args: &PlanArgs) -> Result<(), ExpError> {
    let deltas = args
        .deltas
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| ExpError::Config(format!("bad angle {s:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let layout = multi_set_layout_from_deltas(args.max_count, &deltas)?;
    println!("{}", serde_json::to_string_pretty(&layout)?);
    Ok(())
}

fn set_workers(args: &RunArgs) -> Result<(), ExpError> {
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(ExpError::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ExpError::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), ExpError> {
    match cmd {
        Command::Plan(a) => plan(&a),
        Command::SweepFp(a) => {
            set_workers(&a)?;
            run_experiment::<FalsePositiveConfig, _>(&a, sweeps::false_positive_sweep, |c| c.run.seed)
        }
        Command::SweepFn(a) => {
            set_workers(&a)?;
            run_experiment::<SweepConfig, _>(&a, sweeps::false_negative_sweep, |c| c.run.seed)
        }
        Command::GridFn(a) => {
            set_workers(&a)?;
            run_experiment::<SweepConfig, _>(&a, sweeps::grid_false_negative, |c| c.run.seed)
        }
        Command::DetectRate(a) => {
            set_workers(&a)?;
            run_experiment::<DetectionConfig, _>(&a, detection::detection_rate_experiment, |c| c.run.seed)
        }
        Command::BellIdt(a) => {
            set_workers(&a)?;
            run_experiment::<FilteringConfig, _>(&a, filtering::bell_idt_experiment, |c| c.run.seed)
        }
        Command::RandomCircuit(a) => {
            set_workers(&a)?;
            run_experiment::<FilteringConfig, _>(&a, filtering::random_circuit_experiment, |c| c.run.seed)
        }
        Command::Baseline(a) => {
            set_workers(&a)?;
            run_experiment::<FilteringConfig, _>(&a, filtering::constant_period_baseline, |c| c.run.seed)
        }
        Command::FitAxis(a) => fit_axis(&a),
        Command::Validate(a) => validate::run(&a.config, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
