use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use timeleak::estimation::{fit_response, FitOptions, TimingHistogram};
use timeleak::leakage::{delay_sweep, leakage_report, ReportOptions, DEFAULT_PHASES};
use timeleak::simulation::{
    attack_report, detector_counts, eve_map_attack, publish, read_events, read_public, simulate_session_with,
    write_events, write_public, Background, SessionOptions,
};
use timeleak::{DetectorResponse, Error, ReceiverModel};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Timing side-channel analysis for QKD detector timestamps.
///
/// Times accept a `ps` (default) or `ns` suffix, e.g. `500`, `500ps`, `0.5ns`.
#[derive(Debug, Parser)]
#[command(name = "timeleak", version)]
struct Cli {
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write the rendered result here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    /// TOML.
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a detector response to a `time_ps,count` histogram.
    Fit(FitArgs),
    /// Leakage of a receiver: continuous, binned and compensated.
    Leak(LeakArgs),
    /// Leakage versus relative delay for two equally shaped detectors (TSV).
    Sweep(SweepArgs),
    /// Simulate a session and write event and public-record CSV files.
    Simulate(SimulateArgs),
    /// Run the MAP eavesdropper on a public record and score it.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    histogram: PathBuf,
    /// Add a uniform background fraction to the model.
    #[arg(long)]
    background: bool,
    /// Starting t0; the other starting values default to the moment seed.
    #[arg(long, value_parser = parse_time)]
    t0: Option<f64>,
    #[arg(long, value_parser = parse_time)]
    tau_e: Option<f64>,
    #[arg(long, value_parser = parse_time)]
    tau_g: Option<f64>,
    /// Refuse histograms with fewer events (never below 1000).
    #[arg(long, default_value_t = timeleak::estimation::MIN_EVENTS)]
    min_events: u64,
    #[arg(long, default_value_t = timeleak::estimation::MAX_ITERATIONS)]
    max_iterations: usize,
}

#[derive(Debug, Args)]
struct LeakArgs {
    /// Receiver config file, or `table1` for the bundled receiver.
    #[arg(default_value = "table1")]
    receiver: String,
    /// Comma-separated bin widths for binned leakage.
    #[arg(long, value_delimiter = ',', value_parser = parse_time)]
    bin_widths: Vec<f64>,
    /// Bin phase offsets averaged per width.
    #[arg(long, default_value_t = DEFAULT_PHASES)]
    phases: usize,
    /// Also report leakage after equalizing detector offsets.
    #[arg(long)]
    compensate: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_time)]
    tau_e: f64,
    #[arg(long, value_parser = parse_time)]
    tau_g: f64,
    #[arg(long, value_parser = parse_time, default_value = "0")]
    from: f64,
    #[arg(long, value_parser = parse_time, default_value = "2000")]
    to: f64,
    #[arg(long, value_parser = parse_time, default_value = "100")]
    step: f64,
    #[arg(long, value_delimiter = ',', value_parser = parse_time)]
    bin_widths: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_PHASES)]
    phases: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(default_value = "table1")]
    receiver: String,
    /// Number of events.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    public: PathBuf,
    /// Round public timestamps to this resolution.
    #[arg(long, value_parser = parse_time)]
    resolution: Option<f64>,
    /// Fraction of events replaced by uniform background clicks.
    #[arg(long, requires = "frame")]
    background_fraction: Option<f64>,
    /// Background frame as `start,end`.
    #[arg(long, value_delimiter = ',', num_args = 2, value_parser = parse_time)]
    frame: Vec<f64>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(default_value = "table1")]
    receiver: String,
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Resolution the public timestamps were rounded to.
    #[arg(long, value_parser = parse_time)]
    resolution: Option<f64>,
}

/// Picoseconds from `123`, `123ps` or `0.123ns`.
fn parse_time(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, scale) = if let Some(v) = s.strip_suffix("ns") {
        (v, 1000.0)
    } else if let Some(v) = s.strip_suffix("ps") {
        (v, 1.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a time (examples: 500, 500ps, 0.5ns)"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v * scale)
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn from_lib(context: &str, e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidArgument(_) | Error::Validation { .. } => EXIT_USAGE,
            Error::Domain(_) | Error::InsufficientData(_) | Error::Parse { .. } | Error::Io(_) => EXIT_DATA,
        };
        Failure {
            code,
            message: format!("{context}: {e}"),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Fit(a) => fit(cli, a),
        Command::Leak(a) => leak(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Attack(a) => attack(cli, a),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.output {
        Some(path) => fs::write(path, text).map_err(|e| Failure::from_lib(&path.display().to_string(), e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::from_lib(&path.display().to_string(), e.into()))
}

fn load_receiver(source: &str) -> Result<ReceiverModel, Failure> {
    if source == "table1" {
        return Ok(ReceiverModel::table1());
    }
    let text = fs::read_to_string(source).map_err(|e| Failure::from_lib(source, e.into()))?;
    ReceiverModel::from_toml_str(&text).map_err(|e| Failure::from_lib(source, e))
}

fn fit(cli: &Cli, a: &FitArgs) -> Outcome {
    let name = a.histogram.display().to_string();
    let hist = TimingHistogram::read_csv(open(&a.histogram)?).map_err(|e| Failure::from_lib(&name, e))?;
    let guess = if a.t0.is_some() || a.tau_e.is_some() || a.tau_g.is_some() {
        let seed = timeleak::estimation::initial_guess(&hist);
        let g = DetectorResponse::new(
            a.t0.unwrap_or(seed.t0()),
            a.tau_e.unwrap_or(seed.tau_e()),
            a.tau_g.unwrap_or(seed.tau_g()),
        )
        .map_err(|e| Failure::from_lib("guess", e))?;
        Some(g)
    } else {
        None
    };
    let opts = FitOptions {
        guess,
        background: a.background,
        min_events: a.min_events,
        max_iterations: a.max_iterations,
    };
    let res = fit_response(&hist, &opts).map_err(|e| Failure::from_lib(&name, e))?;
    let text = match cli.format {
        Format::Text => res.render_text(),
        Format::Structured => res.to_toml(),
    };
    emit(cli, &text)?;
    if res.converged {
        Ok(0)
    } else {
        eprintln!("error: {name}: fit did not converge");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn leak(cli: &Cli, a: &LeakArgs) -> Outcome {
    let rcv = load_receiver(&a.receiver)?;
    let opts = ReportOptions {
        bin_widths_ps: a.bin_widths.clone(),
        phases: a.phases,
        compensate: a.compensate,
    };
    let rep = leakage_report(&rcv, &opts).map_err(|e| Failure::from_lib("leak", e))?;
    emit(
        cli,
        &match cli.format {
            Format::Text => rep.render_text(),
            Format::Structured => rep.to_toml(),
        },
    )?;
    Ok(0)
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Outcome {
    if a.step <= 0.0 {
        return Err(Failure::usage(format!("--step must be > 0, got {}", a.step)));
    }
    if a.to < a.from {
        return Err(Failure::usage(format!("empty delay range: --from {} is after --to {}", a.from, a.to)));
    }
    let count = ((a.to - a.from) / a.step + 1e-9).floor() as usize + 1;
    let delays: Vec<f64> = (0..count).map(|k| a.from + k as f64 * a.step).collect();
    let res =
        delay_sweep(a.tau_e, a.tau_g, &delays, &a.bin_widths, a.phases).map_err(|e| Failure::from_lib("sweep", e))?;
    emit(
        cli,
        &match cli.format {
            Format::Text => res.to_tsv(),
            Format::Structured => res.to_toml(),
        },
    )?;
    Ok(0)
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> timeleak::Result<()>) -> Result<(), Failure> {
    let name = path.display().to_string();
    let file = File::create(path).map_err(|e| Failure::from_lib(&name, e.into()))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|e| Failure::from_lib(&name, e))?;
    w.flush().map_err(|e| Failure::from_lib(&name, e.into()))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Outcome {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let rcv = load_receiver(&a.receiver)?;
    let background = a.background_fraction.map(|fraction| Background {
        fraction,
        frame: (a.frame[0], a.frame[1]),
    });
    let events = simulate_session_with(&rcv, a.n, cli.seed, &SessionOptions { background })
        .map_err(|e| Failure::from_lib("simulate", e))?;
    let public = publish(&events, a.resolution).map_err(|e| Failure::from_lib("--resolution", e))?;
    write_file(&a.events, |w| write_events(&events, w))?;
    write_file(&a.public, |w| write_public(&public, w))?;

    let counts = detector_counts(&events);
    let text = match cli.format {
        Format::Text => counts
            .iter()
            .enumerate()
            .map(|(k, c)| format!("detector {}  {c}\n", k + 1))
            .collect::<String>(),
        Format::Structured => format!(
            "events = {}\nseed = {}\ndetector_counts = [{}]\n",
            a.n,
            cli.seed,
            counts.map(|c| c.to_string()).join(", ")
        ),
    };
    emit(cli, &text)?;
    Ok(0)
}

fn attack(cli: &Cli, a: &AttackArgs) -> Outcome {
    let rcv = load_receiver(&a.receiver)?;
    let pub_name = a.public.display().to_string();
    let ev_name = a.events.display().to_string();
    let public = read_public(open(&a.public)?).map_err(|e| Failure::from_lib(&pub_name, e))?;
    let events = read_events(open(&a.events)?).map_err(|e| Failure::from_lib(&ev_name, e))?;
    if public.len() != events.len() {
        return Err(Failure::usage(format!(
            "length mismatch: {pub_name} has {} records, {ev_name} has {}",
            public.len(),
            events.len()
        )));
    }
    let guesses = eve_map_attack(&public, &rcv, a.resolution).map_err(|e| Failure::from_lib("attack", e))?;
    let out = attack_report(&events, &guesses, &rcv, a.resolution).map_err(|e| Failure::from_lib("attack", e))?;
    emit(
        cli,
        &match cli.format {
            Format::Text => out.render_text(),
            Format::Structured => out.to_toml(),
        },
    )?;
    Ok(0)
}
