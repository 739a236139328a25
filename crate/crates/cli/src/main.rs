//! `timebin-amp`: run, sweep and verify the heralded time-bin amplifier.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or domain error,
//! 3 I/O error.

mod output;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use timebin_amp::analysis::{sweep, t_grid, Quantity, Source};
use timebin_amp::checks::{run_checks, Grid, GridSize};
use timebin_amp::protocol::{run_protocol, Conventions};
use timebin_amp::{DetectorModel, Error, ProtocolConfig};

use output::Branch;

const THREADS_ENV: &str = "TIMEBIN_AMP_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "timebin-amp",
    version,
    about = "Heralded amplifier for time-bin single-photon entanglement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one configuration and report probabilities, η' and the heralded state.
    Run(RunArgs),
    /// Tabulate p1, p2, P_t, η' and g over a grid of η and t.
    Sweep(SweepArgs),
    /// List the 16 heralding patterns with their probabilities and corrections.
    Patterns(PatternsArgs),
    /// Run the self-verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Amplitude of the early-horizontal component (derived from --beta when omitted).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Amplitude of the late-vertical component (derived from --alpha when omitted).
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Weight of the entangled component of the input, in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    eta: f64,
    /// Transmissivity of the variable beam splitters, in [0, 1].
    #[arg(long = "t", allow_negative_numbers = true)]
    t: f64,
    #[arg(long, value_enum, default_value_t = DetectorArg::NumberResolving)]
    detector: DetectorArg,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, value_enum, default_value_t = RunFormat::Json)]
    format: RunFormat,
    /// Omit the tool/version metadata block from JSON output.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated η values.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    eta_list: Vec<f64>,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    t_min: f64,
    #[arg(long, default_value_t = 0.99, allow_negative_numbers = true)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    t_step: f64,
    /// Quantity plotted by `--layout gnuplot`; the tidy layout always carries every column.
    #[arg(long, value_enum, default_value_t = QuantityArg::All)]
    quantity: QuantityArg,
    #[arg(long, value_enum, default_value_t = SourceArg::Closed)]
    source: SourceArg,
    /// Destination file; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
    format: SweepFormat,
    /// `tidy` writes one row per (η, t); `gnuplot` writes one column per η.
    #[arg(long, value_enum, default_value_t = Layout::Tidy)]
    layout: Layout,
    #[arg(long)]
    no_meta: bool,
}

#[derive(Args, Debug)]
struct PatternsArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, value_enum, default_value_t = Branch::Both)]
    branch: Branch,
    #[arg(long, value_enum, default_value_t = PatternsFormat::Table)]
    format: PatternsFormat,
    #[arg(long)]
    no_meta: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = GridArg::Quick)]
    grid: GridArg,
    /// Flip the sign in the beam-splitter matrix to demonstrate that the suite fails.
    #[arg(long, hide = true)]
    mutate_bs_sign: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DetectorArg {
    NumberResolving,
    Threshold,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RunFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PatternsFormat {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    Tidy,
    Gnuplot,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QuantityArg {
    G,
    EtaPrime,
    PTotal,
    P1,
    P2,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Closed,
    Brute,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridArg {
    Quick,
    Full,
}

impl ValueEnum for Branch {
    fn value_variants<'a>() -> &'a [Self] {
        &[Branch::Entangled, Branch::Both, Branch::Vacuum]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Branch::Entangled => "entangled",
            Branch::Both => "both",
            Branch::Vacuum => "vacuum",
        }))
    }
}

impl From<DetectorArg> for DetectorModel {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::NumberResolving => DetectorModel::NumberResolving,
            DetectorArg::Threshold => DetectorModel::Threshold,
        }
    }
}

impl QuantityArg {
    fn quantities(self) -> Vec<Quantity> {
        match self {
            QuantityArg::G => vec![Quantity::G],
            QuantityArg::EtaPrime => vec![Quantity::EtaPrime],
            QuantityArg::PTotal => vec![Quantity::PTotal],
            QuantityArg::P1 => vec![Quantity::P1],
            QuantityArg::P2 => vec![Quantity::P2],
            QuantityArg::All => Quantity::ALL.to_vec(),
        }
    }
}

/// A failure carrying its process exit code.
#[derive(Debug)]
enum Failure {
    Verify(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Verify(m) | Failure::Usage(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { name, value, range } => Failure::Usage(format!(
                "invalid value for --{name}: {value} is outside {range}"
            )),
            Error::UnnormalizedCoefficients(_) => {
                Failure::Usage(format!("invalid value for --alpha/--beta: {e}"))
            }
            other => Failure::Verify(format!("simulation failed: {other}")),
        }
    }
}

fn io_failure(target: &str, e: std::io::Error) -> Failure {
    Failure::Io(format!("cannot write {target}: {e}"))
}

type Outcome = Result<(), Failure>;

fn coefficients(alpha: Option<f64>, beta: Option<f64>) -> Result<(f64, f64), Failure> {
    let derive = |name: &str, x: f64| {
        if (0.0..=1.0).contains(&x) {
            Ok((1.0 - x * x).sqrt())
        } else {
            Err(Failure::Usage(format!(
                "invalid value for --{name}: {x} is outside [0, 1]"
            )))
        }
    };
    match (alpha, beta) {
        (None, None) => Ok((FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
        (Some(a), None) => Ok((a, derive("alpha", a)?)),
        (None, Some(b)) => Ok((derive("beta", b)?, b)),
        (Some(a), Some(b)) => Ok((a, b)),
    }
}

impl PointArgs {
    fn config(&self) -> Result<ProtocolConfig, Failure> {
        let (alpha, beta) = coefficients(self.alpha, self.beta)?;
        Ok(ProtocolConfig::new(
            alpha,
            beta,
            self.eta,
            self.t,
            self.detector.into(),
        )?)
    }
}

fn write_stdout(text: &str) -> Outcome {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
        .map_err(|e| io_failure("stdout", e))
}

fn run(args: &RunArgs) -> Outcome {
    let result = run_protocol(&args.point.config()?)?;
    let text = match args.format {
        RunFormat::Json => output::to_json_text(&output::record(
            "run",
            output::run_config(&result),
            output::run_json(&result),
            !args.no_meta,
        )),
        RunFormat::Csv => output::run_csv(&result),
    };
    write_stdout(&text)
}

fn sweep_cmd(args: &SweepArgs) -> Outcome {
    for &eta in &args.eta_list {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Failure::Usage(format!(
                "invalid value for --eta-list: {eta} is outside [0, 1]"
            )));
        }
    }
    let mut etas = args.eta_list.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let ts = t_grid(args.t_min, args.t_max, args.t_step)?;
    if ts.is_empty() {
        return Err(Failure::Usage(format!(
            "invalid value for --t-max: {} is below --t-min {}",
            args.t_max, args.t_min
        )));
    }
    let source = match args.source {
        SourceArg::Closed => Source::ClosedForm,
        SourceArg::Brute => Source::BruteForce,
    };
    let rows = sweep(&etas, &ts, source)?;
    let text = match (args.layout, args.format) {
        (Layout::Gnuplot, _) => {
            output::sweep_gnuplot(&rows, &etas, &ts, &args.quantity.quantities())
        }
        (Layout::Tidy, SweepFormat::Csv) => output::sweep_csv(&rows),
        (Layout::Tidy, SweepFormat::Json) => {
            let config = serde_json::json!({
                "eta_list": etas.iter().copied().map(output::num).collect::<Vec<_>>(),
                "t_min": output::num(args.t_min),
                "t_max": output::num(args.t_max),
                "t_step": output::num(args.t_step),
                "source": source.label(),
            });
            output::to_json_text(&output::record(
                "sweep",
                config,
                output::sweep_json(&rows),
                !args.no_meta,
            ))
        }
    };
    if args.output.as_os_str() == "-" {
        write_stdout(&text)
    } else {
        std::fs::write(&args.output, text)
            .map_err(|e| io_failure(&args.output.display().to_string(), e))
    }
}

fn patterns(args: &PatternsArgs) -> Outcome {
    let result = run_protocol(&args.point.config()?)?;
    let text = match args.format {
        PatternsFormat::Table => output::patterns_table(&result, args.branch),
        PatternsFormat::Csv => output::patterns_csv(&result, args.branch),
        PatternsFormat::Json => output::to_json_text(&output::record(
            "patterns",
            output::run_config(&result),
            output::patterns_json(&result, args.branch),
            !args.no_meta,
        )),
    };
    write_stdout(&text)
}

fn verify(args: &VerifyArgs) -> Outcome {
    let grid = Grid::new(match args.grid {
        GridArg::Quick => GridSize::Quick,
        GridArg::Full => GridSize::Full,
    });
    let mut conventions = Conventions::default();
    if args.mutate_bs_sign {
        conventions.beam_splitter[1][1] = -conventions.beam_splitter[1][1];
    }
    let suite = run_checks(&grid, &conventions);
    let mut text = String::new();
    for o in &suite.outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!("{status} {}: {}\n", o.name, o.detail));
    }
    let passed = suite.outcomes.iter().filter(|o| o.passed).count();
    text.push_str(&format!(
        "{passed}/{} checks passed\n",
        suite.outcomes.len()
    ));
    write_stdout(&text)?;
    match suite.first_failure() {
        None => Ok(()),
        Some(o) => Err(Failure::Verify(format!(
            "verification failed at {}: {}",
            o.name, o.detail
        ))),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Failure::Usage(format!("invalid value for {THREADS_ENV}: {value:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start worker threads: {e}")))
}

fn dispatch(cli: &Cli) -> Outcome {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Patterns(args) => patterns(args),
        Command::Verify(args) => verify(args),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
