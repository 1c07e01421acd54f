//! `dnls`: segmentation, phantoms, scoring and the region-count benchmark.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 numerical failure.

mod commands;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[global_allocator]
static ALLOC: dnls::memory::TrackingAllocator = dnls::memory::TrackingAllocator;

#[derive(Parser, Debug)]
#[command(name = "dnls", version, about = "Disjunctive normal level set segmentation")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "DNLS_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-phase segmentation of a PGM image.
    Segment2(Segment2Args),
    /// Multiphase segmentation of a PGM image into `--r` regions.
    Segmentmulti(SegmentMultiArgs),
    /// Writes a synthetic phantom and its ground-truth label map.
    Phantom(PhantomArgs),
    /// DICE between two masks or label maps, as CSV on stdout.
    Dice(DiceArgs),
    /// Wall time and DICE of multiphase segmentation per object count.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Polytope count; defaults to one per 20x20 pixel cell.
    #[arg(long)]
    n: Option<usize>,
    /// Half-spaces per polytope.
    #[arg(long, default_value_t = 16)]
    m: usize,
    /// Sigmoid steepness per pixel.
    #[arg(long, default_value_t = 1.0)]
    steepness: f64,
    /// Side, in grid cells, of a pixel's polytope neighborhood (odd).
    #[arg(long, default_value_t = 3)]
    neighbor_cells: usize,
}

#[derive(Args, Debug, Clone)]
struct EvolutionArgs {
    /// Initial step size.
    #[arg(long)]
    gamma0: Option<f64>,
    /// Step decay per iteration.
    #[arg(long)]
    gamma_decay: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,
    /// Early-stopping tolerance on the smoothed energy; 0 disables it.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Input image (binary PGM).
    #[arg(long = "in", value_name = "PGM", required_unless_present = "replay")]
    input: Option<PathBuf>,
    /// Prefix of every file written.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    /// Ground truth to score against.
    #[arg(long, value_name = "PGM")]
    truth: Option<PathBuf>,
    /// Repeats the run recorded in a report; other run flags are ignored.
    #[arg(long, value_name = "JSON")]
    replay: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    evolution: EvolutionArgs,
}

#[derive(Args, Debug)]
struct Segment2Args {
    #[command(flatten)]
    run: RunArgs,
    /// Which phase becomes the foreground.
    #[arg(long, value_enum, default_value_t = PolarityArg::Bright)]
    polarity: PolarityArg,
}

#[derive(Args, Debug)]
struct SegmentMultiArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Region count, at least 2.
    #[arg(long, required_unless_present = "replay")]
    r: Option<usize>,
    #[arg(long, value_enum, default_value_t = InitArg::GridKmeans)]
    init: InitArg,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterations between relabelings.
    #[arg(long, default_value_t = 5)]
    relabel_every: usize,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Prefix of every file written.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    /// Phantom description (JSON); flags given alongside override it.
    #[arg(long, value_name = "JSON")]
    spec: Option<PathBuf>,
    #[arg(long)]
    objects: Option<usize>,
    /// Side of the square image.
    #[arg(long)]
    size: Option<usize>,
    /// Gaussian noise standard deviation, in gray levels.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
    /// Object radius as a fraction of half the lattice cell.
    #[arg(long)]
    fill: Option<f64>,
}

#[derive(Args, Debug)]
struct DiceArgs {
    /// Prediction.
    a: PathBuf,
    /// Reference.
    b: PathBuf,
    /// Treat both images as label maps.
    #[arg(long)]
    multilabel: bool,
    /// How predicted labels are paired with reference labels.
    #[arg(long = "match", value_enum, default_value_t = MatchArg::Greedy)]
    matching: MatchArg,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Prefix of every file written.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    /// Object counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 12])]
    objects: Vec<usize>,
    /// Side of the square phantoms.
    #[arg(long, default_value_t = 300)]
    size: usize,
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::MultiOtsu)]
    init: InitArg,
    #[arg(long, default_value_t = 5)]
    relabel_every: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    evolution: EvolutionArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PolarityArg {
    Auto,
    Bright,
    Dark,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitArg {
    GridKmeans,
    MultiOtsu,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ShapeArg {
    Disk,
    Square,
    Annulus,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MatchArg {
    Greedy,
    Fixed,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<dnls::Error> for CliError {
    fn from(e: dnls::Error) -> Self {
        use dnls::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } | E::Format(_) | E::Json(_) => CliError::Io(msg),
            e if e.is_numerical() => CliError::Numerical(msg),
            E::NotInNeighborhood { .. } => CliError::Numerical(msg),
            _ => CliError::Usage(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("dnls: error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    let outcome = match cli.command {
        Command::Segment2(a) => commands::segment2(a, argv, threads),
        Command::Segmentmulti(a) => commands::segment_multi(a, argv, threads),
        Command::Phantom(a) => commands::phantom(a),
        Command::Dice(a) => commands::dice(a),
        Command::Bench(a) => commands::bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dnls: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
