mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xpcs_core::io::FrameDtype;
use xpcs_core::XpcsError;

/// Homomorphic SVD compression of XPCS frame series: correlation functions
/// computed directly on the compressed coefficients.
#[derive(Parser)]
#[command(name = "xpcs", version, about, long_about = None)]
#[command(propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic frames file (or a reference texture)
    #[command(subcommand)]
    Generate(GenerateKind),
    /// Write an annular pixel mask
    Mask(MaskArgs),
    /// Build an encoding matrix and print its spectrum
    #[command(subcommand)]
    BuildMatrix(BuildMode),
    /// Compress a frames file with an encoder
    Compress(CompressArgs),
    /// Two-time correlation matrix as CSV
    Ttc(OutArgs),
    /// Time-averaged g2 curve as CSV
    G2(OutArgs),
    /// Fit g2 = B + C exp(-2 tau / t0) over a lag window
    Fit(FitArgs),
    /// Peak visibility against the TTC background (2 sigma verdict)
    Visibility(VisibilityArgs),
    /// Time raw against compressed TTC over an (N, M, K) grid
    Bench(BenchArgs),
}

#[derive(Subcommand)]
pub enum GenerateKind {
    /// Frames oscillating between two speckle patterns
    Oscillatory(OscillatoryArgs),
    /// Mean-reverting speckle with t0 = -1/ln(rho) frames
    Relaxation(RelaxationArgs),
    /// Speckle displaced back and forth under periodic strain
    Echo(EchoArgs),
    /// Randomly shifted crops of a reference image
    Corpus(CorpusArgs),
    /// Tileable 8-bit reference texture (binary PGM)
    Texture(TextureArgs),
}

#[derive(Args)]
pub struct FramesOut {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds between frames, stored in the file header
    #[arg(long, default_value_t = 1.0)]
    pub frame_period: f64,
    #[arg(long, default_value = "f64")]
    pub dtype: FrameDtype,
    #[arg(long, default_value = "frames.xfs")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct OscillatoryArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    /// Oscillation period in frames
    #[arg(long)]
    pub period: f64,
    #[arg(long, default_value_t = 0.5)]
    pub contrast: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub common: FramesOut,
}

#[derive(Args)]
pub struct RelaxationArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    /// Per-frame amplitude memory in (0, 1)
    #[arg(long)]
    pub rho: f64,
    #[command(flatten)]
    pub common: FramesOut,
}

#[derive(Args)]
pub struct EchoArgs {
    #[arg(long)]
    pub n: usize,
    /// Frame shape HxW
    #[arg(long, value_parser = parse_shape)]
    pub shape: (usize, usize),
    /// Strain period in frames
    #[arg(long)]
    pub period: f64,
    /// Peak displacement in pixels
    #[arg(long, default_value_t = 3.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub common: FramesOut,
}

#[derive(Args)]
pub struct CorpusArgs {
    /// Number of shifted crops
    #[arg(long)]
    pub n: usize,
    /// Crop shape HxW
    #[arg(long, value_parser = parse_shape)]
    pub shape: (usize, usize),
    /// Binary PGM; a 256x256 texture seeded with --seed when omitted
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub common: FramesOut,
}

#[derive(Args)]
pub struct TextureArgs {
    /// Edge length, a power of two
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "reference.pgm")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MaskArgs {
    /// Detector shape HxW
    #[arg(long, value_parser = parse_shape)]
    pub shape: (usize, usize),
    /// Ring centre ROW,COL (defaults to the detector centre)
    #[arg(long, value_parser = parse_pair)]
    pub center: Option<(f64, f64)>,
    /// Inner and outer radius RMIN,RMAX in pixels
    #[arg(long, value_parser = parse_pair)]
    pub radii: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum BuildMode {
    /// Encoder from the series itself; lossless at full rank
    Offline(OfflineArgs),
    /// Encoder from prior frames of the same sample
    OnlineRelated(RelatedArgs),
    /// Encoder from shifted crops of an unrelated reference image
    OnlineUnrelated(UnrelatedArgs),
}

#[derive(Args)]
pub struct OfflineArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Keep only the leading K singular vectors
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RelatedArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct UnrelatedArgs {
    /// Binary PGM; a 256x256 texture seeded with --seed when omitted
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Detector frame shape HxW
    #[arg(long, value_parser = parse_shape)]
    pub shape: (usize, usize),
    /// Number of shifted crops in the corpus
    #[arg(long, default_value_t = xpcs_core::encoder::DEFAULT_CORPUS_SAMPLES)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub encoder: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Compress and append one frame at a time
    #[arg(long)]
    pub stream: bool,
}

/// Where a correlation comes from: raw frames or a compressed store.
#[derive(Args)]
pub struct Source {
    /// Raw frames file
    #[arg(long, required_unless_present = "compressed", conflicts_with = "compressed")]
    pub frames: Option<PathBuf>,
    /// Compressed store
    #[arg(long, required_unless_present = "frames")]
    pub compressed: Option<PathBuf>,
    /// Encoder the store must be bound to (checked when given)
    #[arg(long, requires = "compressed")]
    pub encoder: Option<PathBuf>,
    /// Pixel mask applied to raw frames
    #[arg(long, requires = "frames")]
    pub mask: Option<PathBuf>,
    /// Seconds between frames; raw files default to their header value,
    /// stores to 1
    #[arg(long)]
    pub frame_period: Option<f64>,
}

#[derive(Args)]
pub struct OutArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub source: Source,
    /// Lag range LO,HI in seconds
    #[arg(long, value_parser = parse_pair)]
    pub lag_window: (f64, f64),
    /// Also write the JSON result here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VisibilityArgs {
    #[command(flatten)]
    pub source: Source,
    /// Lag range LO,HI (seconds) searched for the peak
    #[arg(long, value_parser = parse_pair)]
    pub peak_window: (f64, f64),
    /// Lag range LO,HI (seconds) whose median is the baseline
    #[arg(long, value_parser = parse_pair)]
    pub baseline_window: (f64, f64),
    /// Frames within this distance of the diagonal are left out of the
    /// background estimate
    #[arg(long, default_value_t = 0)]
    pub exclusion: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Comma-separated NxMxK cases
    #[arg(long, default_value = "256x65536x64,256x131072x64,256x2048x2048")]
    pub bench_grid: String,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Minimum accumulated time per measurement, milliseconds
    #[arg(long, default_value_t = 200)]
    pub min_time_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; printed after the summary when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("shape {s:?} is not HxW"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad number {t:?} in shape {s:?}"));
    Ok((p(h)?, p(w)?))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("{s:?} is not LO,HI"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?} in {s:?}"));
    Ok((p(a)?, p(b)?))
}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<XpcsError>() {
            return match e {
                XpcsError::Contract(_) => EXIT_USAGE,
                XpcsError::ZeroMatrix
                | XpcsError::Rank { .. }
                | XpcsError::FitDegenerate(_)
                | XpcsError::FitNoConvergence { .. } => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

/// Sizes the global rayon pool from `XPCS_THREADS` (0 or unset = one thread
/// per core).
fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("XPCS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| commands::UsageError(format!("XPCS_THREADS must be a non-negative integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(kind) => commands::generate(kind),
        Command::Mask(args) => commands::mask(args),
        Command::BuildMatrix(mode) => commands::build_matrix(mode),
        Command::Compress(args) => commands::compress(args),
        Command::Ttc(args) => commands::ttc(args),
        Command::G2(args) => commands::g2(args),
        Command::Fit(args) => commands::fit(args),
        Command::Visibility(args) => commands::visibility(args),
        Command::Bench(args) => commands::bench(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
