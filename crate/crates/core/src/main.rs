use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use camra::bench::{self, BenchConfig, CorpusConfig, Kernel};
use camra::cfa::BayerImage;
use camra::codec::{self, EncoderConfig, MatrixChoice, Mode};
use camra::decorrelate::{MOptimizerConfig, ObjectiveForm};
use camra::io::{self, Metadata};
use camra::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;

#[derive(Parser)]
#[command(name = "camra", version, about = "Bayer CFA raw image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PGM mosaic.
    Encode(EncodeArgs),
    /// Decompress a stream to a PGM mosaic.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Level-1 subband decorrelation statistics as CSV.
    Analyze(SourceArgs),
    /// Lossless and lossy scheme comparison as CSV.
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        /// Quantisation steps for the lossy sweeps.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0], value_parser = positive)]
        steps: Vec<f64>,
    },
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Quantisation step for the lossy modes.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    step: f64,
    /// Sparsity weight of the matrix optimiser.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    lambda: f64,
    /// Use the fixed sum/difference matrix instead of optimising one.
    #[arg(long)]
    fixed_m: bool,
    /// Packet levels on the quarter-resolution branches.
    #[arg(long, default_value_t = codec::DEFAULT_LEVELS)]
    levels: usize,
    /// Packet levels on the v_d branch.
    #[arg(long, default_value_t = codec::DEFAULT_VD_LEVELS)]
    vd_levels: usize,
    /// Use the literal form of the optimiser objective.
    #[arg(long)]
    literal_objective: bool,
}

/// Either a mosaic on disk or the synthetic corpus.
#[derive(Args)]
struct SourceArgs {
    #[arg(long = "in", requires = "meta")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    meta: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Side length of the square synthetic images.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).map_err(|e| e.to_string())
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a positive number")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a non-negative number")),
    }
}

fn load_images(src: &SourceArgs) -> anyhow::Result<Vec<(String, BayerImage)>> {
    if let (Some(input), Some(meta)) = (&src.input, &src.meta) {
        let (y, _) = io::read_mosaic(input, meta).with_context(|| format!("reading {}", input.display()))?;
        return Ok(vec![(input.display().to_string(), y)]);
    }
    let cfg = CorpusConfig { seed: src.seed, count: src.count, width: src.size, height: src.size, ..Default::default() };
    Ok(bench::generate_corpus(&cfg)?.into_iter().map(|c| (c.id.to_string(), c.mosaic)).collect())
}

fn write_output(out: Option<&Path>, rows: &[bench::BenchRow]) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(rows, file)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            bench::write_csv(rows, &mut stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn encode(a: &EncodeArgs) -> anyhow::Result<()> {
    let meta_text = fs::read_to_string(&a.meta).with_context(|| format!("reading {}", a.meta.display()))?;
    let meta = Metadata::parse(&meta_text)?;
    let pgm = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (samples, maxval) = io::parse_pgm(&pgm)?;
    let y = io::mosaic_from_parts(samples, maxval, &meta)?;
    let objective = if a.literal_objective { ObjectiveForm::Literal } else { ObjectiveForm::DerivationConsistent };
    let cfg = EncoderConfig {
        levels: a.levels,
        vd_levels: a.vd_levels,
        matrix: if a.fixed_m {
            MatrixChoice::fixed()
        } else {
            MatrixChoice::Optimize(MOptimizerConfig { lambda: a.lambda, objective, ..Default::default() })
        },
        pipeline: meta.pipeline()?,
        ..EncoderConfig::default().with_step(a.step)
    };
    let stream = codec::encode(&y, a.mode, &cfg)?;
    fs::write(&a.out, stream.to_bytes()).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{}: {:.4} bpp", a.mode.name(), stream.bpp());
    Ok(())
}

fn decode(input: &Path, out: &Path) -> anyhow::Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let y = codec::decode(&bytes)?;
    fs::write(out, io::mosaic_to_pgm(&y)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn analyze(src: &SourceArgs) -> anyhow::Result<()> {
    let images = load_images(src)?;
    let mut rows = Vec::new();
    for (id, y) in &images {
        for (kernel, scheme) in [(Kernel::LeGall53, "decorrelation-53"), (Kernel::Cdf97, "decorrelation-97")] {
            let (s, _) = bench::decorrelation_stats(y, kernel, &MOptimizerConfig::default())?;
            rows.push(bench::BenchRow {
                image_id: id.clone(),
                scheme: scheme.into(),
                mode: "analysis".into(),
                step: None,
                bpp: 0.0,
                psnr_cfa_db: None,
                psnr_display_db: None,
                pearson_before: Some(s.pearson_before),
                pearson_after: Some(s.pearson_after),
                entropy_before: Some(s.entropy_before),
                entropy_after: Some(s.entropy_after),
            });
        }
    }
    write_output(src.out.as_deref(), &rows)
}

fn run_bench(src: &SourceArgs, steps: &[f64]) -> anyhow::Result<()> {
    let images = load_images(src)?;
    let cfg = BenchConfig { steps: steps.to_vec(), ..Default::default() };
    let rows = bench::run_bench(&images, &cfg)?;
    write_output(src.out.as_deref(), &rows)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_FORMAT,
            };
        }
    }
    EXIT_FORMAT
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode { input, out } => decode(input, out),
        Command::Analyze(src) => analyze(src),
        Command::Bench { source, steps } => run_bench(source, steps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
