use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use lumen_forge::config::PipelineConfig;
use lumen_forge::eval::{self, DegradeSpec};
use lumen_forge::fusion::{dehaze, enhance};
use lumen_forge::guided::filter_color;
use lumen_forge::io::{load_image, save_image};
use lumen_forge::Error;

const THREADS_ENV: &str = "LUMEN_FORGE_THREADS";

/// Low-light enhancement, denoising and dehazing with gradient-domain
/// weighted guided filtering.
#[derive(Parser, Debug)]
#[command(name = "lumen-forge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Brighten, denoise and stretch a low-light image.
    Enhance(InOut),
    /// Remove haze by enhancing the inverted image.
    Dehaze(InOut),
    /// Run the edge-aware guided filter alone, self-guided per channel.
    Filter(InOut),
    /// Darken and add noise to a clean image.
    Degrade {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Print PSNR and SSIM of a test image against a reference.
    Metrics { reference: PathBuf, test: PathBuf },
    /// Degrade, enhance and score every PNG/JPEG in a directory. Writes a CSV
    /// table to the report path and prints a JSON summary.
    Eval {
        clean_dir: PathBuf,
        report: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Args, Debug)]
struct InOut {
    /// PNG or JPEG to read.
    input: PathBuf,
    /// PNG to write.
    output: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

fn with_default(what: &str, key: &str) -> String {
    let value = PipelineConfig::default().get(key).expect("known key");
    format!("{what} [default: {value}]")
}

/// Every field is optional so that only flags actually given override the
/// config file.
#[derive(Args, Debug, Default)]
struct ParamArgs {
    #[arg(long, value_name = "F", allow_negative_numbers = true, help = with_default("Regularization weight", "lambda"))]
    lambda: Option<f64>,
    #[arg(long, value_name = "N", help = with_default("Square window radius", "xi"))]
    xi: Option<usize>,
    #[arg(long, value_name = "N", help = with_default("Adaptive window size", "r"))]
    r: Option<usize>,
    #[arg(long, value_name = "F", allow_negative_numbers = true, help = with_default("Edge threshold", "threshold"))]
    threshold: Option<f64>,
    #[arg(long, value_name = "F", allow_negative_numbers = true, help = with_default("Gamma adjustment factor", "alpha"))]
    alpha: Option<f64>,
    #[arg(long = "tau-r", value_name = "F", allow_negative_numbers = true, help = with_default("Reflection denominator offset", "tau-r"))]
    tau_r: Option<f64>,
    #[arg(long = "mu-radius", value_name = "N", help = with_default("Local mean radius for gamma", "mu-radius"))]
    mu_radius: Option<usize>,
    #[arg(long = "scale-weights", value_name = "W,W,W", help = with_default("Illumination scale weights", "scale-weights"))]
    scale_weights: Option<String>,
    #[arg(long, value_name = "N", help = with_default("Random seed", "seed"))]
    seed: Option<u64>,
    #[arg(long, value_name = "BITS", help = with_default("Output bit depth, 8 or 16", "depth"))]
    depth: Option<u8>,
    /// File of `key = value` lines applied before the flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let flags: [(&str, Option<String>); 10] = [
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("xi", self.xi.map(|v| v.to_string())),
            ("r", self.r.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("tau-r", self.tau_r.map(|v| v.to_string())),
            ("mu-radius", self.mu_radius.map(|v| v.to_string())),
            ("scale-weights", self.scale_weights.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("depth", self.depth.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Darkening exponent.
    #[arg(long, value_name = "F", default_value_t = DegradeSpec::default().gamma)]
    gamma: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, value_name = "F", default_value_t = DegradeSpec::default().gauss_sigma)]
    sigma: f64,
    /// Photon count at full scale for shot noise.
    #[arg(long, value_name = "F", default_value_t = DegradeSpec::default().poisson_peak.unwrap_or(255.0))]
    peak: f64,
    /// Skip the shot-noise step.
    #[arg(long)]
    no_poisson: bool,
}

impl NoiseArgs {
    fn spec(&self, seed: u64) -> DegradeSpec {
        DegradeSpec {
            gamma: self.gamma,
            gauss_sigma: self.sigma,
            poisson_peak: (!self.no_poisson).then_some(self.peak),
            seed,
        }
    }
}

fn process(
    args: &InOut,
    f: impl Fn(&lumen_forge::ColorImage, &PipelineConfig) -> Result<lumen_forge::ColorImage, Error>,
) -> Result<(), Error> {
    let cfg = args.params.resolve()?;
    let img = load_image(&args.input)?;
    save_image(&f(&img, &cfg)?, &args.output, cfg.depth)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_owned(),
        source,
    })
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Enhance(a) => process(&a, enhance),
        Command::Dehaze(a) => process(&a, dehaze),
        Command::Filter(a) => process(&a, |img, cfg| filter_color(img, &cfg.filter)),
        Command::Degrade {
            input,
            output,
            noise,
            params,
        } => {
            let cfg = params.resolve()?;
            let out = eval::degrade(&load_image(&input)?, &noise.spec(cfg.seed))?;
            save_image(&out, &output, cfg.depth)
        }
        Command::Metrics { reference, test } => {
            let (a, b) = (load_image(&reference)?, load_image(&test)?);
            println!("psnr = {:.2}", eval::psnr(&b, &a)?);
            println!("ssim = {:.4}", eval::ssim(&b, &a)?);
            Ok(())
        }
        Command::Eval {
            clean_dir,
            report,
            noise,
            params,
        } => {
            let cfg = params.resolve()?;
            let result = eval::evaluate_dir(&clean_dir, &noise.spec(cfg.seed), &cfg)?;
            write_text(&report, &result.to_csv())?;
            println!("{}", result.summary_json());
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Read { .. }
        | Error::Write { .. }
        | Error::Decode { .. }
        | Error::UnsupportedFormat(_) => 2,
        _ => 1,
    }
}

fn thread_count() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
