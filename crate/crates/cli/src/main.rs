use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gglr_core::bench::{load_corpus, run_bench, write_csv, BenchConfig, DEFAULT_FRACTIONS};
use gglr_core::degrade::{degrade, random_mask};
use gglr_core::graph::{lifted_from_field, Connectivity};
use gglr_core::grid::observations;
use gglr_core::metrics::{format_metric, psnr, ssim};
use gglr_core::mu_select::{estimate_noise_variance, estimate_planar_deviation, optimal_mu, spectral_summary, EigenOptions};
use gglr_core::netpbm::{read_pbm, read_pgm, write_pbm, write_pgm};
use gglr_core::solver::{glr_interpolate, interpolate, Method, MuSetting, SolveConfig};
use gglr_core::structure_tensor::estimate_gradient_field;
use serde_json::json;

/// Image interpolation with gradient graph Laplacian regularization.
#[derive(Parser)]
#[command(name = "gglr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove a random fraction of pixels.
    Degrade(DegradeArgs),
    /// Restore the missing pixels of an image.
    Interpolate(InterpolateArgs),
    /// Compare a restored image with its reference.
    Eval(EvalArgs),
    /// Run every method at every missing fraction over a directory of images.
    Bench(BenchArgs),
    /// Print the μ that minimizes the MSE bound.
    MuSelect(MuSelectArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Edge-weight bandwidth.
    #[arg(long, env = "GGLR_SIGMA", default_value_t = 0.68)]
    sigma: f64,
    /// Regularization weight, or `auto`.
    #[arg(long, env = "GGLR_MU", default_value = "0.01")]
    mu: MuSetting,
    /// Structure-tensor window (odd).
    #[arg(long, env = "GGLR_WINDOW", default_value_t = 5)]
    window: usize,
    #[arg(long, env = "GGLR_CONNECTIVITY", default_value = "4")]
    connectivity: Connectivity,
    /// Relative residual at which CG stops.
    #[arg(long, env = "GGLR_CG_TOL", default_value_t = 1e-8)]
    cg_tol: f64,
    /// CG iteration cap (default 10 x pixel count).
    #[arg(long, env = "GGLR_CG_MAX_ITER")]
    cg_max_iter: Option<usize>,
    #[arg(long, env = "GGLR_OUTER_TOL", default_value_t = 1e-4)]
    outer_tol: f64,
    #[arg(long, env = "GGLR_OUTER_MAX_ITER", default_value_t = 10)]
    outer_max_iter: usize,
    /// Diagonal preconditioning for CG.
    #[arg(long, env = "GGLR_JACOBI")]
    jacobi: bool,
    /// Planar-deviation variance for `--mu auto` (estimated when absent).
    #[arg(long)]
    sigma_p2: Option<f64>,
    /// Noise variance for `--mu auto` (estimated when absent).
    #[arg(long)]
    sigma_o2: Option<f64>,
}

impl SolveArgs {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            sigma: self.sigma,
            mu: self.mu,
            window: self.window,
            connectivity: self.connectivity,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            outer_tol: self.outer_tol,
            outer_max_iter: self.outer_max_iter,
            jacobi: self.jacobi,
            sigma_p2: self.sigma_p2,
            sigma_o2: self.sigma_o2,
            ..SolveConfig::default()
        }
    }
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    fraction: f64,
    #[arg(long, env = "GGLR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_mask: PathBuf,
    /// Zero-filled preview.
    #[arg(long)]
    out_img: Option<PathBuf>,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// `glr`, `gglr2` or `gglr4`; without it `--connectivity` picks the GGLR variant.
    #[arg(long)]
    method: Option<Method>,
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long)]
    out: PathBuf,
    /// JSON solve report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS)]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["gglr2", "gglr4", "glr"])]
    methods: Vec<Method>,
    #[arg(long, env = "GGLR_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solve: SolveArgs,
    /// Write `NA` instead of wall-clock times, making the CSV reproducible.
    #[arg(long)]
    no_timing: bool,
    /// CSV output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MuSelectArgs {
    /// Degraded image whose structure-tensor graph defines the Laplacian.
    #[arg(long)]
    lap_from: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Planar-deviation standard deviation.
    #[arg(long)]
    sigma_p: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma_o: Option<f64>,
    #[arg(long, env = "GGLR_SIGMA", default_value_t = 0.68)]
    sigma: f64,
    #[arg(long, env = "GGLR_WINDOW", default_value_t = 5)]
    window: usize,
    #[arg(long, env = "GGLR_CONNECTIVITY", default_value = "4")]
    connectivity: Connectivity,
    #[arg(long, default_value_t = 1e-4)]
    mu_min: f64,
    #[arg(long, default_value_t = 1e2)]
    mu_max: f64,
}

fn run_degrade(args: DegradeArgs) -> Result<()> {
    let img = read_pgm(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mask = random_mask(img.rows(), img.cols(), args.fraction, args.seed)?;
    write_pbm(&args.out_mask, &mask).with_context(|| format!("writing {}", args.out_mask.display()))?;
    if let Some(path) = &args.out_img {
        write_pgm(path, &degrade(&img, &mask)?).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("{} of {} pixels missing", mask.missing_count(), mask.len());
    Ok(())
}

fn run_interpolate(args: InterpolateArgs) -> Result<()> {
    let img = read_pgm(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mask = read_pbm(&args.mask).with_context(|| format!("reading {}", args.mask.display()))?;
    let config = args.solve.config();
    let method = args.method.unwrap_or(match config.connectivity {
        Connectivity::Two => Method::Gglr2,
        Connectivity::Four => Method::Gglr4,
    });
    let config = match method {
        Method::Glr => config,
        Method::Gglr2 => SolveConfig { connectivity: Connectivity::Two, ..config },
        Method::Gglr4 => SolveConfig { connectivity: Connectivity::Four, ..config },
    };
    let y = observations(&img, &mask)?;
    let report = match method {
        Method::Glr => glr_interpolate(&y, &mask, &config)?,
        _ => interpolate(&y, &mask, &config)?,
    };
    write_pgm(&args.out, &report.image.clamped()).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report.to_json(method, &config))?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.converged {
        eprintln!("warning: CG reached its iteration cap (residual {:.3e})", report.residual);
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let reference = read_pgm(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let test = read_pgm(&args.test).with_context(|| format!("reading {}", args.test.display()))?;
    let p = psnr(&reference, &test)?;
    let s = ssim(&reference, &test)?;
    if args.json {
        let psnr_value = if p.is_finite() { json!(p) } else { json!("inf") };
        println!("{}", json!({ "psnr_db": psnr_value, "ssim": s }));
    } else {
        println!("psnr_db {}", format_metric(p));
        println!("ssim {s:.6}");
    }
    Ok(())
}

fn run_bench_cmd(args: BenchArgs) -> Result<()> {
    let corpus = load_corpus(&args.dir).with_context(|| format!("loading {}", args.dir.display()))?;
    if corpus.is_empty() {
        bail!("no .pgm images in {}", args.dir.display());
    }
    let config = BenchConfig {
        fractions: args.fractions,
        methods: args.methods,
        seed: args.seed,
        solve: args.solve.config(),
        timing: !args.no_timing,
    };
    let records = run_bench(&corpus, &config)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&records, BufWriter::new(file))?;
        }
        None => write_csv(&records, io::stdout().lock())?,
    }
    Ok(())
}

fn run_mu_select(args: MuSelectArgs) -> Result<()> {
    let img = read_pgm(&args.lap_from).with_context(|| format!("reading {}", args.lap_from.display()))?;
    let mask = read_pbm(&args.mask).with_context(|| format!("reading {}", args.mask.display()))?;
    let zero_filled = degrade(&img, &mask)?;
    let (gh, gv) = estimate_gradient_field(&zero_filled, &mask, args.window)?;
    let (rows, cols) = (img.rows(), img.cols());
    let lap = lifted_from_field(rows, cols, &gh, args.connectivity, args.sigma)?
        .matrix
        .add(&lifted_from_field(rows, cols, &gv, args.connectivity, args.sigma)?.matrix)?;
    let sigma_o2 = match args.sigma_o {
        Some(s) => s * s,
        None => estimate_noise_variance(&zero_filled, &mask)?,
    };
    let sigma_p2 = match args.sigma_p {
        Some(s) => s * s,
        None => estimate_planar_deviation(&zero_filled, &mask, args.window, sigma_o2)?,
    };
    let summary = spectral_summary(&lap, &EigenOptions::grid(rows, cols), sigma_p2, sigma_o2)?;
    let mu = optimal_mu(&summary, (args.mu_min, args.mu_max))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{mu}")?;
    eprintln!(
        "K = {}, λ3 = {:.6e}, λK = {:.6e}, σp² = {:.6e}, σo² = {:.6e}",
        summary.k, summary.lambda3, summary.lambda_k, summary.sigma_p2, summary.sigma_o2
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Degrade(a) => run_degrade(a),
        Command::Interpolate(a) => run_interpolate(a),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench_cmd(a),
        Command::MuSelect(a) => run_mu_select(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
