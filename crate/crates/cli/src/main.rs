use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nltt::analysis::certificate_suite;
use nltt::io::load_tensor;
use nltt::metrics::{quality, PEAK};
use nltt::pipeline::{run, BetaSelection};
use nltt::{Error, ExperimentConfig, MaskKind, MatchDistance, Method};

#[derive(Parser)]
#[command(name = "nltt", version, about = "Nonlocal tensor-train completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Tube,
    Structural,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Nltt,
    SilrtcTt,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    ZeroFilled,
    CoObserved,
}

#[derive(Subcommand)]
enum Command {
    /// Complete an image (or DTR1 tensor) and write the result and a report.
    Complete(Box<CompleteArgs>),
    /// Run the perturbation certificates and print one JSON report per line.
    Certify {
        #[arg(long, value_delimiter = ',', default_value = "8,8,3,12")]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        groups: usize,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print PSNR and SSIM of an estimate against ground truth.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
    },
}

#[derive(clap::Args)]
struct CompleteArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    mask_kind: Option<KindArg>,
    #[arg(long)]
    sr: Option<f64>,
    #[arg(long)]
    mask_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    cube_size: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long)]
    similar: Option<usize>,
    /// Search window half-width, or `none` for the whole frame.
    #[arg(long)]
    window: Option<String>,
    /// Cube distance used for matching on the incomplete observation.
    #[arg(long, value_enum)]
    match_distance: Option<DistanceArg>,
    #[arg(long)]
    beta: Option<f64>,
    /// Pick β from the candidate set on a hold-out split.
    #[arg(long)]
    beta_grid: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Allow grouping parameters outside the tuned ranges.
    #[arg(long)]
    custom_grouping: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(a: CompleteArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.input {
        cfg.input = v;
    }
    if let Some(k) = a.mask_kind {
        cfg.mask.kind = match k {
            KindArg::Random => MaskKind::Random,
            KindArg::Tube => MaskKind::Tube,
            KindArg::Structural => MaskKind::Structural,
        };
    }
    if let Some(v) = a.sr {
        cfg.mask.sampling_rate = Some(v);
    }
    if let Some(v) = a.mask_file {
        cfg.mask.mask_source = Some(v);
    }
    if let Some(m) = a.method {
        cfg.method = match m {
            MethodArg::Nltt => Method::Nltt,
            MethodArg::SilrtcTt => Method::SilrtcTt,
        };
    }
    if let Some(v) = a.cube_size {
        cfg.grouping.cube_size = v;
    }
    if let Some(v) = a.overlap {
        cfg.grouping.overlap = v;
    }
    if let Some(v) = a.similar {
        cfg.grouping.similar = v;
    }
    if let Some(w) = a.window {
        cfg.grouping.window = match w.as_str() {
            "none" | "unbounded" => None,
            n => Some(n.parse().map_err(|_| Error::Parameter(format!("bad --window '{n}'")))?),
        };
    }
    if let Some(d) = a.match_distance {
        cfg.grouping.distance = match d {
            DistanceArg::ZeroFilled => MatchDistance::ZeroFilled,
            DistanceArg::CoObserved => MatchDistance::CoObserved,
        };
    }
    if let Some(v) = a.beta {
        cfg.solver.beta = v;
    }
    if a.beta_grid {
        cfg.beta_selection = BetaSelection::Grid;
    }
    if let Some(v) = a.tol {
        cfg.solver.tol = v;
    }
    if let Some(v) = a.max_iter {
        cfg.solver.max_iter = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
        cfg.mask.seed = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = Some(v);
    }
    if a.custom_grouping {
        cfg.custom_grouping = true;
    }
    if let Some(v) = a.out {
        cfg.out_dir = v;
    }
    if cfg.input.as_os_str().is_empty() {
        return Err(Error::Parameter("no input given (--input or config)".into()));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Complete(args) => {
            let cfg = build_config(*args)?;
            let report = run(&cfg)?;
            match &report.quality {
                Some(q) => println!(
                    "{} beta={} psnr={:.4} dB ssim={:.4} -> {}",
                    serde_json::to_string(&report.method)?,
                    report.beta,
                    q.psnr_db,
                    q.ssim,
                    cfg.out_dir.display()
                ),
                None => println!("completed -> {}", cfg.out_dir.display()),
            }
            Ok(true)
        }
        Command::Certify { shape, groups, pairs, seed } => {
            let shape: [usize; 4] = shape
                .try_into()
                .map_err(|s: Vec<usize>| Error::Parameter(format!("--shape needs 4 extents, got {}", s.len())))?;
            let reports = certificate_suite(shape, groups, pairs, seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{}", r.to_json_line());
                ok &= r.holds();
            }
            Ok(ok)
        }
        Command::Metrics { truth, est } => {
            let q = quality(&load_tensor(&truth)?, &load_tensor(&est)?, PEAK)?;
            println!("{}", serde_json::to_string(&q)?);
            Ok(true)
        }
    }
}

/// OpenBLAS reads its kernel selection once at load time, so a missing
/// `OPENBLAS_CORETYPE` can only be supplied by restarting the process.
fn reexec_with_coretype() -> Option<ExitCode> {
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return None;
    }
    let exe = std::env::current_exe().ok()?;
    let status = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell")
        .status()
        .ok()?;
    Some(ExitCode::from(status.code().unwrap_or(1).clamp(0, 255) as u8))
}

fn main() -> ExitCode {
    if let Some(code) = reexec_with_coretype() {
        return code;
    }
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Parameter(_) | Error::Json(_) => 2,
                Error::Numeric(_) => 3,
                _ => 1,
            })
        }
    }
}
