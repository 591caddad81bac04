//! `precond` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use precond_cli::config::{Application, Config, RawConfig};
use precond_cli::{compare, report, run};

#[derive(Parser)]
#[command(name = "precond", version, about = "Preconditioned Riemannian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment config; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Add condition numbers to the summary.
    #[arg(long)]
    with_spectrum: bool,
    /// Overrides the config repeat count.
    #[arg(long)]
    repeat: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical correlation analysis.
    Cca(RunArgs),
    /// Truncated SVD.
    Tsvd(RunArgs),
    /// Tensor ring completion.
    Trcomp(RunArgs),
    /// Ellipsoid toy problem and its condition-number sweep.
    Ellipsoid(RunArgs),
    /// Closed-form condition numbers from a spectrum.
    Spectrum(RunArgs),
    /// Write the synthetic input files of an application.
    Generate {
        application: Application,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Tabulate run summaries of one application.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory receiving comparison.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn resolve(app: Application, args: &RunArgs) -> Result<Config> {
    let mut raw = match &args.config {
        Some(p) => Config::load(p)?,
        None => RawConfig::default(),
    };
    if args.seed.is_some() {
        raw.seed = args.seed;
    }
    if args.repeat.is_some() {
        raw.repeat = args.repeat;
    }
    if args.with_spectrum {
        raw.with_spectrum = Some(true);
    }
    // relative input paths in the config resolve against its directory
    let base = args.config.as_ref().and_then(|p| p.parent().map(PathBuf::from)).unwrap_or_default();
    if let Some(t) = raw.problem.as_mut() {
        for key in ["x", "y", "matrix", "sampling", "test_sampling"] {
            if let Some(toml::Value::String(s)) = t.get(key) {
                let joined = base.join(s).to_string_lossy().into_owned();
                t.insert(key.into(), toml::Value::String(joined));
            }
        }
    }
    Config::resolve(raw, app)
}

fn execute(app: Application, args: &RunArgs) -> Result<ExitCode> {
    let cfg = resolve(app, args)?;
    let bundle = run::run(&cfg)?;
    for p in report::write_bundle(&bundle, app.name(), &args.out)? {
        println!("{}", p.display());
    }
    if bundle.failed {
        eprintln!("precond: a solver run failed; see {}", args.out.join(report::summary_name(app.name())).display());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main_inner() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Cca(a) => execute(Application::Cca, &a),
        Command::Tsvd(a) => execute(Application::Tsvd, &a),
        Command::Trcomp(a) => execute(Application::Trcomp, &a),
        Command::Ellipsoid(a) => execute(Application::Ellipsoid, &a),
        Command::Spectrum(a) => execute(Application::Spectrum, &a),
        Command::Generate { application, args } => {
            let cfg = resolve(application, &args)?;
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            for name in run::generate(&cfg, &args.out)? {
                println!("{}", args.out.join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { reports, out } => {
            let cmp = compare::load(&reports)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("comparison.csv");
            std::fs::write(&path, cmp.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", cmp.to_text());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("precond: {e:#}");
            ExitCode::from(2)
        }
    }
}
