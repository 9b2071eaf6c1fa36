use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use declab_cli::commands::{self, parse_coeffs, parse_list};
use declab_cli::{emit_plotdata, run, threads_from_env, write_csv, CliError, CliResult, RunConfig};
use declab_core::harness::ScenarioKind;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "declab", version, about = "Numerical laboratory for decoupling inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the measurement study described by a config file
    Measure {
        #[arg(long)]
        config: PathBuf,
        /// Full reports (JSON)
        #[arg(long)]
        out: Option<PathBuf>,
        /// One row per cell
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Slope fits (JSON); defaults to slopes.json next to the report
        #[arg(long)]
        slopes: Option<PathBuf>,
        /// (log N, log ratio) series (JSON)
        #[arg(long)]
        plotdata: Option<PathBuf>,
    },
    /// Non-transverse pair graph of the level-log2(K) squares
    Transversality {
        #[arg(long = "A", allow_hyphen_values = true)]
        a: String,
        #[arg(long = "K")]
        k: u32,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the parabolic rescaling identity on a square a,b,delta
    RescaleCheck {
        #[arg(long = "A", allow_hyphen_values = true)]
        a: String,
        #[arg(long = "R")]
        r: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Point masses in the random field
        #[arg(long, default_value_t = 8)]
        points: usize,
    },
    /// Exponent bookkeeping at one p
    Exponents {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        s: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long = "bigO", default_value_t = declab_core::exponents::DEFAULT_BIG_O)]
        big_o: f64,
        /// Exponent fed into the iteration; the candidate by default
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Measure one canonical scenario
    Example {
        #[arg(long)]
        kind: ScenarioKind,
        #[arg(long = "N")]
        n: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact-identity checks of every module
    Smoke,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).context("serializing")?;
    writeln!(w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).context("serializing")?;
    writeln!(std::io::stdout().lock(), "{text}").context("writing to stdout")?;
    Ok(())
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(path) => write_json(path, value),
        None => print_json(value),
    }
}

fn measure(
    config: &Path,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    slopes: Option<PathBuf>,
    plotdata: Option<PathBuf>,
) -> CliResult<()> {
    let cfg = RunConfig::load(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let from_cfg = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
    let report_path = out.or_else(|| from_cfg(&cfg.outputs.report));
    let csv_path = csv.or_else(|| from_cfg(&cfg.outputs.csv));
    let slopes_path = slopes
        .or_else(|| from_cfg(&cfg.outputs.slopes))
        .or_else(|| report_path.as_ref().map(|r| r.parent().unwrap_or(Path::new(".")).join("slopes.json")));
    let plot_path = plotdata.or_else(|| from_cfg(&cfg.outputs.plotdata));

    let report = run(&cfg)?;
    for r in &report.reports {
        eprintln!("{:<28} N={:<6} p={:<5} ratio_lp={:.4} ratio_l2={:.4}", r.kind, r.n, r.p, r.ratio_lp, r.ratio_l2);
    }
    for f in &report.fits {
        eprintln!("slope {} p={} {:?}: {:.4} (predicted {:?})", f.kind, f.p, f.metric, f.slope, f.predicted);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    match &report_path {
        Some(path) => write_json(path, &report)?,
        None => print_json(&report)?,
    }
    if let Some(path) = csv_path {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(&report.reports, BufWriter::new(file))?;
    }
    if let Some(path) = slopes_path {
        write_json(&path, &report.slopes())?;
    }
    if let Some(path) = plot_path {
        write_json(&path, &emit_plotdata(&report.reports))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Measure { config, out, csv, slopes, plotdata } => measure(&config, out, csv, slopes, plotdata),
        Command::Transversality { a, k, nu, out } => {
            let graph = commands::transversality(&parse_coeffs(&a)?, k, nu)?;
            emit(out.as_deref(), &graph)
        }
        Command::RescaleCheck { a, r, trials, seed, points } => {
            let sq = parse_list(&r, 3, "--R")?;
            print_json(&commands::rescale_check(&parse_coeffs(&a)?, [sq[0], sq[1], sq[2]], points, trials, seed)?)
        }
        Command::Exponents { p, s, eps, big_o, gamma } => print_json(&commands::exponents(p, s, eps, big_o, gamma)?),
        Command::Example { kind, n, p, budget, seed } => print_json(&commands::example(kind, n, p, budget, seed)?),
        Command::Smoke => {
            let checks = commands::smoke();
            let mut out = std::io::stdout().lock();
            for c in &checks {
                let mark = if c.pass { "PASS" } else { "FAIL" };
                writeln!(out, "[{mark}] {}: {} ({} ms)", c.name, c.detail, c.millis).context("writing to stdout")?;
            }
            if checks.iter().all(|c| c.pass) {
                Ok(())
            } else {
                Err(CliError::Other(anyhow::anyhow!("smoke checks failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building the worker pool")?;
        }
        dispatch(cli)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
