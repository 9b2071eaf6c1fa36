use std::io::Write;

use declab_core::harness::{fit_rows, run_scenario, DecouplingReport, SlopeFit};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CSV_HEADER: [&str; 13] = [
    "kind",
    "N",
    "p",
    "lhs",
    "lhs_se",
    "rhs_lp",
    "rhs_l2",
    "ratio_lp",
    "ratio_l2",
    "caps",
    "budget",
    "seed",
    "runtime_ms",
];

/// One `(scenario, p, N)` measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub scenario: usize,
    pub n: f64,
    pub p: f64,
}

pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (scenario, spec) in cfg.scenarios.iter().enumerate() {
        for &p in &spec.p {
            for &n in &spec.n {
                out.push(Cell { scenario, n, p });
            }
        }
    }
    out
}

fn label(cfg: &RunConfig, cell: &Cell) -> String {
    format!("#{} {} N={} p={}", cell.scenario, cfg.scenarios[cell.scenario].kind.name(), cell.n, cell.p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slopes {
    pub fits: Vec<SlopeFit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub v: u32,
    pub version: String,
    pub config: RunConfig,
    pub reports: Vec<DecouplingReport>,
    pub fits: Vec<SlopeFit>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn slopes(&self) -> Slopes {
        Slopes { fits: self.fits.clone(), warnings: self.warnings.clone() }
    }

    /// Rows flagged by the harness (undersampled, unresolved, ...).
    pub fn flagged(&self) -> impl Iterator<Item = &DecouplingReport> {
        self.reports.iter().filter(|r| !r.flags.is_empty())
    }
}

/// Run every cell on the current rayon pool. Output order is the cell order
/// regardless of scheduling.
pub fn run(cfg: &RunConfig) -> CliResult<RunReport> {
    cfg.validate()?;
    let measure = cfg.measure();
    let cells = cells(cfg);
    let results: Vec<CliResult<DecouplingReport>> = cells
        .par_iter()
        .map(|cell| {
            run_scenario(&cfg.scenarios[cell.scenario], cell.n, cell.p, &measure)
                .map_err(|e| CliError::in_cell(&label(cfg, cell), e))
        })
        .collect();
    let reports = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (k, spec) in cfg.scenarios.iter().enumerate() {
        let rows: Vec<DecouplingReport> =
            cells.iter().zip(&reports).filter(|(c, _)| c.scenario == k).map(|(_, r)| r.clone()).collect();
        let (f, w) = fit_rows(spec.kind, &rows);
        fits.extend(f);
        warnings.extend(w);
    }
    for r in &reports {
        for flag in &r.flags {
            warnings.push(format!("{} N={} p={}: {flag}", r.kind, r.n, r.p));
        }
    }
    Ok(RunReport {
        v: cfg.v,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        reports,
        fits,
        warnings,
    })
}

pub fn write_csv<W: Write>(reports: &[DecouplingReport], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Other(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in reports {
        let se = r.lhs.stderr.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.kind.clone(),
            r.n.to_string(),
            r.p.to_string(),
            r.lhs.value.to_string(),
            se,
            r.rhs_lp.to_string(),
            r.rhs_l2.to_string(),
            r.ratio_lp.to_string(),
            r.ratio_l2.to_string(),
            r.caps.to_string(),
            r.budget.to_string(),
            r.seed.to_string(),
            r.runtime_ms.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Other(e.into()))?;
    Ok(())
}
