//! Parameter sweeps: one scenario run per value plus a summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use buttonsim_core::post::S11Spectrum;
use rayon::prelude::*;

use crate::error::CliError;
use crate::pipeline::run_scenario;
use crate::scenario::Scenario;

/// Deepest point of the spectrum inside `[lo, hi)`.
pub fn deepest_in(spec: &S11Spectrum, lo: f64, hi: f64) -> Option<(f64, f64)> {
    spec.frequencies
        .iter()
        .zip(&spec.s11_db)
        .filter(|(f, d)| **f >= lo && **f < hi && d.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(f, d)| (*f, *d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub n_dips: usize,
    pub lower: Option<(f64, f64)>,
    pub upper: Option<(f64, f64)>,
}

/// Directory name used for one sweep value.
pub fn value_dir(parameter: &str, value: f64) -> String {
    format!("{}={}", parameter.replace('.', "_"), value)
}

pub fn sweep_csv(parameter: &str, rows: &[SweepRow], hash: &str) -> String {
    let mut s = format!("# scenario_hash: {hash}\n# parameter: {parameter}\n");
    s.push_str("value,n_dips,lower_f_hz,lower_depth_db,upper_f_hz,upper_depth_db\n");
    let cell = |x: Option<(f64, f64)>| match x {
        Some((f, d)) => format!("{f:.1},{d:.4}"),
        None => ",".to_string(),
    };
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.value, r.n_dips, cell(r.lower), cell(r.upper));
    }
    s
}

/// Resolves every sweep value up front so a bad path or value fails before any solver run.
pub fn expand(base: &Scenario) -> Result<Vec<(f64, Scenario)>, CliError> {
    let sw = base
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Parse("scenario has no [sweep] section".into()))?;
    sw.values
        .iter()
        .map(|&v| {
            let mut s = base.with_parameter(&sw.parameter, v)?;
            s.name = format!("{}[{}={}]", base.name, sw.parameter, v);
            Ok((v, s))
        })
        .collect()
}

/// Runs every value of the sweep into `out/<parameter>=<value>/` and writes `out/sweep.csv`.
pub fn run_sweep(base: &Scenario, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    let cases = expand(base)?;
    let sw = base.sweep.as_ref().expect("checked by expand");
    let split = base.solver.band_split_ghz * 1e9;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sw.workers)
        .build()
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let results: Vec<Result<SweepRow, CliError>> = pool.install(|| {
        cases
            .par_iter()
            .map(|(v, s)| {
                let dir: PathBuf = out.join(value_dir(&sw.parameter, *v));
                let r = run_scenario(s, &dir)?;
                Ok(SweepRow {
                    value: *v,
                    n_dips: r.resonances.len(),
                    lower: deepest_in(&r.spectrum, f64::MIN, split),
                    upper: deepest_in(&r.spectrum, split, f64::MAX),
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let p = out.join("sweep.csv");
    std::fs::write(&p, sweep_csv(&sw.parameter, &rows, &base.hash())).map_err(|e| CliError::io(&p, e))?;
    Ok(rows)
}
