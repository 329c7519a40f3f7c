use std::path::{Path, PathBuf};
use std::process::ExitCode;

use buttonsim::scenario::Scenario;
use buttonsim::{pipeline, run_scenario, run_sweep, CliError};
use buttonsim_core::cavity;
use buttonsim_core::link::{max_range, range_table, RadioParams};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "buttonsim", version, about = "FDTD workbench for a wearable button antenna")]
struct Cli {
    /// Worker threads for the solver (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the cell size on all three axes (mm).
    #[arg(long, global = true)]
    cell_mm: Option<f64>,
    /// Only report warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Patch radius for a target resonance from the cavity model.
    Design {
        /// Target frequency (GHz).
        #[arg(long)]
        f_ghz: f64,
        /// Substrate permittivity.
        #[arg(long, default_value_t = 2.2)]
        eps_r: f64,
        /// Substrate height (mm).
        #[arg(long, default_value_t = 1.574)]
        h_mm: f64,
    },
    /// Run one scenario.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the [sweep] section of a scenario.
    Sweep {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Link budget table and maximum range.
    Link {
        /// Transmit antenna gain (dBi).
        #[arg(long, default_value_t = 2.0)]
        gain_dbi: f64,
        /// Use the log-distance wearable preset instead of free-space defaults.
        #[arg(long)]
        wearable: bool,
        /// Distances (m) for the table.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        distances: Vec<f64>,
    },
    /// Parse a scenario, print its hash and grid size without running it.
    Validate { scenario: PathBuf },
}

fn load(path: &Path, cell_mm: Option<f64>) -> Result<Scenario, CliError> {
    let mut s = Scenario::load(path)?;
    if let Some(c) = cell_mm {
        s.grid.cell_mm = [c; 3];
        s.resolve(&path.display().to_string())?;
    }
    Ok(s)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design { f_ghz, eps_r, h_mm } => {
            let d = cavity::design(f_ghz * 1e9, eps_r, h_mm * 1e-3).map_err(|e| CliError::Parse(e.to_string()))?;
            println!("target         {:.4} GHz", f_ghz);
            println!("radius a       {:.4} mm", d.a * 1e3);
            println!("effective a_e  {:.4} mm", d.a_e * 1e3);
            println!("TM11 resonance {:.4} GHz", d.f_r / 1e9);
        }
        Command::Run { scenario, out } => {
            let s = load(&scenario, cli.cell_mm)?;
            let r = run_scenario(&s, &out)?;
            for res in &r.resonances {
                println!(
                    "dip {:.3} GHz  {:.2} dB  bandwidth {:.1} MHz",
                    res.f_dip / 1e9,
                    res.depth_db,
                    res.bandwidth() / 1e6
                );
            }
            if let Some(sar) = &r.manifest.sar {
                println!(
                    "SAR per W at {:.2} GHz: 1 g {:.3} W/kg, 10 g {:.3} W/kg ({})",
                    sar.frequency / 1e9,
                    sar.peak_1g,
                    sar.peak_10g,
                    if sar.pass { "pass" } else { "fail" }
                );
            }
            println!("outputs in {}", r.out_dir.display());
        }
        Command::Sweep { scenario, out } => {
            let s = load(&scenario, cli.cell_mm)?;
            let rows = run_sweep(&s, &out)?;
            println!("{} runs, summary in {}", rows.len(), out.join("sweep.csv").display());
        }
        Command::Link { gain_dbi, wearable, distances } => {
            let p = if wearable {
                RadioParams::wearable_preset(gain_dbi)
            } else {
                RadioParams { tx_gain_dbi: gain_dbi, ..RadioParams::default() }
            };
            let rows = range_table(&p, &distances).map_err(|e| CliError::Parse(e.to_string()))?;
            println!("distance_m  pr_dbm  margin_db");
            for (d, pr, m) in rows {
                println!("{d:>10.2} {pr:>7.2} {m:>10.2}");
            }
            let r = max_range(&p).map_err(|e| CliError::Parse(e.to_string()))?;
            if r.infeasible {
                println!("link infeasible even at the reference distance");
            } else {
                println!("maximum range {:.2} m", r.range_m);
            }
        }
        Command::Validate { scenario } => {
            let s = load(&scenario, cli.cell_mm)?;
            println!("{}: ok, hash {}", s.name, s.hash());
            for (lo, hi, f_ref) in pipeline::band_plan(&s) {
                let scene = pipeline::build_scene(&s, f_ref)?;
                let g = pipeline::build_grid(&s, &scene)?;
                println!(
                    "  run {:.2}-{:.2} GHz: grid {:?}, {} cells, ~{:.0} MB",
                    lo / 1e9,
                    hi / 1e9,
                    g.dims,
                    g.num_cells(),
                    g.memory_estimate() as f64 / 1048576.0
                );
            }
            if let Some(sw) = &s.sweep {
                buttonsim::sweep::expand(&s)?;
                println!("  sweep {} over {} values", sw.parameter, sw.values.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
