//! Scenario execution: geometry, solver runs, post-processing and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use buttonsim_core::fdtd::{PortDrive, ProbeRequest, Simulation, SimulationSetup, TimeSeriesRecord};
use buttonsim_core::geometry::{build_arm_phantom, build_button_stackup, build_chest_phantom, Scene};
use buttonsim_core::grid::GridSpec;
use buttonsim_core::material::Tissue;
use buttonsim_core::link::range_table;
use buttonsim_core::post::{
    compliance_check, dft, far_field, find_resonances, link_csv, pattern_csv, pattern_file_name, point_sar,
    reflection_coefficient, resonances_csv, s11, s11_csv, sar_csv, CsvHeader, FarFieldPattern, Resonance,
    S11Spectrum, SarGrid, SarResult,
};
use buttonsim_core::voxel::{voxelize, MaterialGrid, VoxelOptions};
use log::{info, warn};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{PhantomKind, Scenario};

const MM: f64 = 1e-3;
const GHZ: f64 = 1e9;
/// Throughput assumed for the runtime estimate (cell updates per second).
const ASSUMED_CELL_RATE: f64 = 4.0e7;

/// One solver run covering part of the analysis band.
#[derive(Debug, Clone, Serialize)]
pub struct BandRun {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Frequency whose tissue properties were used.
    pub tissue_reference: f64,
    pub dims: [usize; 3],
    pub cell: [f64; 3],
    pub steps: usize,
    pub stop_reason: String,
    pub dt: f64,
    pub seconds: f64,
    pub memory_estimate_mb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub scenario_hash: String,
    pub tool_version: String,
    pub phantom: PhantomKind,
    pub threads: usize,
    pub runs: Vec<BandRun>,
    pub timings_s: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub resonances: Vec<Resonance>,
    pub sar: Option<SarSummary>,
    pub link_tx_gain_dbi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SarSummary {
    pub frequency: f64,
    pub accepted_power_w: f64,
    pub peak_1g: f64,
    pub peak_10g: f64,
    pub pass: bool,
}

/// Everything a caller may want after a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub spectrum: S11Spectrum,
    pub resonances: Vec<Resonance>,
    pub patterns: Vec<FarFieldPattern>,
    pub manifest: Manifest,
}

/// The antenna alone, or on a phantom built with tissue properties at `f_ref`.
pub fn build_scene(s: &Scenario, f_ref: f64) -> Result<Scene, CliError> {
    let antenna = build_button_stackup(&s.antenna.to_params()).map_err(|e| CliError::Parse(e.to_string()))?;
    let gap = s.gap_mm * MM;
    let scene = match s.phantom {
        PhantomKind::FreeSpace => Ok(antenna),
        PhantomKind::Chest => build_chest_phantom(&antenna, gap, &s.tissues, f_ref),
        PhantomKind::Arm => build_arm_phantom(&antenna, gap, &s.tissues, f_ref),
    }
    .map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(scene)
}

/// Grid around the antenna; on a body the lower padding also spans the gap and `body_depth_mm` of tissue.
pub fn build_grid(s: &Scenario, scene: &Scene) -> Result<GridSpec, CliError> {
    let g = &s.grid;
    let pad = g.padding_mm * MM;
    let below = match s.phantom {
        PhantomKind::FreeSpace => pad,
        _ => (s.gap_mm + g.body_depth_mm) * MM,
    };
    let cell = [g.cell_mm[0] * MM, g.cell_mm[1] * MM, g.cell_mm[2] * MM];
    GridSpec::around(&scene.focus, cell, [pad, pad, pad, pad, below, pad], g.pml_cells)
        .map_err(|e| CliError::Parse(e.to_string()))
}

/// Frequency slices `(lo, hi, tissue reference)` that each get their own solver run.
pub fn band_plan(s: &Scenario) -> Vec<(f64, f64, f64)> {
    let (lo, hi) = (s.band.f_min_ghz * GHZ, s.band.f_max_ghz * GHZ);
    if s.phantom != PhantomKind::FreeSpace && s.solver.tissue_per_band {
        let split = s.solver.band_split_ghz * GHZ;
        let [a, b] = s.solver.tissue_reference_ghz;
        vec![(lo, split, a * GHZ), (split, hi, b * GHZ)]
    } else {
        vec![(lo, hi, 0.5 * (lo + hi))]
    }
}

fn in_slice(f: f64, plan: &[(f64, f64, f64)], index: usize) -> bool {
    let (lo, hi, _) = plan[index];
    let last = index + 1 == plan.len();
    f >= lo && (f < hi || (last && f <= hi))
}

fn slice_of(f: f64, plan: &[(f64, f64, f64)]) -> usize {
    (0..plan.len()).find(|&k| in_slice(f, plan, k)).unwrap_or(plan.len() - 1)
}

struct Solved {
    mgrid: MaterialGrid,
    record: TimeSeriesRecord,
    info: BandRun,
}

fn solve_slice(
    s: &Scenario,
    slice: (f64, f64, f64),
    phasor_freqs: Vec<f64>,
    want_surface: bool,
    want_volume: bool,
    warnings: &mut Vec<String>,
) -> Result<Solved, CliError> {
    let (f_lo, f_hi, f_ref) = slice;
    let scene = build_scene(s, f_ref)?;
    let grid = build_grid(s, &scene)?;
    let mut opts = VoxelOptions::new(f_ref);
    opts.sheet_model = s.antenna.sheet_model;
    opts.memory_budget = (s.grid.memory_budget_mb * 1048576.0) as usize;
    let mgrid = voxelize(&scene, &grid, &opts).map_err(|e| match e {
        e @ buttonsim_core::Error::MemoryBudget { .. } => CliError::Core(e),
        other => CliError::Parse(other.to_string()),
    })?;
    if let Some(w) = grid.resolution_warning(s.band.f_max_ghz * GHZ, mgrid.max_eps_r()) {
        warn!("{w}");
        warnings.push(w);
    }
    for n in &mgrid.notes {
        info!("{n}");
    }

    let interior = grid.interior();
    let mut probes = ProbeRequest {
        frequencies: phasor_freqs,
        ..ProbeRequest::default()
    };
    if want_surface {
        let m = s.grid.surface_margin_cells;
        let lo = [interior[0].0 + m, interior[1].0 + m, interior[2].0 + m];
        let hi = [interior[0].1 - m, interior[1].1 - m, interior[2].1 - m];
        probes.surface = Some((lo, hi));
    }
    if want_volume {
        probes.volume = Some((
            [interior[0].0, interior[1].0, interior[2].0],
            [interior[0].1, interior[1].1, interior[2].1],
        ));
    }

    let mem_mb = grid.memory_estimate() as f64 / 1048576.0;
    let upper_s = grid.num_cells() as f64 * s.solver.max_steps as f64 / ASSUMED_CELL_RATE;
    info!(
        "band {:.2}-{:.2} GHz: grid {:?} ({} cells), about {:.0} MB, at most {} steps (up to ~{:.0} s)",
        f_lo / GHZ,
        f_hi / GHZ,
        grid.dims,
        grid.num_cells(),
        mem_mb,
        s.solver.max_steps,
        upper_s
    );

    let mut setup = SimulationSetup::new(s.solver.excitation(), s.solver.boundary(s.grid.pml_cells));
    setup.stop = s.solver.stop();
    setup.courant_safety = s.solver.courant_safety;
    setup.probes = probes;
    let edges = mgrid
        .port
        .clone()
        .ok_or_else(|| CliError::Parse("the feed port did not resolve onto the grid".into()))?;
    setup.ports.push(PortDrive {
        edges,
        impedance: s.antenna.port_impedance_ohm,
        driven: true,
    });
    let t = Instant::now();
    let record = Simulation::new(&mgrid, setup)
        .map_err(CliError::solver)?
        .run()
        .map_err(CliError::solver)?;
    let seconds = t.elapsed().as_secs_f64();
    info!(
        "solver finished after {} steps ({:?}) in {:.1} s",
        record.metadata.steps, record.metadata.stop_reason, seconds
    );
    let info = BandRun {
        f_lo,
        f_hi,
        tissue_reference: f_ref,
        dims: grid.dims,
        cell: grid.cell,
        steps: record.metadata.steps,
        stop_reason: format!("{:?}", record.metadata.stop_reason),
        dt: record.dt,
        seconds,
        memory_estimate_mb: mem_mb,
    };
    Ok(Solved { mgrid, record, info })
}

/// Source voltage and port current/voltage spectra at `f` from one record.
fn port_phasors(rec: &TimeSeriesRecord, f: f64) -> Result<(Complex64, Complex64, Complex64), CliError> {
    let p = rec
        .ports
        .first()
        .ok_or_else(|| CliError::post(buttonsim_core::Error::InvalidArgument("record has no port".into())))?;
    let fr = [f];
    let vs = dft(&p.v_source, rec.dt, rec.v_offset, &fr)[0];
    let v = dft(&p.v, rec.dt, rec.v_offset, &fr)[0];
    let i = dft(&p.i, rec.dt, rec.i_offset, &fr)[0];
    if vs.norm() == 0.0 || i.norm() == 0.0 {
        return Err(CliError::post(buttonsim_core::Error::InsufficientExcitation(format!(
            "no excitation content at {:.3} GHz",
            f / GHZ
        ))));
    }
    Ok((vs, v, i))
}

/// Power accepted by the port for a unit-amplitude source phasor.
fn accepted_power(v: Complex64, i: Complex64, r: f64) -> f64 {
    let gamma = reflection_coefficient(v / i, r);
    (1.0 - gamma.norm_sqr()) / (8.0 * r)
}

fn sar_from(s: &Scenario, solved: &Solved, f: f64) -> Result<(SarResult, f64), CliError> {
    let rec = &solved.record;
    let vol = rec.volume_at(f).ok_or_else(|| {
        CliError::post(buttonsim_core::Error::InvalidArgument(format!("no volume phasors at {:.3} GHz", f / GHZ)))
    })?;
    let (vs, v, i) = port_phasors(rec, f)?;
    let p_acc = accepted_power(v, i, s.antenna.port_impedance_ohm);
    if !(p_acc > 0.0) {
        return Err(CliError::post(buttonsim_core::Error::InvalidArgument(
            "accepted power is not positive; SAR cannot be normalised".into(),
        )));
    }
    // fields per unit source phasor, then per watt accepted
    let scale = 1.0 / (vs.norm_sqr() * p_acc);
    let d = vol.dims();
    let n = d[0] * d[1] * d[2];
    let grid = &solved.mgrid.grid;
    let (mut e_sq, mut sigma, mut rho, mut tissue) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![false; n]);
    for k in 0..d[2] {
        for j in 0..d[1] {
            for ii in 0..d[0] {
                let q = ii + d[0] * (j + d[1] * k);
                let c = grid.cell_index(vol.lo[0] + ii, vol.lo[1] + j, vol.lo[2] + k);
                e_sq[q] = vol.magnitude_sq(q) * scale;
                sigma[q] = solved.mgrid.sigma[c] as f64;
                rho[q] = solved.mgrid.density[c] as f64;
                tissue[q] = solved.mgrid.tissue[c];
            }
        }
    }
    let sar = point_sar(&e_sq, &sigma, &rho, &tissue).map_err(CliError::post)?;
    let g = SarGrid::new(d, grid.cell, sar, rho, tissue).map_err(CliError::post)?;
    let result = SarResult::evaluate(&g, vol.lo, 1.0).map_err(CliError::post)?;
    Ok((result, p_acc))
}

/// Writes `name` into the staging directory and records it.
struct Stage {
    dir: PathBuf,
    files: Vec<String>,
}

impl Stage {
    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn staging_dir(out: &Path) -> Result<PathBuf, CliError> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let leaf = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let dir = parent.join(format!(".{leaf}.partial-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn publish(stage: &Stage, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for f in &stage.files {
        let (from, to) = (stage.dir.join(f), out.join(f));
        std::fs::rename(&from, &to).map_err(|e| CliError::io(&to, e))?;
    }
    std::fs::remove_dir_all(&stage.dir).map_err(|e| CliError::io(&stage.dir, e))
}

/// Runs a scenario and writes its outputs into `out`.
///
/// Files are staged next to `out` and moved into place only after every stage
/// succeeded, so a failed run leaves no partial outputs behind.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<RunSummary, CliError> {
    let mut stage = Stage {
        dir: staging_dir(out)?,
        files: Vec::new(),
    };
    let result = execute(s, &mut stage);
    match result {
        Ok(mut summary) => {
            publish(&stage, out)?;
            summary.out_dir = out.to_path_buf();
            Ok(summary)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&stage.dir);
            Err(e)
        }
    }
}

fn execute(s: &Scenario, stage: &mut Stage) -> Result<RunSummary, CliError> {
    let t_all = Instant::now();
    let hash = s.hash();
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();
    let plan = band_plan(s);
    let z0 = s.antenna.port_impedance_ohm;
    info!("scenario `{}` ({}), hash {}", s.name, s.phantom.label(), &hash[..16]);

    let pattern_freqs: Vec<f64> = s.outputs.pattern_ghz.iter().map(|f| f * GHZ).collect();
    let sar_freq = s.outputs.sar.then(|| s.outputs.sar_ghz * GHZ);

    let mut solved = Vec::new();
    for (k, &slice) in plan.iter().enumerate() {
        let mut freqs: Vec<f64> = pattern_freqs.iter().copied().filter(|f| in_slice(*f, &plan, k)).collect();
        let want_surface = !freqs.is_empty();
        let want_volume = sar_freq.is_some_and(|f| in_slice(f, &plan, k));
        if want_volume {
            freqs.push(sar_freq.unwrap());
        }
        solved.push(solve_slice(s, slice, freqs, want_surface, want_volume, &mut warnings)?);
        timings.insert(format!("solver_{k}"), solved[k].info.seconds);
    }

    let t_post = Instant::now();
    let frequencies = buttonsim_core::post::linspace(s.band.f_min_ghz * GHZ, s.band.f_max_ghz * GHZ, s.band.points);
    let mut v = Vec::with_capacity(frequencies.len());
    let mut i = Vec::with_capacity(frequencies.len());
    for k in 0..plan.len() {
        let fs: Vec<f64> = frequencies.iter().copied().filter(|f| slice_of(*f, &plan) == k).collect();
        if fs.is_empty() {
            continue;
        }
        let rec = &solved[k].record;
        check_support(rec, &fs)?;
        let p = &rec.ports[0];
        v.extend(dft(&p.v, rec.dt, rec.v_offset, &fs));
        i.extend(dft(&p.i, rec.dt, rec.i_offset, &fs));
    }
    let spectrum = s11(&frequencies, &v, &i, z0).map_err(CliError::post)?;
    if !spectrum.passivity_violations.is_empty() {
        let w = format!("{} frequencies show |S11| > 1", spectrum.passivity_violations.len());
        warn!("{w}");
        warnings.push(w);
    }
    let resonances = find_resonances(&spectrum, s.outputs.resonance_threshold_db);
    let notes = tissue_notes(s, &plan);
    let header = CsvHeader::new(hash.clone(), "port voltage and current spectra; S11 against the port reference impedance")
        .with_notes(&notes);
    if s.outputs.s11 {
        stage.write("s11.csv", &s11_csv(&spectrum, &header))?;
    }
    stage.write("resonances.csv", &resonances_csv(&resonances, &header))?;

    let mut patterns = Vec::new();
    for &f in &pattern_freqs {
        let k = slice_of(f, &plan);
        let sv = &solved[k];
        let surface = sv.record.surface.as_ref().ok_or_else(|| {
            CliError::post(buttonsim_core::Error::InvalidSurface("no surface phasors were recorded".into()))
        })?;
        let (vs, pv, pi) = port_phasors(&sv.record, f)?;
        let p_acc = accepted_power(pv, pi, z0);
        let pat = far_field(surface, &sv.mgrid.grid, f, 1.0 / vs, Some(p_acc)).map_err(CliError::post)?;
        let h = CsvHeader::new(hash.clone(), "gain relative to the power accepted by the port (dBi)");
        stage.write(&pattern_file_name("e", f), &pattern_csv(&pat, "e", &h))?;
        stage.write(&pattern_file_name("h", f), &pattern_csv(&pat, "h", &h))?;
        patterns.push(pat);
    }

    let mut sar_summary = None;
    if let Some(f) = sar_freq {
        let k = slice_of(f, &plan);
        let (result, p_acc) = sar_from(s, &solved[k], f)?;
        let compliance = compliance_check(result.peak_1g.value, result.peak_10g.value).map_err(CliError::post)?;
        let h = CsvHeader::new(hash.clone(), format!("SAR per 1 W accepted at {:.3} GHz", f / GHZ)).with_notes(&notes);
        stage.write("sar.csv", &sar_csv(&result, &compliance, &h))?;
        sar_summary = Some(SarSummary {
            frequency: f,
            accepted_power_w: p_acc,
            peak_1g: result.peak_1g.value,
            peak_10g: result.peak_10g.value,
            pass: compliance.pass,
        });
    }

    let mut link_gain = None;
    if s.outputs.link {
        let gain = if s.link.gain_from_pattern {
            let target = s.link.frequency_ghz * GHZ;
            patterns
                .iter()
                .min_by(|a, b| (a.frequency - target).abs().total_cmp(&(b.frequency - target).abs()))
                .map(|p| p.directivity_dbi + 10.0 * (p.radiated_power / p.reference_power).log10())
                .unwrap_or(s.link.tx_gain_dbi)
        } else {
            s.link.tx_gain_dbi
        };
        let rows = range_table(&s.link.radio(gain), &s.link.distances_m).map_err(CliError::post)?;
        let h = CsvHeader::new(hash.clone(), format!("log-distance path loss, tx gain {gain:.2} dBi"));
        stage.write("link.csv", &link_csv(&rows, &h))?;
        link_gain = Some(gain);
    }
    timings.insert("post_processing".into(), t_post.elapsed().as_secs_f64());
    timings.insert("total".into(), t_all.elapsed().as_secs_f64());

    let mut files = stage.files.clone();
    files.push("run_manifest.json".into());
    let manifest = Manifest {
        name: s.name.clone(),
        scenario_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        phantom: s.phantom,
        threads: rayon::current_num_threads(),
        runs: solved.iter().map(|x| x.info.clone()).collect(),
        timings_s: timings,
        files,
        warnings,
        resonances: resonances.clone(),
        sar: sar_summary,
        link_tx_gain_dbi: link_gain,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    stage.write("run_manifest.json", &json)?;
    Ok(RunSummary {
        out_dir: PathBuf::new(),
        spectrum,
        resonances,
        patterns,
        manifest,
    })
}

/// Header lines listing the tissue properties used by each solver run.
fn tissue_notes(s: &Scenario, plan: &[(f64, f64, f64)]) -> Vec<String> {
    if s.phantom == PhantomKind::FreeSpace {
        return Vec::new();
    }
    plan.iter()
        .map(|&(lo, hi, f_ref)| {
            let parts: Vec<String> = [Tissue::Skin, Tissue::Fat, Tissue::Muscle]
                .iter()
                .filter_map(|&t| s.tissues.properties(t, f_ref).ok().map(|p| (t, p)))
                .map(|(t, p)| format!("{} eps_r {} sigma {} S/m rho {} kg/m3", t.name(), p.eps_r, p.sigma, p.density))
                .collect();
            format!("tissues {:.2}-{:.2} GHz (at {:.2} GHz): {}", lo / GHZ, hi / GHZ, f_ref / GHZ, parts.join("; "))
        })
        .collect()
}

fn check_support(rec: &TimeSeriesRecord, fs: &[f64]) -> Result<(), CliError> {
    // port_spectra performs the excitation-support check; reuse it on the slice edges
    let (lo, hi) = (fs[0], fs[fs.len() - 1]);
    buttonsim_core::post::port_spectra(rec, lo, hi, 2).map(|_| ()).map_err(CliError::post)
}
