//! Leapfrog Yee updates, lumped ports, CPML memory terms and running DFTs.
//!
//! Time levels: E is known at integer steps, H at half steps. One call to
//! [`Simulation::step`] advances H from n-½ to n+½ and E from n to n+1.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Range;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{C0, EPS0, MU0};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Axis, PortSpec};
use crate::grid::GridSpec;
use crate::voxel::{MaterialGrid, PortEdges};

use super::boundary::{AxisProfile, BoundarySpec, FaceKind};
use super::excitation::ExcitationSpec;
use super::record::*;

pub const DEFAULT_COURANT_SAFETY: f64 = 0.99;
const DIVERGENCE_FACTOR: f64 = 1e6;
const DIVERGENCE_CHECK_INTERVAL: usize = 100;

/// Largest stable time step scaled by `safety`.
pub fn courant_timestep(grid: &GridSpec, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(invalid(format!("courant safety must lie in (0, 1], got {safety}")));
    }
    let mut s = 0.0;
    for d in grid.cell {
        if !(d > 0.0) {
            return Err(invalid("cell sizes must be positive"));
        }
        s += 1.0 / (d * d);
    }
    Ok(safety / (C0 * s.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCriterion {
    pub max_steps: usize,
    /// Stop once windowed port energy falls this far below its peak (dB).
    pub energy_floor_db: f64,
}

impl Default for StopCriterion {
    fn default() -> Self {
        Self {
            max_steps: 40_000,
            energy_floor_db: -60.0,
        }
    }
}

impl StopCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        if !(self.energy_floor_db < 0.0) {
            return Err(invalid("energy_floor_db must be negative"));
        }
        Ok(())
    }
}

/// A lumped resistive port; `driven` ports carry the excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct PortDrive {
    pub edges: PortEdges,
    pub impedance: f64,
    pub driven: bool,
}

/// Additive (soft) E source: `scale · excitation(t)` added to every listed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSource {
    pub axis: Axis,
    pub nodes: Vec<[usize; 3]>,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub excitation: ExcitationSpec,
    pub boundary: BoundarySpec,
    pub stop: StopCriterion,
    pub probes: ProbeRequest,
    pub courant_safety: f64,
    pub ports: Vec<PortDrive>,
    pub soft_sources: Vec<SoftSource>,
}

impl SimulationSetup {
    pub fn new(excitation: ExcitationSpec, boundary: BoundarySpec) -> Self {
        Self {
            excitation,
            boundary,
            stop: StopCriterion::default(),
            probes: ProbeRequest::default(),
            courant_safety: DEFAULT_COURANT_SAFETY,
            ports: Vec::new(),
            soft_sources: Vec::new(),
        }
    }
}

struct PortState {
    axis: usize,
    nodes: Vec<usize>,
    direction: f32,
    /// Source coupling per edge, multiplied by the per-edge source voltage.
    cs: Vec<f32>,
    edge_len: f64,
    loop_node: usize,
    impedance: f64,
    driven: bool,
    n_edges: usize,
    series: PortSeries,
}

struct MurFace {
    axis: usize,
    coeff: f32,
    /// Node indices of wall and inner planes for both tangential components.
    wall: [Vec<usize>; 2],
    inner: [Vec<usize>; 2],
    saved: [Vec<f32>; 2],
}

struct VolumeAcc {
    lo: [usize; 3],
    hi: [usize; 3],
    acc: Vec<[Vec<Complex32>; 3]>,
}

struct SurfaceAcc {
    lo: [usize; 3],
    hi: [usize; 3],
    faces: Vec<SurfaceFace>,
}

pub struct Simulation {
    grid: GridSpec,
    dims: [usize; 3],
    strides: [usize; 3],
    e: [Vec<f32>; 3],
    h: [Vec<f32>; 3],
    coef_id: [Vec<u16>; 3],
    coef: Vec<[f32; 2]>,
    /// Expanded per-edge update coefficients.
    ca: [Vec<f32>; 3],
    cb: [Vec<f32>; 3],
    /// Relative permittivity of each coefficient class.
    class_eps: Vec<f64>,
    prof: [AxisProfile; 3],
    /// `psi_e[a][d]`: memory term of E_a for the derivative along axis d.
    psi_e: [[Vec<f32>; 3]; 3],
    psi_h: [[Vec<f32>; 3]; 3],
    dt: f64,
    ch: f32,
    boundary: BoundarySpec,
    excitation: ExcitationSpec,
    ports: Vec<PortState>,
    sources: Vec<(usize, Vec<usize>, f32)>,
    mur: Vec<MurFace>,
    points: Vec<(usize, usize)>,
    point_series: Vec<Vec<f32>>,
    frequencies: Vec<f64>,
    dft_stride: usize,
    volume: Option<VolumeAcc>,
    surface: Option<SurfaceAcc>,
    /// Thin-wire H corrections: (H axis, H index, E axis, E index, coefficient).
    thin: Vec<(u8, usize, u8, usize, f32)>,
    step: usize,
    stop: StopCriterion,
    notes: Vec<String>,
}

fn interior(dims: [usize; 3], a: usize, d: usize) -> Range<usize> {
    if d == a {
        0..dims[d]
    } else {
        1..dims[d]
    }
}

impl Simulation {
    pub fn new(mgrid: &MaterialGrid, setup: SimulationSetup) -> Result<Self> {
        setup.boundary.validate()?;
        setup.stop.validate()?;
        setup.excitation.validate()?;
        let grid = mgrid.grid.clone();
        let dims = grid.dims;
        if dims.iter().any(|&d| d < 2) {
            return Err(invalid("grid needs at least two cells per axis"));
        }
        let strides = grid.node_strides();
        let nn = grid.num_nodes();
        let dt = courant_timestep(&grid, setup.courant_safety)?;
        let prof = [0, 1, 2].map(|a| AxisProfile::new(&setup.boundary, a, dims[a], grid.cell[a], dt));

        // Per-edge coefficient classes.
        let mut table: HashMap<[u32; 3], u16> = HashMap::new();
        let mut coef: Vec<[f32; 2]> = vec![[0.0, 0.0]];
        let mut class_eps: Vec<f64> = vec![0.0];
        let mut classify = |eps: f64, sigma: f64, g: f64| -> Result<u16> {
            let key = [(eps as f32).to_bits(), (sigma as f32).to_bits(), (g as f32).to_bits()];
            if let Some(&id) = table.get(&key) {
                return Ok(id);
            }
            let eps = eps * EPS0;
            let den = eps / dt + 0.5 * (sigma + g);
            let ca = (eps / dt - 0.5 * (sigma + g)) / den;
            let cb = 1.0 / den;
            if coef.len() >= u16::MAX as usize {
                return Err(invalid("too many distinct material classes for the coefficient table"));
            }
            coef.push([ca as f32, cb as f32]);
            class_eps.push(eps / EPS0);
            let id = (coef.len() - 1) as u16;
            table.insert(key, id);
            Ok(id)
        };

        let mut extra_sigma: [HashMap<usize, f64>; 3] = Default::default();
        for &(axis, node, s) in &mgrid.resistive_edges {
            *extra_sigma[axis.index()].entry(node).or_insert(0.0) += s as f64;
        }
        let mut port_g: [HashMap<usize, f64>; 3] = Default::default();
        for p in &setup.ports {
            if p.edges.is_empty() {
                return Err(Error::PortResolution("port has no edges".into()));
            }
            if !(p.impedance > 0.0) {
                return Err(invalid("port impedance must be positive"));
            }
            let a = p.edges.axis.index();
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let r_e = p.impedance / p.edges.len() as f64;
            let area = grid.cell[b] * grid.cell[c];
            for n in &p.edges.nodes {
                if n[a] >= dims[a] || n[b] == 0 || n[b] >= dims[b] || n[c] == 0 || n[c] >= dims[c] {
                    return Err(Error::PortResolution(format!("port edge at {n:?} lies on the grid boundary")));
                }
                let idx = grid.node_index(n[0], n[1], n[2]);
                port_g[a].insert(idx, grid.cell[a] / (r_e * area));
            }
        }

        let mut coef_id: [Vec<u16>; 3] = [vec![0; nn], vec![0; nn], vec![0; nn]];
        let nodes = grid.nodes();
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            for k in 0..nodes[2] {
                for j in 0..nodes[1] {
                    for i in 0..nodes[0] {
                        let idx3 = [i, j, k];
                        if idx3[a] >= dims[a] {
                            continue;
                        }
                        let g = grid.node_index(i, j, k);
                        let port = port_g[a].get(&g).copied();
                        if mgrid.pec_edges[a][g] && port.is_none() {
                            continue;
                        }
                        let (mut eps, mut sig, mut w) = (0.0, 0.0, 0.0);
                        for db in 0..2 {
                            for dc in 0..2 {
                                if idx3[b] + db == 0 || idx3[b] + db > dims[b] || idx3[c] + dc == 0 || idx3[c] + dc > dims[c] {
                                    continue;
                                }
                                let mut cell = idx3;
                                cell[b] = idx3[b] + db - 1;
                                cell[c] = idx3[c] + dc - 1;
                                let ci = grid.cell_index(cell[0], cell[1], cell[2]);
                                eps += mgrid.eps_r[ci] as f64;
                                sig += mgrid.sigma[ci] as f64;
                                w += 1.0;
                            }
                        }
                        eps /= w;
                        sig /= w;
                        sig += extra_sigma[a].get(&g).copied().unwrap_or(0.0);
                        coef_id[a][g] = classify(eps, sig, port.unwrap_or(0.0))?;
                    }
                }
            }
        }

        let zeros = || vec![0.0f32; nn];
        let mut psi_e: [[Vec<f32>; 3]; 3] = Default::default();
        let mut psi_h: [[Vec<f32>; 3]; 3] = Default::default();
        for a in 0..3 {
            for d in 0..3 {
                if d != a && prof[d].any() {
                    psi_e[a][d] = zeros();
                    psi_h[a][d] = zeros();
                }
            }
        }

        let mut ports = Vec::new();
        for p in &setup.ports {
            let a = p.edges.axis.index();
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let idx: Vec<usize> = p.edges.nodes.iter().map(|n| grid.node_index(n[0], n[1], n[2])).collect();
            let r_e = p.impedance / idx.len() as f64;
            let area = grid.cell[b] * grid.cell[c];
            let cs = idx
                .iter()
                .map(|&g| {
                    let cb = coef[coef_id[a][g] as usize][1] as f64;
                    (cb / (r_e * area)) as f32
                })
                .collect();
            let mid = idx[idx.len() / 2];
            ports.push(PortState {
                axis: a,
                loop_node: mid,
                nodes: idx,
                direction: p.edges.direction as f32,
                cs,
                edge_len: grid.cell[a],
                impedance: p.impedance,
                driven: p.driven,
                n_edges: p.edges.len(),
                series: PortSeries {
                    impedance: p.impedance,
                    v: Vec::new(),
                    i: Vec::new(),
                    v_source: Vec::new(),
                },
            });
        }

        let sources = setup
            .soft_sources
            .iter()
            .map(|s| {
                let a = s.axis.index();
                (a, s.nodes.iter().map(|n| grid.node_index(n[0], n[1], n[2])).collect(), s.scale as f32)
            })
            .collect();

        let mut mur = Vec::new();
        for d in 0..3 {
            for high in [false, true] {
                if setup.boundary.face(d, high) != FaceKind::Mur1 {
                    continue;
                }
                let delta = grid.cell[d];
                let coeff = ((C0 * dt - delta) / (C0 * dt + delta)) as f32;
                let w = if high { dims[d] } else { 0 };
                let inner = if high { dims[d] - 1 } else { 1 };
                let mut wall: [Vec<usize>; 2] = Default::default();
                let mut inn: [Vec<usize>; 2] = Default::default();
                for (slot, a) in [(d + 1) % 3, (d + 2) % 3].into_iter().enumerate() {
                    let e_ax = 3 - a - d;
                    for u in 0..dims[a] {
                        for v in 1..dims[e_ax] {
                            let mut n = [0usize; 3];
                            n[a] = u;
                            n[e_ax] = v;
                            n[d] = w;
                            wall[slot].push(grid.node_index(n[0], n[1], n[2]));
                            n[d] = inner;
                            inn[slot].push(grid.node_index(n[0], n[1], n[2]));
                        }
                    }
                }
                let saved = [vec![0.0; inn[0].len()], vec![0.0; inn[1].len()]];
                mur.push(MurFace {
                    axis: d,
                    coeff,
                    wall,
                    inner: inn,
                    saved,
                });
            }
        }

        let mut points = Vec::new();
        for p in &setup.probes.points {
            let n = p.node;
            if n.iter().zip(nodes).any(|(&x, m)| x >= m) {
                return Err(invalid(format!("point probe {} outside the grid", p.name)));
            }
            points.push((p.axis.index(), grid.node_index(n[0], n[1], n[2])));
        }

        let frequencies = setup.probes.frequencies.clone();
        if frequencies.iter().any(|f| !(*f > 0.0)) {
            return Err(invalid("probe frequencies must be positive"));
        }
        let f_max = frequencies.iter().cloned().fold(0.0, f64::max);
        let dft_stride = setup.probes.dft_stride.unwrap_or_else(|| {
            if f_max > 0.0 {
                ((1.0 / (10.0 * f_max * dt)).floor() as usize).max(1)
            } else {
                1
            }
        });

        let volume = match setup.probes.volume {
            Some((lo, hi)) if !frequencies.is_empty() => {
                for a in 0..3 {
                    if lo[a] >= hi[a] || hi[a] > dims[a] {
                        return Err(invalid("volume probe box is empty or outside the grid"));
                    }
                }
                let n = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
                let z = vec![Complex32::new(0.0, 0.0); n];
                Some(VolumeAcc {
                    lo,
                    hi,
                    acc: frequencies.iter().map(|_| [z.clone(), z.clone(), z.clone()]).collect(),
                })
            }
            _ => None,
        };

        let surface = match setup.probes.surface {
            Some((lo, hi)) if !frequencies.is_empty() => {
                for a in 0..3 {
                    if lo[a] + 1 > hi[a] || lo[a] == 0 || hi[a] >= dims[a] {
                        return Err(Error::InvalidSurface("surface box must lie strictly inside the grid".into()));
                    }
                }
                let mut faces = Vec::new();
                for a in 0..3 {
                    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                    let counts = [hi[b] - lo[b], hi[c] - lo[c]];
                    let z = vec![Complex32::new(0.0, 0.0); counts[0] * counts[1]];
                    for (sign, plane) in [(-1.0, lo[a]), (1.0, hi[a])] {
                        faces.push(SurfaceFace {
                            normal: Axis::from_index(a),
                            sign,
                            plane,
                            counts,
                            e: frequencies.iter().map(|_| [z.clone(), z.clone()]).collect(),
                            h: frequencies.iter().map(|_| [z.clone(), z.clone()]).collect(),
                        });
                    }
                }
                Some(SurfaceAcc { lo, hi, faces })
            }
            _ => None,
        };

        let ch = (dt / MU0) as f32;
        let thin = thin_wire_corrections(mgrid, &prof, &port_g, ch);

        let mut notes = mgrid.notes.clone();
        notes.push(format!("coefficient classes: {}", coef.len()));
        if !thin.is_empty() {
            notes.push(format!("thin-wire corrections: {}", thin.len()));
        }

        Ok(Self {
            dims,
            strides,
            e: [zeros(), zeros(), zeros()],
            h: [zeros(), zeros(), zeros()],
            ca: [0, 1, 2].map(|a| coef_id[a].iter().map(|&id| coef[id as usize][0]).collect()),
            cb: [0, 1, 2].map(|a| coef_id[a].iter().map(|&id| coef[id as usize][1]).collect()),
            coef_id,
            coef,
            class_eps,
            prof,
            psi_e,
            psi_h,
            dt,
            ch,
            thin,
            boundary: setup.boundary,
            excitation: setup.excitation,
            ports,
            sources,
            mur,
            point_series: vec![Vec::new(); points.len()],
            points,
            frequencies,
            dft_stride,
            volume,
            surface,
            step: 0,
            stop: setup.stop,
            notes,
            grid,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn e(&self, axis: Axis) -> &[f32] {
        &self.e[axis.index()]
    }

    pub fn h(&self, axis: Axis) -> &[f32] {
        &self.h[axis.index()]
    }

    pub fn e_mut(&mut self, axis: Axis) -> &mut [f32] {
        &mut self.e[axis.index()]
    }

    pub fn coefficient_classes(&self) -> usize {
        self.coef.len()
    }

    /// Electric energy ½Σε|E|²dV over all edges and magnetic energy ½Σμ|H|²dV
    /// over all faces, using the current (staggered) field values.
    pub fn field_energy(&self) -> (f64, f64) {
        let dv = self.grid.cell_volume();
        let mut we = 0.0;
        for a in 0..3 {
            we += self.e[a]
                .par_iter()
                .zip(self.coef_id[a].par_iter())
                .map(|(&e, &id)| self.class_eps[id as usize] * (e as f64) * (e as f64))
                .sum::<f64>();
        }
        let wh: f64 = self.h.iter().map(|h| h.par_iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>()).sum();
        (0.5 * EPS0 * we * dv, 0.5 * MU0 * wh * dv)
    }

    fn update_h(&mut self) {
        self.update_h_curl();
        for &(ha, hi, ea, ei, c) in &self.thin {
            self.h[ha as usize][hi] += c * self.e[ea as usize][ei];
        }
    }

    fn update_h_curl(&mut self) {
        let (dims, s, ch) = (self.dims, self.strides, self.ch);
        let [hx, hy, hz] = &mut self.h;
        let [ex, ey, ez] = &self.e;
        let p = &self.prof;
        h_kernel::<0>(hx, ey, ez, &p[1].h_inv_kd, &p[2].h_inv_kd, ch, dims, s);
        h_kernel::<1>(hy, ez, ex, &p[2].h_inv_kd, &p[0].h_inv_kd, ch, dims, s);
        h_kernel::<2>(hz, ex, ey, &p[0].h_inv_kd, &p[1].h_inv_kd, ch, dims, s);
        for a in 0..3 {
            for d in 0..3 {
                if self.psi_h[a][d].is_empty() {
                    continue;
                }
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                // derivative along b enters with -, along c with +
                let (src, sign) = if d == b { (c, -1.0f32) } else { (b, 1.0f32) };
                let mut ranges = [0..dims[0], 0..dims[1], 0..dims[2]];
                ranges[a] = 0..dims[a] + 1;
                for slab in p[d].h_slabs(dims[d]) {
                    ranges[d] = slab;
                    psi_h_kernel(
                        &mut self.h[a],
                        &mut self.psi_h[a][d],
                        &self.e[src],
                        &p[d].h_b,
                        &p[d].h_c,
                        d,
                        sign * ch,
                        &ranges,
                        s,
                    );
                }
            }
        }
    }

    fn update_e(&mut self) {
        let (dims, s) = (self.dims, self.strides);
        for m in &mut self.mur {
            for slot in 0..2 {
                let a = (m.axis + 1 + slot) % 3;
                for (o, &n) in m.saved[slot].iter_mut().zip(&m.inner[slot]) {
                    *o = self.e[a][n];
                }
            }
        }
        {
            let [ex, ey, ez] = &mut self.e;
            let [hx, hy, hz] = &self.h;
            let p = &self.prof;
            let (ca, cb) = (&self.ca, &self.cb);
            e_kernel::<0>(ex, hy, hz, &ca[0], &cb[0], &p[1].e_inv_kd, &p[2].e_inv_kd, dims, s);
            e_kernel::<1>(ey, hz, hx, &ca[1], &cb[1], &p[2].e_inv_kd, &p[0].e_inv_kd, dims, s);
            e_kernel::<2>(ez, hx, hy, &ca[2], &cb[2], &p[0].e_inv_kd, &p[1].e_inv_kd, dims, s);
        }
        self.update_pmc_walls();
        for a in 0..3 {
            for d in 0..3 {
                if self.psi_e[a][d].is_empty() {
                    continue;
                }
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                let (src, sign) = if d == b { (c, 1.0f32) } else { (b, -1.0f32) };
                let mut ranges = [0..0, 0..0, 0..0];
                for x in 0..3 {
                    ranges[x] = self.active_range(a, x);
                }
                for slab in self.prof[d].e_slabs(dims[d]) {
                    ranges[d] = slab;
                    psi_e_kernel(
                        &mut self.e[a],
                        &mut self.psi_e[a][d],
                        &self.h[src],
                        &self.cb[a],
                        &self.prof[d].e_b,
                        &self.prof[d].e_c,
                        d,
                        sign,
                        &ranges,
                        s,
                    );
                }
            }
        }
        let t_half = (self.step as f64 + 0.5) * self.dt;
        let vs = self.excitation.value(t_half);
        for p in &self.ports {
            if !p.driven {
                continue;
            }
            let vs_e = (vs / p.n_edges as f64) as f32;
            for (&g, &cs) in p.nodes.iter().zip(&p.cs) {
                self.e[p.axis][g] += cs * p.direction * vs_e;
            }
        }
        let sval = vs as f32;
        for (a, nodes, scale) in &self.sources {
            for &g in nodes {
                self.e[*a][g] += scale * sval;
            }
        }
        for m in &self.mur {
            for slot in 0..2 {
                let a = (m.axis + 1 + slot) % 3;
                for ((&w, &inn), &old_in) in m.wall[slot].iter().zip(&m.inner[slot]).zip(&m.saved[slot]) {
                    let old_w = self.e[a][w];
                    self.e[a][w] = old_in + m.coeff * (self.e[a][inn] - old_w);
                }
            }
        }
    }

    /// Index range along axis `x` over which E_a is updated, PMC walls included.
    fn active_range(&self, a: usize, x: usize) -> Range<usize> {
        if x == a {
            return 0..self.dims[x];
        }
        let lo = if self.boundary.face(x, false) == FaceKind::Pmc { 0 } else { 1 };
        let hi = if self.boundary.face(x, true) == FaceKind::Pmc {
            self.dims[x] + 1
        } else {
            self.dims[x]
        };
        lo..hi
    }

    fn update_pmc_walls(&mut self) {
        if !self.boundary.any(FaceKind::Pmc) {
            return;
        }
        let dims = self.dims;
        let s = self.strides;
        let pmc = |d: usize, high: bool| self.boundary.face(d, high) == FaceKind::Pmc;
        let mut updates: Vec<(usize, usize, f32)> = Vec::new();
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let r = [0, 1, 2].map(|x| self.active_range(a, x));
            for k in r[2].clone() {
                for j in r[1].clone() {
                    for i in r[0].clone() {
                        let idx = [i, j, k];
                        let on_b = idx[b] == 0 || idx[b] == dims[b];
                        let on_c = idx[c] == 0 || idx[c] == dims[c];
                        if !on_b && !on_c {
                            continue;
                        }
                        let g = i * s[0] + j * s[1] + k * s[2];
                        let (hb, hc) = (&self.h[b], &self.h[c]);
                        let db = if idx[b] == 0 && pmc(b, false) {
                            2.0 * hc[g]
                        } else if idx[b] == dims[b] && pmc(b, true) {
                            -2.0 * hc[g - s[b]]
                        } else {
                            hc[g] - hc[g - s[b]]
                        };
                        let dc = if idx[c] == 0 && pmc(c, false) {
                            2.0 * hb[g]
                        } else if idx[c] == dims[c] && pmc(c, true) {
                            -2.0 * hb[g - s[c]]
                        } else {
                            hb[g] - hb[g - s[c]]
                        };
                        let curl = db * self.prof[b].e_inv_kd[idx[b]] - dc * self.prof[c].e_inv_kd[idx[c]];
                        let (ca, cb) = (self.ca[a][g], self.cb[a][g]);
                        updates.push((a, g, ca * self.e[a][g] + cb * curl));
                    }
                }
            }
        }
        for (a, g, v) in updates {
            self.e[a][g] = v;
        }
    }

    fn record(&mut self) {
        let n = self.step;
        let t_e = (n as f64 + 1.0) * self.dt;
        let vs_now = self.excitation.value(t_e);
        let cell = self.grid.cell;
        let s = self.strides;
        for p in &mut self.ports {
            let e = &self.e[p.axis];
            let v: f64 = p.nodes.iter().map(|&g| e[g] as f64).sum::<f64>() * p.edge_len * p.direction as f64;
            let (b, c) = ((p.axis + 1) % 3, (p.axis + 2) % 3);
            let g = p.loop_node;
            let (hb, hc) = (&self.h[b], &self.h[c]);
            let circ = (hc[g] - hc[g - s[b]]) as f64 * cell[c] - (hb[g] - hb[g - s[c]]) as f64 * cell[b];
            p.series.v.push(v);
            p.series.i.push(-(p.direction as f64) * circ);
            p.series.v_source.push(if p.driven { vs_now } else { 0.0 });
        }
        for (series, &(a, g)) in self.point_series.iter_mut().zip(&self.points) {
            series.push(self.e[a][g]);
        }
        if !self.frequencies.is_empty() && n % self.dft_stride == 0 {
            let w = self.dt * self.dft_stride as f64;
            let t_h = (n as f64 + 0.5) * self.dt;
            let we: Vec<Complex32> = self.frequencies.iter().map(|f| phase(*f, t_e, w)).collect();
            let wh: Vec<Complex32> = self.frequencies.iter().map(|f| phase(*f, t_h, w)).collect();
            if let Some(vol) = &mut self.volume {
                accumulate_volume(vol, &self.e, s, &we);
            }
            if let Some(surf) = &mut self.surface {
                accumulate_surface(surf, &self.e, &self.h, s, &we, &wh);
            }
        }
    }

    fn check_divergence(&self) -> Result<()> {
        let limit = DIVERGENCE_FACTOR * self.excitation.amplitude.max(f64::MIN_POSITIVE);
        let mut worst = 0.0f32;
        for e in &self.e {
            let m = e
                .par_iter()
                .map(|x| if x.is_finite() { x.abs() } else { f32::INFINITY })
                .reduce(|| 0.0, f32::max);
            worst = worst.max(m);
        }
        if !(worst as f64 <= limit) {
            return Err(Error::Diverged {
                step: self.step,
                magnitude: worst as f64,
            });
        }
        Ok(())
    }

    /// Advances one full time step and records probes.
    pub fn step(&mut self) -> Result<()> {
        self.update_h();
        self.update_e();
        self.record();
        self.step += 1;
        if self.step % DIVERGENCE_CHECK_INTERVAL == 0 {
            self.check_divergence()?;
        }
        Ok(())
    }

    /// Runs until the stop criterion and returns the record.
    pub fn run(mut self) -> Result<TimeSeriesRecord> {
        let src_end = (self.excitation.duration() / self.dt).ceil() as usize;
        let f_low = (self.excitation.f_center - 0.5 * self.excitation.bandwidth).max(0.1 * self.excitation.f_center);
        let window = ((1.0 / (f_low * self.dt)).ceil() as usize).max(16);
        let floor = 10f64.powf(self.stop.energy_floor_db / 10.0);
        let mut peak = 0.0f64;
        let mut acc = 0.0f64;
        let mut reason = StopReason::MaxSteps;
        log::info!(
            "fdtd: {} cells, dt = {:.4} ps, at most {} steps",
            self.grid.num_cells(),
            self.dt * 1e12,
            self.stop.max_steps
        );
        while self.step < self.stop.max_steps {
            self.step()?;
            if let Some(p) = self.ports.first() {
                let n = p.series.v.len();
                let v = p.series.v[n - 1];
                let ir = p.series.i[n - 1] * p.impedance;
                acc += v * v + ir * ir;
                if n % window == 0 {
                    peak = peak.max(acc);
                    if self.step > src_end && peak > 0.0 && acc <= floor * peak {
                        reason = StopReason::EnergyFloor;
                        break;
                    }
                    acc = 0.0;
                }
            }
            if self.step % 2000 == 0 {
                log::debug!("step {} of {}", self.step, self.stop.max_steps);
            }
        }
        Ok(self.finish(reason))
    }

    fn finish(self, reason: StopReason) -> TimeSeriesRecord {
        let volume = match self.volume {
            Some(v) => v
                .acc
                .into_iter()
                .zip(&self.frequencies)
                .map(|(e, &f)| VolumePhasors {
                    frequency: f,
                    lo: v.lo,
                    hi: v.hi,
                    e,
                })
                .collect(),
            None => Vec::new(),
        };
        let surface = self.surface.map(|s| SurfacePhasors {
            frequencies: self.frequencies.clone(),
            lo: s.lo,
            hi: s.hi,
            faces: s.faces,
        });
        TimeSeriesRecord {
            dt: self.dt,
            v_offset: 1.0,
            i_offset: 0.5,
            excitation: self.excitation,
            ports: self.ports.into_iter().map(|p| p.series).collect(),
            points: self.point_series,
            volume,
            surface,
            metadata: RunMetadata {
                grid: self.grid,
                steps: self.step,
                stop_reason: reason,
                dft_stride: self.dft_stride,
                coefficient_classes: self.coef.len(),
                notes: self.notes,
                config_hash: String::new(),
            },
        }
    }

    /// Writes the field state: an ASCII magic, little-endian u64 dims, step and
    /// array count, the f64 time step, then every array as little-endian f32 in
    /// x-fastest node order (Ex, Ey, Ez, Hx, Hy, Hz, followed by CPML memory terms).
    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        let arrays = self.state_arrays();
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        for d in self.dims {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        w.write_all(&(self.step as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(arrays.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&self.dt.to_le_bytes()).map_err(io)?;
        for arr in arrays {
            for x in arr {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Restores a state written by [`Simulation::save_checkpoint`] for the same grid and setup.
    /// Recorded series restart empty; phasor accumulators keep their current contents.
    pub fn load_checkpoint(&mut self, path: &std::path::Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 8 + 6 * 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a field checkpoint"));
        }
        let u = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        if [u(0), u(1), u(2)] != self.dims {
            return Err(bad("grid dimensions differ"));
        }
        let step = u(3);
        let count = u(4);
        let nn = self.grid.num_nodes();
        let mut pos = 8 + 6 * 8;
        let expected = self.state_arrays().len();
        if count != expected || bytes.len() != pos + count * nn * 4 {
            return Err(bad("array layout differs from this setup"));
        }
        let mut read = |dst: &mut Vec<f32>| {
            for x in dst.iter_mut() {
                *x = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
                pos += 4;
            }
        };
        for a in 0..3 {
            read(&mut self.e[a]);
        }
        for a in 0..3 {
            read(&mut self.h[a]);
        }
        for a in 0..3 {
            for d in 0..3 {
                if !self.psi_e[a][d].is_empty() {
                    read(&mut self.psi_e[a][d]);
                }
            }
        }
        for a in 0..3 {
            for d in 0..3 {
                if !self.psi_h[a][d].is_empty() {
                    read(&mut self.psi_h[a][d]);
                }
            }
        }
        self.step = step;
        Ok(())
    }

    fn state_arrays(&self) -> Vec<&Vec<f32>> {
        let mut v: Vec<&Vec<f32>> = self.e.iter().chain(self.h.iter()).collect();
        for psi in [&self.psi_e, &self.psi_h] {
            for row in psi.iter() {
                for p in row.iter() {
                    if !p.is_empty() {
                        v.push(p);
                    }
                }
            }
        }
        v
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"BSFDTD01";

fn phase(f: f64, t: f64, weight: f64) -> Complex32 {
    let z = Complex64::from_polar(weight, -2.0 * PI * f * t);
    Complex32::new(z.re as f32, z.im as f32)
}

/// Start and length of the x range.
#[inline]
/// Sub-cell correction for wires thinner than a cell.
///
/// Around a wire of radius r0 the loop field falls off as 1/r, so the far
/// E edge of each of the four H loops enclosing a wire edge enters the H
/// update with weight 2/ln(Δ/r0) instead of 1. A single staircased chain
/// corresponds to r0 ≈ 0.135Δ, where the weight is one.
fn thin_wire_corrections(
    mgrid: &MaterialGrid,
    prof: &[AxisProfile; 3],
    port_g: &[HashMap<usize, f64>; 3],
    ch: f32,
) -> Vec<(u8, usize, u8, usize, f32)> {
    let grid = &mgrid.grid;
    let dims = grid.dims;
    let s = grid.node_strides();
    let mut out = Vec::new();
    for &(axis, g, r0) in &mgrid.thin_wires {
        let w = axis.index();
        if port_g[w].contains_key(&g) || !mgrid.pec_edges[w][g] {
            continue;
        }
        let node = [g % s[1], (g / s[1]) % (dims[1] + 1), g / s[2]];
        for a in (0..3).filter(|&a| a != w) {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            // u: the transverse axis the loop extends along
            let u = if c == w { b } else { c };
            let weight = 2.0 / (grid.cell[u] / r0 as f64).ln() - 1.0;
            let k = &prof[u].h_inv_kd;
            // standard sign of the far E edge on the + and - side of the wire
            let sign = if c == w { -1.0 } else { 1.0 };
            if node[u] < dims[u] {
                let far = g + s[u];
                out.push((a as u8, g, w as u8, far, (weight * sign) as f32 * ch * k[node[u]]));
            }
            if node[u] >= 1 {
                let near = g - s[u];
                out.push((a as u8, near, w as u8, near, (-weight * sign) as f32 * ch * k[node[u] - 1]));
            }
        }
    }
    out
}

fn row_bounds(r: &[Range<usize>; 3]) -> (usize, usize) {
    (r[0].start, r[0].end - r[0].start)
}

#[allow(clippy::too_many_arguments)]
fn e_kernel<const A: usize>(
    e: &mut [f32],
    hb: &[f32],
    hc: &[f32],
    ca: &[f32],
    cb: &[f32],
    kb: &[f32],
    kc: &[f32],
    dims: [usize; 3],
    s: [usize; 3],
) {
    let b = (A + 1) % 3;
    let c = (A + 2) % 3;
    let (sb, sc) = (s[b], s[c]);
    let r = [interior(dims, A, 0), interior(dims, A, 1), interior(dims, A, 2)];
    let (i0, n) = row_bounds(&r);
    e.par_chunks_mut(s[2]).enumerate().for_each(|(k, plane)| {
        if !r[2].contains(&k) {
            return;
        }
        for j in r[1].clone() {
            let l0 = j * s[1] + i0;
            let g0 = k * s[2] + l0;
            let er = &mut plane[l0..l0 + n];
            let car = &ca[g0..g0 + n];
            let cbr = &cb[g0..g0 + n];
            let hc0 = &hc[g0..g0 + n];
            let hc1 = &hc[g0 - sb..g0 - sb + n];
            let hb0 = &hb[g0..g0 + n];
            let hb1 = &hb[g0 - sc..g0 - sc + n];
            if b == 0 {
                let kbr = &kb[i0..i0 + n];
                let kcv = kc[[i0, j, k][c]];
                for t in 0..n {
                    let curl = (hc0[t] - hc1[t]) * kbr[t] - (hb0[t] - hb1[t]) * kcv;
                    er[t] = car[t] * er[t] + cbr[t] * curl;
                }
            } else if c == 0 {
                let kbv = kb[[i0, j, k][b]];
                let kcr = &kc[i0..i0 + n];
                for t in 0..n {
                    let curl = (hc0[t] - hc1[t]) * kbv - (hb0[t] - hb1[t]) * kcr[t];
                    er[t] = car[t] * er[t] + cbr[t] * curl;
                }
            } else {
                let kbv = kb[[i0, j, k][b]];
                let kcv = kc[[i0, j, k][c]];
                for t in 0..n {
                    let curl = (hc0[t] - hc1[t]) * kbv - (hb0[t] - hb1[t]) * kcv;
                    er[t] = car[t] * er[t] + cbr[t] * curl;
                }
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn h_kernel<const A: usize>(
    h: &mut [f32],
    eb: &[f32],
    ec: &[f32],
    kb: &[f32],
    kc: &[f32],
    ch: f32,
    dims: [usize; 3],
    s: [usize; 3],
) {
    let b = (A + 1) % 3;
    let c = (A + 2) % 3;
    let (sb, sc) = (s[b], s[c]);
    let mut r = [0..dims[0], 0..dims[1], 0..dims[2]];
    r[A] = 0..dims[A] + 1;
    let (i0, n) = row_bounds(&r);
    h.par_chunks_mut(s[2]).enumerate().for_each(|(k, plane)| {
        if !r[2].contains(&k) {
            return;
        }
        for j in r[1].clone() {
            let l0 = j * s[1] + i0;
            let g0 = k * s[2] + l0;
            let hr = &mut plane[l0..l0 + n];
            let ec0 = &ec[g0..g0 + n];
            let ec1 = &ec[g0 + sb..g0 + sb + n];
            let eb0 = &eb[g0..g0 + n];
            let eb1 = &eb[g0 + sc..g0 + sc + n];
            if b == 0 {
                let kbr = &kb[i0..i0 + n];
                let kcv = ch * kc[[i0, j, k][c]];
                for t in 0..n {
                    hr[t] -= ch * (ec1[t] - ec0[t]) * kbr[t] - (eb1[t] - eb0[t]) * kcv;
                }
            } else if c == 0 {
                let kbv = ch * kb[[i0, j, k][b]];
                let kcr = &kc[i0..i0 + n];
                for t in 0..n {
                    hr[t] -= (ec1[t] - ec0[t]) * kbv - ch * (eb1[t] - eb0[t]) * kcr[t];
                }
            } else {
                let kbv = ch * kb[[i0, j, k][b]];
                let kcv = ch * kc[[i0, j, k][c]];
                for t in 0..n {
                    hr[t] -= (ec1[t] - ec0[t]) * kbv - (eb1[t] - eb0[t]) * kcv;
                }
            }
        }
    });
}

/// CPML memory update for E: ψ ← bψ + c·ΔH; E += sign·cb·ψ.
#[allow(clippy::too_many_arguments)]
fn psi_e_kernel(
    e: &mut [f32],
    psi: &mut [f32],
    src: &[f32],
    cb: &[f32],
    bd: &[f32],
    cd: &[f32],
    d: usize,
    sign: f32,
    r: &[Range<usize>; 3],
    s: [usize; 3],
) {
    let sd = s[d];
    let (i0, n) = row_bounds(r);
    e.par_chunks_mut(s[2])
        .zip(psi.par_chunks_mut(s[2]))
        .enumerate()
        .for_each(|(k, (ep, pp))| {
            if !r[2].contains(&k) {
                return;
            }
            for j in r[1].clone() {
                let l0 = j * s[1] + i0;
                let g0 = k * s[2] + l0;
                let er = &mut ep[l0..l0 + n];
                let pr = &mut pp[l0..l0 + n];
                let cbr = &cb[g0..g0 + n];
                let s0 = &src[g0..g0 + n];
                let s1 = &src[g0 - sd..g0 - sd + n];
                if d == 0 {
                    let (br, cr) = (&bd[i0..i0 + n], &cd[i0..i0 + n]);
                    for t in 0..n {
                        let p = br[t] * pr[t] + cr[t] * (s0[t] - s1[t]);
                        pr[t] = p;
                        er[t] += sign * cbr[t] * p;
                    }
                } else {
                    let q = if d == 1 { j } else { k };
                    let (bv, cv) = (bd[q], cd[q]);
                    for t in 0..n {
                        let p = bv * pr[t] + cv * (s0[t] - s1[t]);
                        pr[t] = p;
                        er[t] += sign * cbr[t] * p;
                    }
                }
            }
        });
}

/// CPML memory update for H: ψ ← bψ + c·ΔE; H += sign·ψ (sign carries dt/μ).
#[allow(clippy::too_many_arguments)]
fn psi_h_kernel(
    h: &mut [f32],
    psi: &mut [f32],
    src: &[f32],
    bd: &[f32],
    cd: &[f32],
    d: usize,
    sign: f32,
    r: &[Range<usize>; 3],
    s: [usize; 3],
) {
    let sd = s[d];
    let (i0, n) = row_bounds(r);
    h.par_chunks_mut(s[2])
        .zip(psi.par_chunks_mut(s[2]))
        .enumerate()
        .for_each(|(k, (hp, pp))| {
            if !r[2].contains(&k) {
                return;
            }
            for j in r[1].clone() {
                let l0 = j * s[1] + i0;
                let g0 = k * s[2] + l0;
                let hr = &mut hp[l0..l0 + n];
                let pr = &mut pp[l0..l0 + n];
                let s0 = &src[g0..g0 + n];
                let s1 = &src[g0 + sd..g0 + sd + n];
                if d == 0 {
                    let (br, cr) = (&bd[i0..i0 + n], &cd[i0..i0 + n]);
                    for t in 0..n {
                        let p = br[t] * pr[t] + cr[t] * (s1[t] - s0[t]);
                        pr[t] = p;
                        hr[t] += sign * p;
                    }
                } else {
                    let q = if d == 1 { j } else { k };
                    let (bv, cv) = (bd[q], cd[q]);
                    for t in 0..n {
                        let p = bv * pr[t] + cv * (s1[t] - s0[t]);
                        pr[t] = p;
                        hr[t] += sign * p;
                    }
                }
            }
        });
}

fn accumulate_volume(vol: &mut VolumeAcc, e: &[Vec<f32>; 3], s: [usize; 3], w: &[Complex32]) {
    let (lo, hi) = (vol.lo, vol.hi);
    let nx = hi[0] - lo[0];
    let ny = hi[1] - lo[1];
    let plane = nx * ny;
    for (fi, acc) in vol.acc.iter_mut().enumerate() {
        let wf = w[fi];
        for (a, comp) in acc.iter_mut().enumerate() {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let (sb, sc) = (s[b], s[c]);
            let ea = &e[a];
            comp.par_chunks_mut(plane).enumerate().for_each(|(kk, out)| {
                let k = lo[2] + kk;
                for jj in 0..ny {
                    for ii in 0..nx {
                        let g = (lo[0] + ii) * s[0] + (lo[1] + jj) * s[1] + k * s[2];
                        let v = 0.25 * (ea[g] + ea[g + sb] + ea[g + sc] + ea[g + sb + sc]);
                        out[jj * nx + ii] += wf * v;
                    }
                }
            });
        }
    }
}

fn accumulate_surface(
    surf: &mut SurfaceAcc,
    e: &[Vec<f32>; 3],
    h: &[Vec<f32>; 3],
    s: [usize; 3],
    we: &[Complex32],
    wh: &[Complex32],
) {
    let lo = surf.lo;
    for face in &mut surf.faces {
        let a = face.normal.index();
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let p = face.plane;
        let [nu, nv] = face.counts;
        let (eb, ec, hb, hc) = (&e[b], &e[c], &h[b], &h[c]);
        for v in 0..nv {
            for u in 0..nu {
                let mut n = [0usize; 3];
                n[a] = p;
                n[b] = lo[b] + u;
                n[c] = lo[c] + v;
                let g = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
                let (sa, sb, sc) = (s[a], s[b], s[c]);
                let e_b = 0.5 * (eb[g] + eb[g + sc]);
                let e_c = 0.5 * (ec[g] + ec[g + sb]);
                let h_b = 0.25 * (hb[g] + hb[g + sb] + hb[g - sa] + hb[g + sb - sa]);
                let h_c = 0.25 * (hc[g] + hc[g + sc] + hc[g - sa] + hc[g + sc - sa]);
                let q = v * nu + u;
                for fi in 0..we.len() {
                    face.e[fi][0][q] += we[fi] * e_b;
                    face.e[fi][1][q] += we[fi] * e_c;
                    face.h[fi][0][q] += wh[fi] * h_b;
                    face.h[fi][1][q] += wh[fi] * h_c;
                }
            }
        }
    }
}

/// Runs a single-port simulation of `mgrid` driven through `port`.
pub fn run_simulation(
    mgrid: &MaterialGrid,
    port: &PortSpec,
    excitation: &ExcitationSpec,
    boundary: &BoundarySpec,
    stop: &StopCriterion,
    probes: &ProbeRequest,
) -> Result<TimeSeriesRecord> {
    let edges = mgrid
        .port
        .clone()
        .ok_or_else(|| Error::PortResolution("material grid carries no resolved port".into()))?;
    let mut setup = SimulationSetup::new(*excitation, boundary.clone());
    setup.stop = *stop;
    setup.probes = probes.clone();
    setup.ports.push(PortDrive {
        edges,
        impedance: port.impedance,
        driven: true,
    });
    Simulation::new(mgrid, setup)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn courant_values() {
        let g = GridSpec::new([0.5e-3; 3], [0.0; 3], [4, 4, 4], 0).unwrap();
        let dt = courant_timestep(&g, 0.99).unwrap();
        assert!((dt / 0.953e-12 - 1.0).abs() < 0.005, "{dt}");
        let g2 = GridSpec::new([0.25e-3; 3], [0.0; 3], [4, 4, 4], 0).unwrap();
        assert!((courant_timestep(&g2, 0.99).unwrap() / dt - 0.5).abs() < 1e-12);
        let g1 = GridSpec::new([1e-3, 1e9, 1e9], [0.0; 3], [4, 4, 4], 0).unwrap();
        assert!((courant_timestep(&g1, 0.9).unwrap() / (0.9 * 1e-3 / C0) - 1.0).abs() < 1e-9);
        assert!(courant_timestep(&g, 0.0).is_err());
        assert!(courant_timestep(&g, 1.5).is_err());
    }
}
