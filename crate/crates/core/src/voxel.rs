//! Rasterisation of a [`Scene`] onto a [`GridSpec`].
//!
//! Volumes are sampled at cell centres; the highest-priority shape containing
//! the centre wins (ties go to the later shape). Conductors thinner than a
//! cell become sheets snapped to the nearest node plane and are stored as
//! face masks; every edge of a marked face is a perfect electric conductor.
//! Wires become chains of PEC edges between the nodes nearest to their ends.
//! A wire at least one cell thick becomes a bundle of parallel chains, tied
//! together at both ends, so its inductance follows the real diameter.
//! Thinner wires stay single chains and record their radius for the solver's
//! thin-wire correction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, PortSpec, Scene, Shape, ShapeKind, Vec3};
use crate::grid::GridSpec;
use crate::material::effective_conductivity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SheetModel {
    /// Zero-thickness perfect conductor.
    #[default]
    Pec,
    /// Finite sheet conductance σ·t spread over the edges of the sheet.
    Resistive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelOptions {
    /// Frequency used to convert loss tangents into conductivities.
    pub f_ref: f64,
    pub sheet_model: SheetModel,
    pub memory_budget: usize,
}

impl VoxelOptions {
    pub fn new(f_ref: f64) -> Self {
        Self {
            f_ref,
            sheet_model: SheetModel::Pec,
            memory_budget: 4 << 30,
        }
    }
}

/// Edges of a lumped port: a straight chain along `axis`, oriented from the
/// port start towards its end (`direction` = ±1 along the axis).
#[derive(Debug, Clone, PartialEq)]
pub struct PortEdges {
    pub axis: Axis,
    /// Start node of every edge in the chain.
    pub nodes: Vec<[usize; 3]>,
    pub direction: f64,
}

impl PortEdges {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialGrid {
    pub grid: GridSpec,
    pub eps_r: Vec<f32>,
    /// Effective conductivity (S/m).
    pub sigma: Vec<f32>,
    /// Mass density (kg/m³); zero where the material has none.
    pub density: Vec<f32>,
    pub conductor: Vec<bool>,
    pub tissue: Vec<bool>,
    /// PEC edges per axis, node-indexed.
    pub pec_edges: [Vec<bool>; 3],
    /// Faces covered by conductor sheets, node-indexed (normal axis).
    pub sheet_faces: [Vec<bool>; 3],
    /// Edges carrying extra sheet conductivity (axis, node index, S/m).
    pub resistive_edges: Vec<(Axis, usize, f32)>,
    /// Single-chain wire edges (axis, node index, wire radius in m) whose
    /// surrounding H loops get the sub-cell radius correction.
    pub thin_wires: Vec<(Axis, usize, f32)>,
    pub port: Option<PortEdges>,
    pub notes: Vec<String>,
}

impl MaterialGrid {
    /// Vacuum everywhere, nothing conducting.
    pub fn vacuum(grid: GridSpec) -> Self {
        let n = grid.num_cells();
        let nn = grid.num_nodes();
        Self {
            eps_r: vec![1.0; n],
            sigma: vec![0.0; n],
            density: vec![0.0; n],
            conductor: vec![false; n],
            tissue: vec![false; n],
            pec_edges: [vec![false; nn], vec![false; nn], vec![false; nn]],
            sheet_faces: [vec![false; nn], vec![false; nn], vec![false; nn]],
            resistive_edges: Vec::new(),
            thin_wires: Vec::new(),
            port: None,
            notes: Vec::new(),
            grid,
        }
    }

    pub fn conductor_cell_count(&self) -> usize {
        self.conductor.iter().filter(|&&c| c).count()
    }

    pub fn sheet_face_count(&self, normal: Axis) -> usize {
        self.sheet_faces[normal.index()].iter().filter(|&&f| f).count()
    }

    pub fn pec_edge_count(&self) -> usize {
        self.pec_edges.iter().map(|e| e.iter().filter(|&&x| x).count()).sum()
    }

    pub fn max_eps_r(&self) -> f64 {
        self.eps_r.iter().cloned().fold(1.0f32, f32::max) as f64
    }

    /// Marks a cell-range box as a given material; used by tests and simple setups.
    pub fn fill_cells(&mut self, lo: [usize; 3], hi: [usize; 3], eps_r: f32, sigma: f32, density: f32, tissue: bool) {
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    let c = self.grid.cell_index(i, j, k);
                    self.eps_r[c] = eps_r;
                    self.sigma[c] = sigma;
                    self.density[c] = density;
                    self.tissue[c] = tissue;
                }
            }
        }
    }

    /// Marks the PEC edges of every conductor cell.
    fn mark_conductor_edges(&mut self) {
        let g = &self.grid;
        let [nx, ny, nz] = g.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if !self.conductor[g.cell_index(i, j, k)] {
                        continue;
                    }
                    for (a, ex) in self.pec_edges.iter_mut().enumerate() {
                        let (b, c) = Axis::from_index(a).others();
                        for db in 0..2 {
                            for dc in 0..2 {
                                let mut n = [i, j, k];
                                n[b.index()] += db;
                                n[c.index()] += dc;
                                ex[g.node_index(n[0], n[1], n[2])] = true;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Prepared<'a> {
    shape: &'a Shape,
    bounds: crate::geometry::Aabb,
    sigma: f64,
}

/// Rasterises `scene` onto `grid`.
pub fn voxelize(scene: &Scene, grid: &GridSpec, opts: &VoxelOptions) -> Result<MaterialGrid> {
    grid.check_memory(opts.memory_budget)?;
    scene.validate()?;
    let mut mg = MaterialGrid::vacuum(grid.clone());

    let mut order: Vec<usize> = (0..scene.shapes.len()).collect();
    order.sort_by_key(|&i| scene.shapes[i].priority);
    let mut volumes = Vec::new();
    let mut sheets = Vec::new();
    let mut wires = Vec::new();
    for &i in &order {
        let s = &scene.shapes[i];
        let prepared = Prepared {
            shape: s,
            bounds: s.bounds(),
            sigma: effective_conductivity(&s.material, opts.f_ref)?,
        };
        match (&s.kind, s.sheet_axis(grid.cell)) {
            (ShapeKind::Wire { .. }, _) => wires.push(prepared),
            (_, Some(axis)) => sheets.push((prepared, axis)),
            _ => volumes.push(prepared),
        }
    }

    let bg_sigma = effective_conductivity(&scene.background, opts.f_ref)? as f32;
    let bg_eps = scene.background.eps_r as f32;
    let [nx, ny, _] = grid.dims;
    let plane = nx * ny;
    let g = grid.clone();
    let volumes = &volumes;
    mg.eps_r
        .par_chunks_mut(plane)
        .zip(mg.sigma.par_chunks_mut(plane))
        .zip(mg.density.par_chunks_mut(plane))
        .zip(mg.conductor.par_chunks_mut(plane))
        .zip(mg.tissue.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(k, ((((eps, sig), rho), cond), tis))| {
            for j in 0..ny {
                for i in 0..nx {
                    let c = i + nx * j;
                    let p = g.cell_center([i, j, k]);
                    let hit = volumes
                        .iter()
                        .rev()
                        .find(|v| v.bounds.contains(p) && v.shape.contains(p));
                    match hit {
                        Some(v) => {
                            let m = &v.shape.material;
                            eps[c] = m.eps_r as f32;
                            sig[c] = v.sigma as f32;
                            rho[c] = m.density.unwrap_or(0.0) as f32;
                            cond[c] = m.is_conductor;
                            tis[c] = m.is_tissue;
                        }
                        None => {
                            eps[c] = bg_eps;
                            sig[c] = bg_sigma;
                        }
                    }
                }
            }
        });
    for (c, &is_cond) in mg.conductor.iter().enumerate() {
        if is_cond {
            mg.sigma[c] = 0.0;
            mg.eps_r[c] = 1.0;
        }
    }
    mg.mark_conductor_edges();

    rasterize_sheets(&mut mg, &sheets, opts)?;

    for w in &wires {
        if !w.shape.material.is_conductor {
            continue;
        }
        if let ShapeKind::Wire { start, end, diameter } = w.shape.kind {
            let (a, b) = match &w.shape.bend {
                Some(bend) => (bend.to_world(start), bend.to_world(end)),
                None => (start, end),
            };
            let edges = wire_edges(grid, a, b, diameter);
            let thin = edges == edge_chain(grid, a, b);
            for (axis, node) in edges {
                let n = grid.node_index(node[0], node[1], node[2]);
                mg.pec_edges[axis.index()][n] = true;
                if thin {
                    mg.thin_wires.push((axis, n, (0.5 * diameter) as f32));
                }
            }
        }
    }

    let port = resolve_port(grid, &scene.port)?;
    for n in &port.nodes {
        let idx = grid.node_index(n[0], n[1], n[2]);
        mg.pec_edges[port.axis.index()][idx] = false;
        mg.thin_wires.retain(|&(ax, m, _)| !(ax == port.axis && m == idx));
    }
    mg.port = Some(port);
    mg.notes = scene.notes.clone();
    Ok(mg)
}

/// Resolves a port segment into a straight chain of edges.
pub fn resolve_port(grid: &GridSpec, port: &PortSpec) -> Result<PortEdges> {
    let a = grid.nearest_node(port.start);
    let b = grid.nearest_node(port.end);
    let inside = |p: Vec3| grid.extent().contains(p);
    if !inside(port.start) || !inside(port.end) {
        return Err(Error::PortResolution("port outside the grid".into()));
    }
    let differing: Vec<usize> = (0..3).filter(|&i| a[i] != b[i]).collect();
    match differing.as_slice() {
        [] => Err(Error::PortResolution(format!(
            "port of length {:.3e} m collapses to a single node",
            port.length()
        ))),
        [axis] => {
            let axis = *axis;
            let (lo, hi) = (a[axis].min(b[axis]), a[axis].max(b[axis]));
            let nodes = (lo..hi)
                .map(|s| {
                    let mut n = a;
                    n[axis] = s;
                    n
                })
                .collect();
            Ok(PortEdges {
                axis: Axis::from_index(axis),
                nodes,
                direction: if b[axis] > a[axis] { 1.0 } else { -1.0 },
            })
        }
        _ => Err(Error::PortResolution("port is not aligned with a grid axis".into())),
    }
}

/// Edges of a wire of `diameter` from `a` to `b`.
///
/// Along each axis transverse to the wire's dominant direction the bundle has
/// `floor(diameter / cell) + 1` node lines centred on the wire axis; it always
/// contains the single chain of [`edge_chain`].
pub fn wire_edges(grid: &GridSpec, a: Vec3, b: Vec3, diameter: f64) -> Vec<(Axis, [usize; 3])> {
    let chain = edge_chain(grid, a, b);
    let ua = grid.node_coordinate(a);
    let ub = grid.node_coordinate(b);
    let along = (0..3)
        .max_by(|&i, &j| (ub[i] - ua[i]).abs().total_cmp(&(ub[j] - ua[j]).abs()))
        .unwrap_or(2);
    let (t1, t2) = ((along + 1) % 3, (along + 2) % 3);
    let count = |t: usize| (diameter / grid.cell[t]).floor().max(0.0) as i64 + 1;
    let (n1, n2) = (count(t1), count(t2));
    if n1 == 1 && n2 == 1 {
        return chain;
    }
    let base = grid.nearest_node(a);
    let first = |t: usize, n: i64| (ua[t] - 0.5 * (n - 1) as f64).round() as i64 - base[t] as i64;
    let (o1, o2) = (first(t1, n1), first(t2, n2));
    let limit = grid.dims;
    let shift = |node: [usize; 3], d1: i64, d2: i64, extra: usize| -> Option<[usize; 3]> {
        let mut n = node;
        for (t, d) in [(t1, d1), (t2, d2)] {
            let v = n[t] as i64 + d;
            // the tie edges along t need one more node of room
            let room = if extra == t { 1 } else { 0 };
            if v < 0 || v + room > limit[t] as i64 {
                return None;
            }
            n[t] = v as usize;
        }
        Some(n)
    };
    let mut out = Vec::new();
    for d1 in o1..o1 + n1 {
        for d2 in o2..o2 + n2 {
            out.extend(chain.iter().filter_map(|&(ax, node)| shift(node, d1, d2, 3).map(|n| (ax, n))));
        }
    }
    for end in [base, grid.nearest_node(b)] {
        for d1 in o1..o1 + n1 {
            for d2 in o2..o2 + n2 {
                if d1 + 1 < o1 + n1 {
                    out.extend(shift(end, d1, d2, t1).map(|n| (Axis::from_index(t1), n)));
                }
                if d2 + 1 < o2 + n2 {
                    out.extend(shift(end, d1, d2, t2).map(|n| (Axis::from_index(t2), n)));
                }
            }
        }
    }
    out
}

/// Chain of grid edges joining the nodes nearest to `a` and `b`.
///
/// Steps one node at a time along the axis with the largest remaining
/// distance (in cells); ties go to the lower axis index.
pub fn edge_chain(grid: &GridSpec, a: Vec3, b: Vec3) -> Vec<(Axis, [usize; 3])> {
    let start = grid.nearest_node(a);
    let end = grid.nearest_node(b);
    let mut cur = start;
    let mut out = Vec::new();
    while cur != end {
        let mut best = 0;
        let mut best_d = 0i64;
        for ax in 0..3 {
            let d = (end[ax] as i64 - cur[ax] as i64).abs();
            if d > best_d {
                best = ax;
                best_d = d;
            }
        }
        let mut next = cur;
        if end[best] > cur[best] {
            next[best] += 1;
            out.push((Axis::from_index(best), cur));
        } else {
            next[best] -= 1;
            out.push((Axis::from_index(best), next));
        }
        cur = next;
    }
    out
}

fn rasterize_sheets(mg: &mut MaterialGrid, sheets: &[(Prepared, Axis)], opts: &VoxelOptions) -> Result<()> {
    let grid = mg.grid.clone();
    let nn = grid.num_nodes();
    // owner index + 1 per face, 0 when empty
    let mut owner: [Vec<u16>; 3] = [vec![0; nn], vec![0; nn], vec![0; nn]];
    for (idx, (p, axis)) in sheets.iter().enumerate() {
        let set = if p.shape.material.is_conductor { (idx + 1) as u16 } else { 0 };
        let faces = match &p.shape.bend {
            None => flat_sheet_faces(&grid, p, *axis),
            Some(_) => {
                if *axis != Axis::Z {
                    return Err(Error::GeometryConflict(format!(
                        "bent sheet {} must be normal to z",
                        p.shape.name
                    )));
                }
                bent_sheet_faces(&grid, p)
            }
        };
        for (normal, node) in faces {
            owner[normal.index()][grid.node_index(node[0], node[1], node[2])] = set;
        }
    }

    for normal in Axis::ALL {
        let (b, c) = normal.others();
        let nodes = grid.nodes();
        for k in 0..nodes[2] {
            for j in 0..nodes[1] {
                for i in 0..nodes[0] {
                    let f = grid.node_index(i, j, k);
                    let o = owner[normal.index()][f];
                    if o == 0 {
                        continue;
                    }
                    mg.sheet_faces[normal.index()][f] = true;
                    let (p, _) = &sheets[o as usize - 1];
                    let resistive = opts.sheet_model == SheetModel::Resistive && p.sigma.is_finite();
                    // edges along b at offsets 0/1 in c, and along c at offsets 0/1 in b
                    for (along, across) in [(b, c), (c, b)] {
                        for d in 0..2 {
                            let mut n = [i, j, k];
                            n[across.index()] += d;
                            if n[across.index()] >= nodes[across.index()] {
                                continue;
                            }
                            let e = grid.node_index(n[0], n[1], n[2]);
                            if resistive {
                                let t = p.shape.flat_bounds().size()[normal.index()];
                                let s = (p.sigma * t / grid.cell[normal.index()]) as f32;
                                mg.resistive_edges.push((along, e, s));
                            } else {
                                mg.pec_edges[along.index()][e] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    // PEC wins over a resistive sheet on shared edges
    let pec = &mg.pec_edges;
    mg.resistive_edges.retain(|(a, e, _)| !pec[a.index()][*e]);
    mg.resistive_edges.sort_by_key(|(a, e, _)| (a.index(), *e));
    mg.resistive_edges.dedup_by_key(|(a, e, _)| (a.index(), *e));
    Ok(())
}

/// Faces of a flat sheet: the node plane nearest to the sheet mid-plane,
/// face centres tested against the outline.
fn flat_sheet_faces(grid: &GridSpec, p: &Prepared, normal: Axis) -> Vec<(Axis, [usize; 3])> {
    let a = normal.index();
    let mid = 0.5 * (p.bounds.min[a] + p.bounds.max[a]);
    let plane = ((mid - grid.origin[a]) / grid.cell[a]).round();
    if plane < 0.0 || plane > grid.dims[a] as f64 {
        return Vec::new();
    }
    let plane = plane as usize;
    let (b, c) = normal.others();
    let (bi, ci) = (b.index(), c.index());
    let range = |ax: usize| {
        let lo = ((p.bounds.min[ax] - grid.origin[ax]) / grid.cell[ax] - 1.0).floor().max(0.0) as usize;
        let hi = (((p.bounds.max[ax] - grid.origin[ax]) / grid.cell[ax]).ceil().max(0.0) as usize).min(grid.dims[ax]);
        lo..hi
    };
    let mut out = Vec::new();
    for u in range(bi) {
        for v in range(ci) {
            let mut q = [0.0; 3];
            q[a] = mid;
            q[bi] = grid.origin[bi] + (u as f64 + 0.5) * grid.cell[bi];
            q[ci] = grid.origin[ci] + (v as f64 + 0.5) * grid.cell[ci];
            if p.shape.contains_flat(q) {
                let mut n = [0usize; 3];
                n[a] = plane;
                n[bi] = u;
                n[ci] = v;
                out.push((normal, n));
            }
        }
    }
    out
}

/// Faces of a z-normal sheet wrapped by a bend: a staircase height field.
///
/// Each column over the wrap direction takes the z-face nearest the curved
/// surface; neighbouring columns at different heights are joined by faces
/// normal to the wrap axis so the sheet has no gaps.
fn bent_sheet_faces(grid: &GridSpec, p: &Prepared) -> Vec<(Axis, [usize; 3])> {
    let bend = p.shape.bend.expect("bent sheet");
    let flat = p.shape.flat_bounds();
    let mid = 0.5 * (flat.min[2] + flat.max[2]);
    let r_s = bend.radius + (mid - bend.reference_z);
    let w = bend.wrap_index();
    let v = 1 - w;
    let columns = |ax: usize| {
        let lo = ((p.bounds.min[ax] - grid.origin[ax]) / grid.cell[ax] - 1.0).floor().max(0.0) as usize;
        let hi = (((p.bounds.max[ax] - grid.origin[ax]) / grid.cell[ax]).ceil().max(0.0) as usize).min(grid.dims[ax]);
        lo..hi
    };
    let mut out = Vec::new();
    for vi in columns(v) {
        let yv = grid.origin[v] + (vi as f64 + 0.5) * grid.cell[v];
        let mut heights: Vec<(usize, Option<usize>)> = Vec::new();
        for wi in columns(w) {
            let xw = grid.origin[w] + (wi as f64 + 0.5) * grid.cell[w];
            let du = xw - bend.center;
            let k = if du.abs() < r_s {
                let z = bend.axis_height() + (r_s * r_s - du * du).sqrt();
                let mut q = [0.0; 3];
                q[w] = xw;
                q[v] = yv;
                q[2] = z;
                let qf = bend.to_flat(q);
                let kz = ((z - grid.origin[2]) / grid.cell[2]).round();
                (p.shape.contains_flat(qf) && kz >= 0.0 && kz <= grid.dims[2] as f64).then_some(kz as usize)
            } else {
                None
            };
            if let Some(k) = k {
                let mut n = [0usize; 3];
                n[w] = wi;
                n[v] = vi;
                n[2] = k;
                out.push((Axis::Z, n));
            }
            heights.push((wi, k));
        }
        for pair in heights.windows(2) {
            if let ((_, Some(k0)), (wi1, Some(k1))) = (pair[0], pair[1]) {
                for kk in k0.min(k1)..k0.max(k1) {
                    let mut n = [0usize; 3];
                    n[w] = wi1;
                    n[v] = vi;
                    n[2] = kk;
                    out.push((Axis::from_index(w), n));
                }
            }
        }
    }
    out
}
