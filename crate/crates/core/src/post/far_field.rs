//! Frequency-domain near-to-far-field transform over a closed box.
//!
//! Equivalent currents on the box are J = n×H and M = -n×E. With radiation
//! vectors N = ∮J·e^{jk r̂·r'}dS and L = ∮M·e^{jk r̂·r'}dS the radiation
//! intensity is U = k²/(32π²η)·(|L_φ + ηN_θ|² + |L_θ − ηN_φ|²).

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{C0, ETA0};
use crate::error::{invalid, Error, Result};
use crate::fdtd::SurfacePhasors;
use crate::grid::GridSpec;
use crate::voxel::MaterialGrid;

const THETA_STEPS: usize = 60;
const PHI_STEPS: usize = 72;
/// Upper bound on reported margins and ripples when a pattern has true nulls.
const DB_FLOOR: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarFieldPattern {
    pub frequency: f64,
    /// (angle in degrees, gain in dBi) in the φ = 0 plane; angle is θ measured
    /// from +z towards +x, running 0..360.
    pub e_plane: Vec<(f64, f64)>,
    /// (φ in degrees, gain in dBi) in the θ = 90° plane.
    pub h_plane: Vec<(f64, f64)>,
    pub directivity_dbi: f64,
    /// Power from integrating the pattern over the sphere (W).
    pub radiated_power: f64,
    /// Net outward Poynting flux through the equivalence surface (W).
    pub surface_power: f64,
    /// Power used to normalise gain (W): accepted power when known, otherwise radiated.
    pub reference_power: f64,
}

impl FarFieldPattern {
    /// Peak-to-trough variation of the H-plane cut (dB).
    pub fn h_plane_ripple_db(&self) -> f64 {
        ripple(&self.h_plane)
    }

    pub fn e_plane_ripple_db(&self) -> f64 {
        ripple(&self.e_plane)
    }
}

fn ripple(cut: &[(f64, f64)]) -> f64 {
    let max = cut.iter().map(|c| c.1).fold(f64::MIN, f64::max);
    let min = cut.iter().map(|c| c.1).fold(f64::MAX, f64::min);
    max - min
}

/// Checks that the node box `[lo, hi]` lies outside the absorbing layers and
/// that its faces touch only vacuum cells and no conductor edges.
pub fn validate_surface(mgrid: &MaterialGrid, lo: [usize; 3], hi: [usize; 3]) -> Result<()> {
    let g = &mgrid.grid;
    let p = g.pml_cells;
    for a in 0..3 {
        if lo[a] >= hi[a] {
            return Err(Error::InvalidSurface("surface box is empty".into()));
        }
        if lo[a] < p.max(1) || hi[a] + p.max(1) > g.dims[a] {
            return Err(Error::InvalidSurface(format!(
                "surface box reaches the absorbing layer along axis {a}"
            )));
        }
    }
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for plane in [lo[a], hi[a]] {
            for u in lo[b]..hi[b] {
                for v in lo[c]..hi[c] {
                    for side in [plane - 1, plane] {
                        let mut cell = [0usize; 3];
                        cell[a] = side;
                        cell[b] = u;
                        cell[c] = v;
                        let ci = g.cell_index(cell[0], cell[1], cell[2]);
                        if mgrid.conductor[ci] || mgrid.eps_r[ci] != 1.0 || mgrid.sigma[ci] != 0.0 {
                            return Err(Error::InvalidSurface(format!(
                                "surface touches non-vacuum cell {cell:?}"
                            )));
                        }
                    }
                    let mut node = [0usize; 3];
                    node[a] = plane;
                    node[b] = u;
                    node[c] = v;
                    let ni = g.node_index(node[0], node[1], node[2]);
                    if mgrid.pec_edges[b][ni] || mgrid.pec_edges[c][ni] {
                        return Err(Error::InvalidSurface(format!("surface cuts a conductor at node {node:?}")));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Equivalent currents of one face, pre-multiplied by the patch area.
struct FaceCurrents {
    a: usize,
    /// Normal coordinate of the face (m).
    xa: f64,
    /// Patch-centre coordinates along the tangential axes.
    xb: Vec<f64>,
    xc: Vec<f64>,
    /// J and M components along (b, c), row-major with u fastest.
    j: [Vec<Complex64>; 2],
    m: [Vec<Complex64>; 2],
}

fn c64(z: Complex32) -> Complex64 {
    Complex64::new(z.re as f64, z.im as f64)
}

fn face_currents(surface: &SurfacePhasors, grid: &GridSpec, fi: usize, scale: Complex64) -> Vec<FaceCurrents> {
    surface
        .faces
        .iter()
        .map(|face| {
            let a = face.normal.index();
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let [nu, nv] = face.counts;
            let area = grid.cell[b] * grid.cell[c];
            let s = face.sign;
            let xb = (0..nu)
                .map(|u| grid.origin[b] + (surface.lo[b] + u) as f64 * grid.cell[b] + 0.5 * grid.cell[b])
                .collect();
            let xc = (0..nv)
                .map(|v| grid.origin[c] + (surface.lo[c] + v) as f64 * grid.cell[c] + 0.5 * grid.cell[c])
                .collect();
            let e = &face.e[fi];
            let h = &face.h[fi];
            let w = scale * area;
            // n×H with n = s·ê_a: (−s·H_c, s·H_b); −n×E: (s·E_c, −s·E_b)
            let j = [
                h[1].iter().map(|&x| -s * w * c64(x)).collect(),
                h[0].iter().map(|&x| s * w * c64(x)).collect(),
            ];
            let m = [
                e[1].iter().map(|&x| s * w * c64(x)).collect(),
                e[0].iter().map(|&x| -s * w * c64(x)).collect(),
            ];
            FaceCurrents {
                a,
                xa: grid.origin[a] + face.plane as f64 * grid.cell[a],
                xb,
                xc,
                j,
                m,
            }
        })
        .collect()
}

/// Radiation intensity (W/sr) in direction (θ, φ).
fn intensity(faces: &[FaceCurrents], k: f64, theta: f64, phi: f64) -> f64 {
    let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
    let rhat = [st * cp, st * sp, ct];
    let th = [ct * cp, ct * sp, -st];
    let ph = [-sp, cp, 0.0];
    let mut n = [Complex64::new(0.0, 0.0); 3];
    let mut l = [Complex64::new(0.0, 0.0); 3];
    for f in faces {
        let a = f.a;
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let pa = Complex64::from_polar(1.0, k * rhat[a] * f.xa);
        let pu: Vec<Complex64> = f.xb.iter().map(|&x| Complex64::from_polar(1.0, k * rhat[b] * x)).collect();
        let nu = pu.len();
        let mut acc = [Complex64::new(0.0, 0.0); 4];
        for (v, &x) in f.xc.iter().enumerate() {
            let pv = Complex64::from_polar(1.0, k * rhat[c] * x);
            let row = v * nu..(v + 1) * nu;
            let mut inner = [Complex64::new(0.0, 0.0); 4];
            for (q, &p) in row.clone().zip(&pu) {
                inner[0] += f.j[0][q] * p;
                inner[1] += f.j[1][q] * p;
                inner[2] += f.m[0][q] * p;
                inner[3] += f.m[1][q] * p;
            }
            for t in 0..4 {
                acc[t] += inner[t] * pv;
            }
        }
        n[b] += acc[0] * pa;
        n[c] += acc[1] * pa;
        l[b] += acc[2] * pa;
        l[c] += acc[3] * pa;
    }
    let dot = |v: &[Complex64; 3], u: &[f64; 3]| v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
    let (nt, np) = (dot(&n, &th), dot(&n, &ph));
    let (lt, lp) = (dot(&l, &th), dot(&l, &ph));
    let eta = ETA0;
    k * k / (32.0 * PI * PI * eta) * ((lp + eta * nt).norm_sqr() + (lt - eta * np).norm_sqr())
}

/// ½·Re∮(E×H*)·n dS.
fn surface_flux(surface: &SurfacePhasors, grid: &GridSpec, fi: usize, scale: Complex64) -> f64 {
    let s2 = scale.norm_sqr();
    let mut p = 0.0;
    for face in &surface.faces {
        let a = face.normal.index();
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let area = grid.cell[b] * grid.cell[c];
        let (e, h) = (&face.e[fi], &face.h[fi]);
        let mut sum = 0.0;
        for q in 0..e[0].len() {
            let z = c64(e[0][q]) * c64(h[1][q]).conj() - c64(e[1][q]) * c64(h[0][q]).conj();
            sum += z.re;
        }
        p += 0.5 * face.sign * sum * area * s2;
    }
    p
}

fn to_dbi(u: f64, reference: f64) -> f64 {
    let g = 4.0 * PI * u / reference;
    if g > 0.0 {
        (10.0 * g.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Pattern at `frequency` from recorded surface phasors. Phasors are multiplied
/// by `scale` first (e.g. to refer them to a 1 V source). Gain is referred to
/// `accepted_power` when given, otherwise to the radiated power (directivity).
pub fn far_field(
    surface: &SurfacePhasors,
    grid: &GridSpec,
    frequency: f64,
    scale: Complex64,
    accepted_power: Option<f64>,
) -> Result<FarFieldPattern> {
    let fi = surface
        .frequencies
        .iter()
        .position(|&f| (f - frequency).abs() <= 1e-6 * frequency)
        .ok_or_else(|| invalid(format!("no surface phasors recorded at {:.4} GHz", frequency / 1e9)))?;
    let p = grid.pml_cells;
    for a in 0..3 {
        if surface.lo[a] < p.max(1) || surface.hi[a] + p.max(1) > grid.dims[a] {
            return Err(Error::InvalidSurface("surface box reaches the absorbing layer".into()));
        }
    }
    let k = 2.0 * PI * frequency / C0;
    let faces = face_currents(surface, grid, fi, scale);

    let dth = PI / THETA_STEPS as f64;
    let dph = 2.0 * PI / PHI_STEPS as f64;
    let dirs: Vec<(f64, f64)> = (0..THETA_STEPS)
        .flat_map(|it| (0..PHI_STEPS).map(move |ip| ((it as f64 + 0.5) * dth, ip as f64 * dph)))
        .collect();
    let u_grid: Vec<f64> = dirs.par_iter().map(|&(t, ph)| intensity(&faces, k, t, ph)).collect();
    let radiated: f64 = dirs
        .iter()
        .zip(&u_grid)
        .map(|(&(t, _), &u)| u * t.sin() * dth * dph)
        .sum();
    if !(radiated > 0.0) {
        return Err(invalid("no radiated power on the equivalence surface"));
    }

    let e_dirs: Vec<(f64, f64, f64)> = (0..360)
        .map(|d| {
            let ang = d as f64;
            if ang <= 180.0 {
                (ang, ang.to_radians(), 0.0)
            } else {
                (ang, (360.0 - ang).to_radians(), PI)
            }
        })
        .collect();
    let u_e: Vec<f64> = e_dirs.par_iter().map(|&(_, t, ph)| intensity(&faces, k, t, ph)).collect();
    let u_h: Vec<f64> = (0..360)
        .into_par_iter()
        .map(|d| intensity(&faces, k, 0.5 * PI, (d as f64).to_radians()))
        .collect();

    let u_max = u_grid.iter().chain(&u_e).chain(&u_h).cloned().fold(0.0, f64::max);
    let reference = accepted_power.filter(|p| *p > 0.0).unwrap_or(radiated);
    Ok(FarFieldPattern {
        frequency,
        e_plane: e_dirs.iter().zip(&u_e).map(|(d, &u)| (d.0, to_dbi(u, reference))).collect(),
        h_plane: u_h.iter().enumerate().map(|(d, &u)| (d as f64, to_dbi(u, reference))).collect(),
        directivity_dbi: 10.0 * (4.0 * PI * u_max / radiated).log10(),
        radiated_power: radiated,
        surface_power: surface_flux(surface, grid, fi, scale),
        reference_power: reference,
    })
}
