//! Outer boundary conditions and CPML grading profiles.

use serde::{Deserialize, Serialize};

use crate::constants::{EPS0, ETA0};
use crate::error::{invalid, Result};

/// Condition applied on one face of the computational box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    /// Convolutional PML backed by a PEC wall.
    #[default]
    Cpml,
    /// First-order Mur absorbing condition on the tangential E field.
    Mur1,
    /// Perfect electric wall.
    Pec,
    /// Perfect magnetic wall (tangential H mirrored with opposite sign).
    Pmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    /// Faces ordered [-x, +x, -y, +y, -z, +z].
    pub faces: [FaceKind; 6],
    pub cpml_cells: usize,
    /// Polynomial grading order.
    pub order: f64,
    /// Peak conductivity relative to the optimal value 0.8(m+1)/(η₀Δ).
    pub sigma_scale: f64,
    pub kappa_max: f64,
    pub alpha_max: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            faces: [FaceKind::Cpml; 6],
            cpml_cells: 10,
            order: 3.0,
            sigma_scale: 1.0,
            kappa_max: 5.0,
            alpha_max: 0.05,
        }
    }
}

impl BoundarySpec {
    pub fn uniform(kind: FaceKind) -> Self {
        Self {
            faces: [kind; 6],
            ..Self::default()
        }
    }

    pub fn face(&self, axis: usize, high: bool) -> FaceKind {
        self.faces[2 * axis + high as usize]
    }

    pub fn any(&self, kind: FaceKind) -> bool {
        self.faces.contains(&kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.any(FaceKind::Cpml) {
            if self.cpml_cells < 6 {
                return Err(invalid(format!("cpml_cells must be at least 6, got {}", self.cpml_cells)));
            }
            if !(self.order >= 1.0 && self.order <= 6.0) {
                return Err(invalid("cpml grading order must lie in [1, 6]"));
            }
            if !(self.sigma_scale > 0.0 && self.kappa_max >= 1.0 && self.alpha_max >= 0.0) {
                return Err(invalid("cpml needs sigma_scale > 0, kappa_max >= 1, alpha_max >= 0"));
            }
        }
        Ok(())
    }
}

/// One-dimensional CPML coefficients along an axis, sampled at integer node
/// positions (`e_*`) and at half-integer positions (`h_*`).
#[derive(Debug, Clone)]
pub(crate) struct AxisProfile {
    /// 1/(κΔ) at nodes.
    pub e_inv_kd: Vec<f32>,
    pub e_b: Vec<f32>,
    /// c/Δ at nodes.
    pub e_c: Vec<f32>,
    /// 1/(κΔ) at node + ½.
    pub h_inv_kd: Vec<f32>,
    pub h_b: Vec<f32>,
    pub h_c: Vec<f32>,
    /// Whether each end carries a CPML slab.
    pub pml: [bool; 2],
    pub layers: usize,
}

impl AxisProfile {
    /// Profile for an axis with `cells` cells of size `delta`.
    pub fn new(spec: &BoundarySpec, axis: usize, cells: usize, delta: f64, dt: f64) -> Self {
        let n = cells + 1;
        let pml = [
            spec.face(axis, false) == FaceKind::Cpml,
            spec.face(axis, true) == FaceKind::Cpml,
        ];
        let layers = spec.cpml_cells.min(cells / 2);
        let mut p = Self {
            e_inv_kd: vec![(1.0 / delta) as f32; n],
            e_b: vec![0.0; n],
            e_c: vec![0.0; n],
            h_inv_kd: vec![(1.0 / delta) as f32; n],
            h_b: vec![0.0; n],
            h_c: vec![0.0; n],
            pml,
            layers,
        };
        if layers == 0 {
            return p;
        }
        let d = layers as f64 * delta;
        let sigma_max = spec.sigma_scale * 0.8 * (spec.order + 1.0) / (ETA0 * delta);
        let grade = |depth: f64| -> (f64, f64, f64) {
            if depth <= 0.0 {
                return (1.0, 0.0, 0.0);
            }
            let x = (depth / d).min(1.0);
            let s = sigma_max * x.powf(spec.order);
            let k = 1.0 + (spec.kappa_max - 1.0) * x.powf(spec.order);
            let a = spec.alpha_max * (1.0 - x);
            let b = (-(s / k + a) * dt / EPS0).exp();
            let c = if s > 0.0 { s * (b - 1.0) / (s * k + k * k * a) } else { 0.0 };
            (k, b, c)
        };
        let lo_if = layers as f64;
        let hi_if = (cells - layers) as f64;
        for idx in 0..n {
            for (half, pos) in [(false, idx as f64), (true, idx as f64 + 0.5)] {
                let mut depth = 0.0;
                if pml[0] && pos < lo_if {
                    depth = (lo_if - pos) * delta;
                }
                if pml[1] && pos > hi_if {
                    depth = (pos - hi_if) * delta;
                }
                let (k, b, c) = grade(depth);
                let (ikd, bb, cc) = ((1.0 / (k * delta)) as f32, b as f32, (c / delta) as f32);
                if half {
                    p.h_inv_kd[idx] = ikd;
                    p.h_b[idx] = bb;
                    p.h_c[idx] = cc;
                } else {
                    p.e_inv_kd[idx] = ikd;
                    p.e_b[idx] = bb;
                    p.e_c[idx] = cc;
                }
            }
        }
        p
    }

    pub fn any(&self) -> bool {
        self.layers > 0 && (self.pml[0] || self.pml[1])
    }

    /// Node-index ranges along this axis where E-type psi terms are active.
    pub fn e_slabs(&self, cells: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        if self.layers == 0 {
            return out;
        }
        if self.pml[0] {
            out.push(1..self.layers);
        }
        if self.pml[1] {
            out.push(cells - self.layers + 1..cells);
        }
        out
    }

    /// Index ranges along this axis where H-type psi terms are active.
    pub fn h_slabs(&self, cells: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        if self.layers == 0 {
            return out;
        }
        if self.pml[0] {
            out.push(0..self.layers);
        }
        if self.pml[1] {
            out.push(cells - self.layers..cells);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_thin_cpml() {
        let mut b = BoundarySpec::default();
        b.cpml_cells = 4;
        assert!(b.validate().is_err());
        b.faces = [FaceKind::Pec; 6];
        assert!(b.validate().is_ok());
    }

    #[test]
    fn profile_is_graded_and_symmetric() {
        let spec = BoundarySpec::default();
        let p = AxisProfile::new(&spec, 0, 40, 1e-3, 1e-12);
        assert_eq!(p.e_b[20], 0.0);
        assert!(p.e_inv_kd[0] < p.e_inv_kd[5]);
        assert!((p.e_inv_kd[0] - p.e_inv_kd[40]).abs() < 1e-3);
        assert!((p.h_inv_kd[0] - p.h_inv_kd[39]).abs() < 1e-3);
        assert!(p.e_c[1] < 0.0);
        assert_eq!(p.e_slabs(40), vec![1..10, 31..40]);
        assert_eq!(p.h_slabs(40), vec![0..10, 30..40]);
    }
}
