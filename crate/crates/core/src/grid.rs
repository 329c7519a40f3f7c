//! Uniform Yee grid layout and index helpers.
//!
//! Cells are indexed x-fastest. Field components are stored on node-indexed
//! arrays of `(nx+1)·(ny+1)·(nz+1)` entries: the edge of axis `a` starting at
//! node `(i, j, k)` carries the E component along `a`, and the face with
//! normal `a` whose lowest corner is node `(i, j, k)` carries the H component
//! along `a`.

use serde::{Deserialize, Serialize};

use crate::constants::C0;
use crate::error::{ensure_positive, invalid, Result};
use crate::geometry::Aabb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell sizes (dx, dy, dz) in metres.
    pub cell: [f64; 3],
    /// World position of node (0, 0, 0).
    pub origin: [f64; 3],
    /// Cell counts per axis, absorbing layers included.
    pub dims: [usize; 3],
    /// Absorbing-layer thickness in cells (on faces that use one).
    pub pml_cells: usize,
    /// Free-space margin requested between the focus box and the absorbing layer,
    /// per face: [-x, +x, -y, +y, -z, +z].
    pub padding: [f64; 6],
}

impl GridSpec {
    /// Grid covering `focus` plus `padding` plus `pml_cells` on every face.
    /// Node planes are aligned to integer multiples of the cell size.
    pub fn around(focus: &Aabb, cell: [f64; 3], padding: [f64; 6], pml_cells: usize) -> Result<Self> {
        for (a, c) in cell.iter().enumerate() {
            ensure_positive(&format!("cell size along axis {a}"), *c)?;
        }
        if focus.is_empty() {
            return Err(invalid("empty focus box"));
        }
        if padding.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("padding must be non-negative"));
        }
        let mut origin = [0.0; 3];
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let lo = focus.min[a] - padding[2 * a];
            let hi = focus.max[a] + padding[2 * a + 1];
            // small tolerance so exact multiples do not grow an extra cell
            let i_lo = (lo / cell[a] + 1e-9).floor() as i64 - pml_cells as i64;
            let i_hi = (hi / cell[a] - 1e-9).ceil() as i64 + pml_cells as i64;
            origin[a] = i_lo as f64 * cell[a];
            dims[a] = (i_hi - i_lo) as usize;
        }
        Ok(Self {
            cell,
            origin,
            dims,
            pml_cells,
            padding,
        })
    }

    /// Grid with an explicit origin and size.
    pub fn new(cell: [f64; 3], origin: [f64; 3], dims: [usize; 3], pml_cells: usize) -> Result<Self> {
        for c in cell {
            ensure_positive("cell size", c)?;
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid("grid needs at least one cell per axis"));
        }
        Ok(Self {
            cell,
            origin,
            dims,
            pml_cells,
            padding: [0.0; 6],
        })
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn nodes(&self) -> [usize; 3] {
        [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1]
    }

    pub fn num_nodes(&self) -> usize {
        let n = self.nodes();
        n[0] * n[1] * n[2]
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes();
        i + n[0] * (j + n[1] * k)
    }

    /// Strides of the node-indexed arrays along x, y, z.
    pub fn node_strides(&self) -> [usize; 3] {
        let n = self.nodes();
        [1, n[0], n[0] * n[1]]
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node_position(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + idx[0] as f64 * self.cell[0],
            self.origin[1] + idx[1] as f64 * self.cell[1],
            self.origin[2] + idx[2] as f64 * self.cell[2],
        ]
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + (idx[0] as f64 + 0.5) * self.cell[0],
            self.origin[1] + (idx[1] as f64 + 0.5) * self.cell[1],
            self.origin[2] + (idx[2] as f64 + 0.5) * self.cell[2],
        ]
    }

    /// Nearest node to a world point, clamped into the grid.
    pub fn nearest_node(&self, p: [f64; 3]) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let x = ((p[a] - self.origin[a]) / self.cell[a]).round();
            out[a] = x.clamp(0.0, self.dims[a] as f64) as usize;
        }
        out
    }

    /// Real-valued node coordinate of a world point (unclamped).
    pub fn node_coordinate(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.cell[0],
            (p[1] - self.origin[1]) / self.cell[1],
            (p[2] - self.origin[2]) / self.cell[2],
        ]
    }

    pub fn extent(&self) -> Aabb {
        Aabb::new(self.origin, self.node_position(self.dims))
    }

    /// The region inside the absorbing layers (cell index ranges, half-open).
    pub fn interior(&self) -> [(usize, usize); 3] {
        let p = self.pml_cells;
        [
            (p, self.dims[0] - p),
            (p, self.dims[1] - p),
            (p, self.dims[2] - p),
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell[0] * self.cell[1] * self.cell[2]
    }

    /// Largest cell size permitted by the λ/20 rule at `f_max` in a medium of `eps_r_max`.
    pub fn max_cell_for(f_max: f64, eps_r_max: f64) -> f64 {
        C0 / (f_max * eps_r_max.sqrt()) / 20.0
    }

    /// Warning text if any cell size exceeds λ_min/20.
    pub fn resolution_warning(&self, f_max: f64, eps_r_max: f64) -> Option<String> {
        let limit = Self::max_cell_for(f_max, eps_r_max);
        let worst = self.cell.iter().cloned().fold(0.0, f64::max);
        (worst > limit).then(|| {
            format!(
                "cell size {:.3} mm exceeds lambda/20 = {:.3} mm (eps_r {:.1} at {:.2} GHz)",
                worst * 1e3,
                limit * 1e3,
                eps_r_max,
                f_max / 1e9
            )
        })
    }

    /// Approximate solver memory in bytes: fields, update coefficients and materials.
    pub fn memory_estimate(&self) -> usize {
        // 6 field + 6 coefficient f32 arrays on nodes, plus per-cell material data
        self.num_nodes() * 12 * 4 + self.num_cells() * (3 * 4 + 2)
    }

    pub fn check_memory(&self, budget_bytes: usize) -> Result<()> {
        let est = self.memory_estimate();
        if est > budget_bytes {
            return Err(crate::error::Error::MemoryBudget {
                cells: self.num_cells(),
                estimate_mb: est as f64 / 1048576.0,
                budget_mb: budget_bytes as f64 / 1048576.0,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_and_padded() {
        let focus = Aabb::new([-0.0225, -0.0225, 0.0], [0.0225, 0.0225, 0.007004]);
        let g = GridSpec::around(&focus, [1e-3, 1e-3, 0.5e-3], [10e-3; 6], 8).unwrap();
        // z = 0 is a node plane
        let kz = -g.origin[2] / g.cell[2];
        assert!((kz - kz.round()).abs() < 1e-9);
        let ext = g.extent();
        assert!(ext.min[0] <= -0.0225 - 0.010 - 8e-3 + 1e-12);
        assert!(ext.max[2] >= 0.007004 + 0.010 + 8.0 * 0.5e-3 - 1e-12);
        // -32.5 mm and +32.5 mm snap outwards to whole cells
        assert_eq!(g.dims[0], 66 + 16);
    }

    #[test]
    fn memory_check() {
        let g = GridSpec::new([1e-3; 3], [0.0; 3], [100, 100, 100], 10).unwrap();
        assert!(g.check_memory(1 << 30).is_ok());
        let err = g.check_memory(1 << 20).unwrap_err();
        assert!(err.to_string().contains("MB"));
    }
}
