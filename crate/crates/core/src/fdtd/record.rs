//! Probe requests and the record produced by a run.

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::geometry::Axis;
use crate::grid::GridSpec;

use super::excitation::ExcitationSpec;

/// A single E-field edge sampled every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProbe {
    pub name: String,
    pub axis: Axis,
    pub node: [usize; 3],
}

/// Field phasors requested from a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    /// Analysis frequencies for all phasor probes (Hz).
    pub frequencies: Vec<f64>,
    /// Cell box `[lo, hi)` whose cell-centred E phasors are accumulated.
    pub volume: Option<([usize; 3], [usize; 3])>,
    /// Node box `[lo, hi]` whose faces carry tangential E and H phasors.
    pub surface: Option<([usize; 3], [usize; 3])>,
    pub points: Vec<PointProbe>,
    /// Accumulate phasors every `stride` steps; automatic when `None`.
    pub dft_stride: Option<usize>,
}

/// Cell-centred E phasors (peak amplitude, unnormalised) over a cell box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumePhasors {
    pub frequency: f64,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    /// Components x, y, z; x-fastest over the box.
    pub e: [Vec<Complex32>; 3],
}

impl VolumePhasors {
    pub fn dims(&self) -> [usize; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    /// |E|² at a box-local cell.
    pub fn magnitude_sq(&self, local: usize) -> f64 {
        self.e.iter().map(|c| c[local].norm_sqr() as f64).sum()
    }
}

/// Tangential fields on one face of the equivalence box, sampled at patch centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFace {
    pub normal: Axis,
    /// +1 for the face on the high side of the box, -1 for the low side.
    pub sign: f64,
    /// Node plane index along the normal.
    pub plane: usize,
    /// Patch counts along the two tangential axes (cyclic order after the normal).
    pub counts: [usize; 2],
    /// Per frequency: E along the first and second tangential axes.
    pub e: Vec<[Vec<Complex32>; 2]>,
    pub h: Vec<[Vec<Complex32>; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePhasors {
    pub frequencies: Vec<f64>,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub faces: Vec<SurfaceFace>,
}

/// Voltage and current histories of a port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSeries {
    pub impedance: f64,
    /// Voltage across the port at t = (n + 1)·dt.
    pub v: Vec<f64>,
    /// Current into the structure at t = (n + ½)·dt.
    pub i: Vec<f64>,
    /// Open-circuit source voltage at t = (n + 1)·dt; zeros for passive ports.
    pub v_source: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    EnergyFloor,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub grid: GridSpec,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub dft_stride: usize,
    pub coefficient_classes: usize,
    pub notes: Vec<String>,
    /// Provenance tag supplied by the caller (config hash).
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub dt: f64,
    /// Sample offsets (in units of dt) of the voltage and current series.
    pub v_offset: f64,
    pub i_offset: f64,
    pub excitation: ExcitationSpec,
    /// The driven port followed by any passive ports.
    pub ports: Vec<PortSeries>,
    /// Point-probe E histories at t = (n + 1)·dt.
    pub points: Vec<Vec<f32>>,
    pub volume: Vec<VolumePhasors>,
    pub surface: Option<SurfacePhasors>,
    pub metadata: RunMetadata,
}

impl TimeSeriesRecord {
    pub fn len(&self) -> usize {
        self.ports.first().map_or(self.metadata.steps, |p| p.v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn v_port(&self) -> &[f64] {
        &self.ports[0].v
    }

    pub fn i_port(&self) -> &[f64] {
        &self.ports[0].i
    }

    pub fn v_source(&self) -> &[f64] {
        &self.ports[0].v_source
    }

    pub fn volume_at(&self, f: f64) -> Option<&VolumePhasors> {
        self.volume.iter().find(|v| (v.frequency - f).abs() <= 1e-6 * f.abs().max(1.0))
    }
}
