//! Yee-lattice time-domain solver.

mod boundary;
mod excitation;
mod record;
mod solver;

pub use boundary::{BoundarySpec, FaceKind};
pub use excitation::{ExcitationSpec, BANDWIDTH_LEVEL_DB};
pub use record::*;
pub use solver::{
    courant_timestep, run_simulation, PortDrive, Simulation, SimulationSetup, SoftSource, StopCriterion,
    DEFAULT_COURANT_SAFETY,
};
