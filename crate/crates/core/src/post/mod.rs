//! Engineering results derived from solver records.

mod far_field;
mod report;
mod sar;
mod spectrum;

pub use far_field::*;
pub use report::*;
pub use sar::*;
pub use spectrum::*;
