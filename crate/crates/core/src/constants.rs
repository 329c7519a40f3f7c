//! Physical constants in SI units.

use std::f64::consts::PI;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 2.997_924_58e8;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m), classical 4π×1e-7 value.
pub const MU0: f64 = 4.0 * PI * 1e-7;
/// Free-space wave impedance (Ω).
pub const ETA0: f64 = MU0 * C0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub c: f64,
    pub eps0: f64,
    pub mu0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            c: C0,
            eps0: EPS0,
            mu0: MU0,
        }
    }
}

impl PhysicalConstants {
    /// Relative error of c²·ε₀·μ₀ from unity.
    pub fn consistency_error(&self) -> f64 {
        (self.c * self.c * self.eps0 * self.mu0 - 1.0).abs()
    }

    pub fn wave_impedance(&self) -> f64 {
        self.mu0 * self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_consistent() {
        assert!(PhysicalConstants::default().consistency_error() < 1e-9);
    }

    #[test]
    fn free_space_impedance() {
        assert!((ETA0 - 376.730).abs() < 1e-2);
    }
}
