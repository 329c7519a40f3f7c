use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Result};

/// Spectral level (relative to peak) at which `bandwidth` is measured.
pub const BANDWIDTH_LEVEL_DB: f64 = -40.0;
const DC_REJECTION_DB: f64 = -60.0;

/// Gaussian-modulated sinusoid `A·exp(-((t-t0)/τ)²)·sin(2πf_c(t-t0))`.
///
/// `bandwidth` is the full width between the -40 dB points of the spectrum.
/// The delay `t0` is `delay` multiples of τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationSpec {
    pub f_center: f64,
    pub bandwidth: f64,
    pub amplitude: f64,
    pub delay: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            f_center: 4.0e9,
            bandwidth: 6.4e9,
            amplitude: 1.0,
            delay: 4.5,
        }
    }
}

impl ExcitationSpec {
    /// Gaussian time constant τ.
    pub fn tau(&self) -> f64 {
        let x = (BANDWIDTH_LEVEL_DB.abs() / 20.0 * std::f64::consts::LN_10).sqrt();
        x / (PI * 0.5 * self.bandwidth)
    }

    pub fn t0(&self) -> f64 {
        self.delay * self.tau()
    }

    pub fn value(&self, t: f64) -> f64 {
        let tau = self.tau();
        let s = (t - self.t0()) / tau;
        if s.abs() > 12.0 {
            return 0.0;
        }
        self.amplitude * (-s * s).exp() * (2.0 * PI * self.f_center * (t - self.t0())).sin()
    }

    /// Spectral magnitude relative to the peak, in dB (positive-frequency lobe).
    pub fn relative_level_db(&self, f: f64) -> f64 {
        let tau = self.tau();
        let lobe = |df: f64| (-(PI * tau * df).powi(2)).exp();
        let peak = lobe(0.0) - lobe(2.0 * self.f_center);
        let v = (lobe(f - self.f_center) - lobe(f + self.f_center)).abs();
        20.0 * (v / peak).max(1e-30).log10()
    }

    /// Time after which the pulse is below 1e-12 of its peak envelope.
    pub fn duration(&self) -> f64 {
        self.t0() + 5.3 * self.tau()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("excitation f_center", self.f_center)?;
        ensure_positive("excitation bandwidth", self.bandwidth)?;
        ensure_positive("excitation amplitude", self.amplitude)?;
        if !(self.delay >= 3.0) {
            return Err(invalid(format!(
                "excitation delay must be at least 3 pulse widths, got {}",
                self.delay
            )));
        }
        let dc = self.envelope_db(0.0);
        let twice = self.envelope_db(2.0 * self.f_center);
        if dc > DC_REJECTION_DB || twice > DC_REJECTION_DB {
            return Err(invalid(format!(
                "excitation spectrum at 0 Hz / 2·f_center is {dc:.1} / {twice:.1} dB, needs <= {DC_REJECTION_DB} dB; narrow the bandwidth"
            )));
        }
        Ok(())
    }

    /// Level of the Gaussian envelope of the spectrum at `f`, in dB.
    pub fn envelope_db(&self, f: f64) -> f64 {
        let x = PI * self.tau() * (f - self.f_center);
        -x * x * 20.0 / std::f64::consts::LN_10
    }

    /// True if every frequency in `[f_lo, f_hi]` lies within the -40 dB support.
    pub fn covers(&self, f_lo: f64, f_hi: f64) -> bool {
        let tol = 1e-6;
        self.envelope_db(f_lo) >= BANDWIDTH_LEVEL_DB - tol && self.envelope_db(f_hi) >= BANDWIDTH_LEVEL_DB - tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pulse_covers_analysis_band() {
        let e = ExcitationSpec::default();
        e.validate().unwrap();
        assert!(e.covers(1.0e9, 7.0e9));
        assert!(!e.covers(0.5e9, 7.0e9));
        assert!(e.envelope_db(0.0) <= -60.0);
        assert!(e.envelope_db(8.0e9) <= -60.0);
    }

    #[test]
    fn band_edges_sit_at_minus_40() {
        let e = ExcitationSpec::default();
        assert!((e.envelope_db(e.f_center + 0.5 * e.bandwidth) + 40.0).abs() < 1e-9);
    }

    #[test]
    fn too_wide_is_rejected() {
        let e = ExcitationSpec {
            bandwidth: 9e9,
            ..Default::default()
        };
        assert!(e.validate().is_err());
    }

    #[test]
    fn starts_quiet() {
        let e = ExcitationSpec::default();
        assert!(e.value(0.0).abs() < 1e-8);
        assert!(e.value(e.duration()).abs() < 1e-10);
    }
}
