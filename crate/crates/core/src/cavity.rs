//! Closed-form circular microstrip patch design (cavity model).
//!
//! Sizing follows the fringing-corrected circular-patch formula with
//! `F = 8.791e9 / (f_r·√ε_r)` evaluated in centimetres; resonance uses the
//! first zero of J₁′ (1.8412) and the effective radius. The sizing formula is
//! an approximation: the round trip through [`resonant_frequency`] stays
//! within ~0.3% for thin substrates but drifts to ~2% for thick, low-ε
//! substrates at the top of the 1–7 GHz range.

use std::f64::consts::PI;

use serde::Serialize;

use crate::constants::C0;
use crate::error::{ensure_positive, invalid, Result};

/// First zero of the derivative of the Bessel function J₁ (TM₁₁ mode).
pub const BESSEL_J1_PRIME_ZERO: f64 = 1.8412;
/// Sizing constant of the radius formula, in cm·Hz.
pub const SIZING_CONSTANT_CM_HZ: f64 = 8.791e9;
const FRINGING_CONSTANT: f64 = 1.7726;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchDesign {
    /// Physical radius (m).
    pub a: f64,
    /// Effective radius (m).
    pub a_e: f64,
    /// Substrate thickness (m).
    pub h: f64,
    pub eps_r: f64,
    /// Resonance predicted for `a` (Hz).
    pub f_r: f64,
    /// Intermediate sizing length (m).
    pub f_len: f64,
}

fn check(a_or_f: (&str, f64), eps_r: f64, h: f64) -> Result<()> {
    ensure_positive(a_or_f.0, a_or_f.1)?;
    ensure_positive("eps_r", eps_r)?;
    ensure_positive("h", h)
}

/// Sizing length F (m) for target frequency `f_r`.
pub fn sizing_length(f_r: f64, eps_r: f64) -> Result<f64> {
    ensure_positive("f_r", f_r)?;
    ensure_positive("eps_r", eps_r)?;
    Ok(SIZING_CONSTANT_CM_HZ / (f_r * eps_r.sqrt()) * 1e-2)
}

/// `1 + 2h/(π ε_r x)·[ln(πx/2h) + 1.7726]` with x and h in the same unit.
fn fringing_factor(x: f64, eps_r: f64, h: f64) -> f64 {
    1.0 + 2.0 * h / (PI * eps_r * x) * ((PI * x / (2.0 * h)).ln() + FRINGING_CONSTANT)
}

/// Physical radius (m) of a circular patch resonating at `f_r` (Hz) on a substrate
/// of permittivity `eps_r` and thickness `h` (m).
pub fn patch_radius_for_frequency(f_r: f64, eps_r: f64, h: f64) -> Result<f64> {
    check(("f_r", f_r), eps_r, h)?;
    let f_cm = sizing_length(f_r, eps_r)? * 1e2;
    let h_cm = h * 1e2;
    let lambda = C0 / (f_r * eps_r.sqrt());
    if h > lambda / 10.0 {
        log::warn!(
            "substrate thickness {:.3} mm exceeds lambda/10 ({:.3} mm); the cavity model is unreliable",
            h * 1e3,
            lambda * 1e2
        );
    }
    let factor = fringing_factor(f_cm, eps_r, h_cm);
    if !(factor.is_finite() && factor > 0.0) {
        return Err(invalid(format!(
            "fringing correction undefined for F = {f_cm:.4} cm, h = {h_cm:.4} cm"
        )));
    }
    Ok(f_cm / factor.sqrt() * 1e-2)
}

/// Effective radius (m) including the fringing correction.
pub fn effective_radius(a: f64, eps_r: f64, h: f64) -> Result<f64> {
    check(("a", a), eps_r, h)?;
    let factor = fringing_factor(a, eps_r, h);
    if !(factor.is_finite() && factor > 0.0) {
        return Err(invalid(format!("fringing correction undefined for a = {a}, h = {h}")));
    }
    Ok(a * factor.sqrt())
}

/// Dominant-mode (TM₁₁) resonance (Hz) of a patch of radius `a` (m).
pub fn resonant_frequency(a: f64, eps_r: f64, h: f64) -> Result<f64> {
    let a_e = effective_radius(a, eps_r, h)?;
    Ok(BESSEL_J1_PRIME_ZERO * C0 / (2.0 * PI * a_e * eps_r.sqrt()))
}

/// Full design record for a target frequency.
pub fn design(f_target: f64, eps_r: f64, h: f64) -> Result<PatchDesign> {
    let a = patch_radius_for_frequency(f_target, eps_r, h)?;
    Ok(PatchDesign {
        a,
        a_e: effective_radius(a, eps_r, h)?,
        h,
        eps_r,
        f_r: resonant_frequency(a, eps_r, h)?,
        f_len: sizing_length(f_target, eps_r)?,
    })
}

/// Series (thickness-weighted harmonic) permittivity of a layered substrate:
/// ε_eff = Σhᵢ / Σ(hᵢ/εᵢ). A first-order sizing aid only.
pub fn effective_substrate(layers: &[(f64, f64)]) -> Result<(f64, f64)> {
    if layers.is_empty() {
        return Err(invalid("no substrate layers"));
    }
    let mut h_sum = 0.0;
    let mut w_sum = 0.0;
    for &(h, eps) in layers {
        ensure_positive("layer thickness", h)?;
        ensure_positive("layer eps_r", eps)?;
        h_sum += h;
        w_sum += h / eps;
    }
    Ok((h_sum, h_sum / w_sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Expected values from a separate evaluation of the closed forms.
    #[test]
    fn radius_at_2g45_on_rogers() {
        let a = patch_radius_for_frequency(2.45e9, 2.2, 1.574e-3).unwrap();
        assert!((a / 23.14e-3 - 1.0).abs() < 0.005, "{a}");
    }

    #[test]
    fn radius_at_5g6_on_rogers() {
        let a = patch_radius_for_frequency(5.6e9, 2.2, 1.574e-3).unwrap();
        assert!((a / 9.75e-3 - 1.0).abs() < 0.005, "{a}");
    }

    #[test]
    fn thin_substrate_limit() {
        let f = sizing_length(2.45e9, 2.2).unwrap();
        let a = patch_radius_for_frequency(2.45e9, 2.2, 1e-12).unwrap();
        assert!((a / f - 1.0).abs() < 1e-9);
        let ae = effective_radius(0.02, 2.2, 1e-12).unwrap();
        assert!((ae / 0.02 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn effective_radius_value_and_monotonicity() {
        let ae = effective_radius(23.14e-3, 2.2, 1.574e-3).unwrap();
        assert!((ae / 24.23e-3 - 1.0).abs() < 0.005, "{ae}");
        let thicker = effective_radius(23.14e-3, 2.2, 3.148e-3).unwrap();
        assert!(thicker > ae);
        assert!(ae >= 23.14e-3);
    }

    #[test]
    fn resonance_values() {
        let f = resonant_frequency(23.14e-3, 2.2, 1.574e-3).unwrap();
        assert!((f / 2.45e9 - 1.0).abs() < 0.01, "{f}");
        let target = 3.0e9;
        let a = BESSEL_J1_PRIME_ZERO * C0 / (2.0 * PI * target);
        let f = resonant_frequency(a, 1.0, 1e-15).unwrap();
        assert!((f / target - 1.0).abs() < 1e-9);
        let f1 = resonant_frequency(0.01, 1.0, 1e-15).unwrap();
        let f2 = resonant_frequency(0.02, 1.0, 1e-15).unwrap();
        assert!((f1 / f2 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(patch_radius_for_frequency(0.0, 2.2, 1e-3).is_err());
        assert!(patch_radius_for_frequency(1e9, -2.2, 1e-3).is_err());
        assert!(effective_radius(0.01, 2.2, 0.0).is_err());
        assert!(resonant_frequency(-0.01, 2.2, 1e-3).is_err());
    }

    #[test]
    fn series_substrate() {
        let (h, e) = effective_substrate(&[(1e-3, 2.0), (1e-3, 2.0)]).unwrap();
        assert_eq!(h, 2e-3);
        assert!((e - 2.0).abs() < 1e-12);
        let (_, e) = effective_substrate(&[(1e-3, 1.0), (1e-3, 4.0)]).unwrap();
        assert!((e - 1.6).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn radius_decreases_with_f_and_eps(f in 1e9f64..6.9e9, e in 1.4f64..4.3, h in 0.5e-3f64..3e-3) {
            let a = patch_radius_for_frequency(f, e, h).unwrap();
            proptest::prop_assert!(a.is_finite() && a > 0.0);
            proptest::prop_assert!(patch_radius_for_frequency(f * 1.01, e, h).unwrap() < a);
            proptest::prop_assert!(patch_radius_for_frequency(f, e * 1.01, h).unwrap() < a);
            let fr = resonant_frequency(a, e, h).unwrap();
            proptest::prop_assert!(fr.is_finite() && fr > 0.0);
        }

        // The closed-form sizing is only approximately inverted by the resonance
        // formula; 2.5% bounds the worst case over the whole design domain.
        #[test]
        fn round_trip_is_close(f in 1e9f64..7e9, e in 1.4f64..4.4, h in 0.5e-3f64..3e-3) {
            let a = patch_radius_for_frequency(f, e, h).unwrap();
            let fr = resonant_frequency(a, e, h).unwrap();
            proptest::prop_assert!((fr / f - 1.0).abs() < 0.025);
        }
    }
}
