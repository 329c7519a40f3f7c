//! Log-distance link budget.
//!
//! Pr = Pt + Gt + Gr − [FSPL(d₀) + 10·n·log10(d/d₀)] − fade margin, with
//! FSPL(d₀) = 20·log10(d₀) + 20·log10(f) − 147.55 (d₀ in m, f in Hz).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub frequency_hz: f64,
    pub rx_sensitivity_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub fade_margin_db: f64,
}

impl Default for RadioParams {
    /// An 802.11b radio at 1 Mb/s in free space: 20 dBm, 2 dBi antennas,
    /// −90 dBm sensitivity, 2.45 GHz.
    fn default() -> Self {
        Self {
            tx_power_dbm: 20.0,
            tx_gain_dbi: 2.0,
            rx_gain_dbi: 2.0,
            frequency_hz: 2.45e9,
            rx_sensitivity_dbm: -90.0,
            path_loss_exponent: 2.0,
            reference_distance_m: 1.0,
            fade_margin_db: 0.0,
        }
    }
}

impl RadioParams {
    /// Body-worn sensor talking to an access point indoors: 15 dBm transmit
    /// power, −90 dBm sensitivity, exponent 3.5 for a body-shadowed indoor
    /// path and a 10 dB fade margin. `antenna_gain_dbi` is the wearable
    /// antenna's gain (e.g. the simulated directivity); the access point has 2 dBi.
    pub fn wearable_preset(antenna_gain_dbi: f64) -> Self {
        Self {
            tx_power_dbm: 15.0,
            tx_gain_dbi: antenna_gain_dbi,
            rx_gain_dbi: 2.0,
            frequency_hz: 2.45e9,
            rx_sensitivity_dbm: -90.0,
            path_loss_exponent: 3.5,
            reference_distance_m: 1.0,
            fade_margin_db: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("frequency", self.frequency_hz)?;
        ensure_positive("reference distance", self.reference_distance_m)?;
        if !(self.path_loss_exponent >= 1.0) {
            return Err(invalid(format!(
                "path-loss exponent must be at least 1, got {}",
                self.path_loss_exponent
            )));
        }
        if !(self.rx_sensitivity_dbm < self.tx_power_dbm) {
            return Err(invalid("receiver sensitivity must lie below the transmit power"));
        }
        if !(self.fade_margin_db >= 0.0) {
            return Err(invalid("fade margin must be non-negative"));
        }
        Ok(())
    }
}

/// Free-space path loss at distance `d` (m) and frequency `f` (Hz), in dB.
pub fn free_space_path_loss(d: f64, f: f64) -> f64 {
    20.0 * d.log10() + 20.0 * f.log10() - 147.55
}

/// Total path loss of the log-distance model at `d` (dB).
pub fn path_loss(p: &RadioParams, d: f64) -> Result<f64> {
    p.validate()?;
    if !(d >= p.reference_distance_m) {
        return Err(invalid(format!(
            "distance {d} m is below the reference distance {} m",
            p.reference_distance_m
        )));
    }
    Ok(free_space_path_loss(p.reference_distance_m, p.frequency_hz)
        + 10.0 * p.path_loss_exponent * (d / p.reference_distance_m).log10())
}

/// Received power at distance `d` (dBm).
pub fn received_power(p: &RadioParams, d: f64) -> Result<f64> {
    let loss = path_loss(p, d)?;
    Ok(p.tx_power_dbm + p.tx_gain_dbi + p.rx_gain_dbi - loss - p.fade_margin_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeEstimate {
    pub range_m: f64,
    /// True when even the reference distance falls short of the sensitivity.
    pub infeasible: bool,
}

/// Largest distance whose received power meets the sensitivity.
pub fn max_range(p: &RadioParams) -> Result<RangeEstimate> {
    let at_ref = received_power(p, p.reference_distance_m)?;
    let excess = at_ref - p.rx_sensitivity_dbm;
    if excess < 0.0 {
        return Ok(RangeEstimate {
            range_m: 0.0,
            infeasible: true,
        });
    }
    Ok(RangeEstimate {
        range_m: p.reference_distance_m * 10f64.powf(excess / (10.0 * p.path_loss_exponent)),
        infeasible: false,
    })
}

/// (distance, received power, margin over sensitivity) at each distance.
pub fn range_table(p: &RadioParams, distances: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    distances
        .iter()
        .map(|&d| {
            let pr = received_power(p, d)?;
            Ok((d, pr, pr - p.rx_sensitivity_dbm))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fspl_at_forty_metres() {
        assert_abs_diff_eq!(free_space_path_loss(40.0, 2.45e9), 72.27, epsilon = 0.01);
        let p = RadioParams::default();
        assert_abs_diff_eq!(path_loss(&p, 40.0).unwrap(), 72.27, epsilon = 0.01);
        assert_abs_diff_eq!(received_power(&p, 40.0).unwrap(), -48.27, epsilon = 0.01);
    }

    #[test]
    fn doubling_distance_costs_six_db() {
        let p = RadioParams::default();
        let a = received_power(&p, 10.0).unwrap();
        let b = received_power(&p, 20.0).unwrap();
        assert_abs_diff_eq!(a - b, 6.0206, epsilon = 1e-4);
    }

    #[test]
    fn free_space_range_is_kilometres() {
        let r = max_range(&RadioParams::default()).unwrap();
        assert!(r.range_m > 40.0);
        assert!((r.range_m - 4.9e3).abs() < 0.2e3, "{}", r.range_m);
    }

    #[test]
    fn wearable_preset_reaches_forty_metres() {
        let r = max_range(&RadioParams::wearable_preset(2.0)).unwrap();
        assert!(r.range_m >= 40.0, "{}", r.range_m);
    }

    #[test]
    fn errors_and_infeasible_links() {
        let p = RadioParams::default();
        assert!(received_power(&p, 0.5).is_err());
        let mut bad = p;
        bad.rx_sensitivity_dbm = 30.0;
        assert!(max_range(&bad).is_err());
        let mut weak = p;
        weak.rx_sensitivity_dbm = 10.0;
        let r = max_range(&weak).unwrap();
        assert!(r.infeasible && r.range_m == 0.0);
    }

    proptest! {
        #[test]
        fn range_round_trip(tx in 0.0..30.0f64, g in -5.0..8.0f64, n in 1.0..5.0f64, f in 0.5e9..7e9f64) {
            let p = RadioParams { tx_power_dbm: tx, tx_gain_dbi: g, path_loss_exponent: n, frequency_hz: f, ..RadioParams::default() };
            let r = max_range(&p).unwrap();
            prop_assume!(!r.infeasible);
            let pr = received_power(&p, r.range_m).unwrap();
            prop_assert!((pr - p.rx_sensitivity_dbm).abs() < 0.01);
        }

        #[test]
        fn monotone_in_distance_and_exponent(d in 1.01..500.0f64, n in 1.0..4.5f64) {
            let p = RadioParams { path_loss_exponent: n, ..RadioParams::default() };
            let q = RadioParams { path_loss_exponent: n + 0.5, ..RadioParams::default() };
            prop_assert!(received_power(&p, d * 1.1).unwrap() < received_power(&p, d).unwrap());
            prop_assert!(received_power(&q, d).unwrap() < received_power(&p, d).unwrap());
            prop_assert!(max_range(&q).unwrap().range_m < max_range(&p).unwrap().range_m);
        }

        #[test]
        fn gains_are_additive(d in 1.0..100.0f64, g in -5.0..5.0f64) {
            let p = RadioParams::default();
            let q = RadioParams { rx_gain_dbi: p.rx_gain_dbi + g, ..p };
            let diff = received_power(&q, d).unwrap() - received_power(&p, d).unwrap();
            prop_assert!((diff - g).abs() < 1e-9);
        }
    }
}
