//! Plot-ready CSV text for every result type.
//!
//! Each file opens with `#` comment lines naming the scenario hash and the
//! normalisation in force; the body follows a single header row. Numbers are
//! printed with fixed formats so identical inputs give identical bytes.

use std::fmt::Write;

use super::far_field::FarFieldPattern;
use super::sar::{Compliance, SarResult};
use super::spectrum::{Resonance, S11Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvHeader {
    pub scenario_hash: String,
    pub normalization: String,
    /// Extra `# ` lines, e.g. the tissue properties in force.
    pub notes: Vec<String>,
}

impl CsvHeader {
    pub fn new(scenario_hash: impl Into<String>, normalization: impl Into<String>) -> Self {
        Self {
            scenario_hash: scenario_hash.into(),
            normalization: normalization.into(),
            notes: Vec::new(),
        }
    }

    pub fn with_notes(mut self, notes: &[String]) -> Self {
        self.notes.extend_from_slice(notes);
        self
    }

    fn write(&self, out: &mut String, columns: &str) {
        let _ = writeln!(out, "# scenario_hash: {}", self.scenario_hash);
        let _ = writeln!(out, "# normalization: {}", self.normalization);
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        let _ = writeln!(out, "{columns}");
    }
}

/// Lines of a CSV text that are not `#` comments.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

pub fn s11_csv(spec: &S11Spectrum, header: &CsvHeader) -> String {
    let mut out = String::new();
    header.write(&mut out, "frequency_hz,s11_db,re_zin,im_zin");
    for (k, f) in spec.frequencies.iter().enumerate() {
        let z = spec.z_in[k];
        let _ = writeln!(out, "{:.1},{:.4},{:.4},{:.4}", f, spec.s11_db[k], z.re, z.im);
    }
    out
}

pub fn resonances_csv(resonances: &[Resonance], header: &CsvHeader) -> String {
    let mut out = String::new();
    header.write(&mut out, "f_dip_hz,depth_db,f_low_hz,f_high_hz,bandwidth_hz");
    for r in resonances {
        let _ = writeln!(
            out,
            "{:.1},{:.4},{:.1},{:.1},{:.1}",
            r.f_dip,
            r.depth_db,
            r.band_edges.0,
            r.band_edges.1,
            r.bandwidth()
        );
    }
    out
}

/// File name for a pattern cut, e.g. `pattern_h_2.450GHz.csv`.
pub fn pattern_file_name(plane: &str, frequency: f64) -> String {
    format!("pattern_{plane}_{:.3}GHz.csv", frequency / 1e9)
}

/// One cut (`"e"` or `"h"`) of a pattern.
pub fn pattern_csv(pattern: &FarFieldPattern, plane: &str, header: &CsvHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# frequency_hz: {:.1}", pattern.frequency);
    let _ = writeln!(out, "# directivity_dbi: {:.4}", pattern.directivity_dbi);
    let _ = writeln!(out, "# radiated_power_w: {:.6e}", pattern.radiated_power);
    header.write(&mut out, "angle_deg,gain_dbi");
    let cut = if plane == "e" { &pattern.e_plane } else { &pattern.h_plane };
    for (angle, gain) in cut {
        let _ = writeln!(out, "{:.1},{:.4}", angle, gain);
    }
    out
}

pub fn sar_csv(sar: &SarResult, compliance: &Compliance, header: &CsvHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# input_power_ref_w: {:.6e}", sar.input_power_ref);
    header.write(&mut out, "limit,peak_w_per_kg,margin_db,location,verdict");
    for (v, avg) in compliance.verdicts.iter().zip([&sar.peak_1g, &sar.peak_10g]) {
        let loc = [
            avg.location[0] + sar.offset[0],
            avg.location[1] + sar.offset[1],
            avg.location[2] + sar.offset[2],
        ];
        let _ = writeln!(
            out,
            "{} {:.1} W/kg,{:.6e},{:.4},{}:{}:{},{}",
            v.name,
            v.limit,
            v.peak,
            v.margin_db,
            loc[0],
            loc[1],
            loc[2],
            if v.pass { "pass" } else { "fail" }
        );
    }
    out
}

/// Range table rows of (distance m, received dBm, margin dB).
pub fn link_csv(rows: &[(f64, f64, f64)], header: &CsvHeader) -> String {
    let mut out = String::new();
    header.write(&mut out, "distance_m,pr_dbm,margin_db");
    for (d, pr, m) in rows {
        let _ = writeln!(out, "{:.2},{:.4},{:.4}", d, pr, m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn s11_layout() {
        let spec = S11Spectrum {
            frequencies: vec![1e9, 2e9],
            s11_db: vec![-1.0, -20.0],
            z_in: vec![Complex64::new(10.0, 5.0), Complex64::new(50.0, 0.0)],
            z0: 50.0,
            undefined: vec![],
            passivity_violations: vec![],
        };
        let text = s11_csv(&spec, &CsvHeader::new("abc", "1 V source"));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# scenario_hash: abc");
        assert_eq!(lines[2], "frequency_hz,s11_db,re_zin,im_zin");
        assert_eq!(lines[3], "1000000000.0,-1.0000,10.0000,5.0000");
        assert_eq!(csv_body(&text).lines().count(), 3);
    }

    #[test]
    fn pattern_names() {
        assert_eq!(pattern_file_name("h", 2.45e9), "pattern_h_2.450GHz.csv");
    }
}
