//! Port spectra, reflection coefficient and resonance detection.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fdtd::{TimeSeriesRecord, BANDWIDTH_LEVEL_DB};

pub const S11_FLOOR_DB: f64 = -80.0;
/// Current magnitudes below this fraction of the band maximum are treated as zero.
const CURRENT_FLOOR: f64 = 1e-12;

/// Continuous-time Fourier transform approximated by the rectangle rule:
/// `X(f) = Σ x[n]·exp(-j2πf(n + offset)dt)·dt`.
pub fn dft(samples: &[f64], dt: f64, offset: f64, frequencies: &[f64]) -> Vec<Complex64> {
    frequencies
        .iter()
        .map(|&f| {
            let w = -2.0 * std::f64::consts::PI * f * dt;
            let step = Complex64::from_polar(1.0, w);
            let mut rot = Complex64::from_polar(1.0, w * offset);
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &x) in samples.iter().enumerate() {
                acc += rot * x;
                rot *= step;
                // renormalise occasionally to stop the rotor drifting
                if n % 1024 == 1023 {
                    rot /= rot.norm();
                }
            }
            acc * dt
        })
        .collect()
}

/// Peak amplitude of a steady tone at `f` spanning the whole record.
pub fn tone_amplitude(samples: &[f64], dt: f64, f: f64) -> f64 {
    let x = dft(samples, dt, 0.0, &[f])[0];
    2.0 * x.norm() / (samples.len() as f64 * dt)
}

/// `n` uniformly spaced frequencies from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortSpectra {
    pub frequencies: Vec<f64>,
    pub v: Vec<Complex64>,
    pub i: Vec<Complex64>,
    pub v_source: Vec<Complex64>,
}

/// Spectra of the driven port of `rec` over `f_min..=f_max`.
pub fn port_spectra(rec: &TimeSeriesRecord, f_min: f64, f_max: f64, n_points: usize) -> Result<PortSpectra> {
    port_spectra_of(rec, 0, f_min, f_max, n_points)
}

/// Spectra of port `index` (0 is the driven port).
pub fn port_spectra_of(rec: &TimeSeriesRecord, index: usize, f_min: f64, f_max: f64, n_points: usize) -> Result<PortSpectra> {
    if !(f_min > 0.0 && f_max >= f_min) || n_points == 0 {
        return Err(invalid("band must satisfy 0 < f_min <= f_max with at least one point"));
    }
    let port = rec
        .ports
        .get(index)
        .ok_or_else(|| invalid(format!("record has no port {index}")))?;
    if port.v.is_empty() || port.v.len() != port.i.len() {
        return Err(invalid("port series are empty or of unequal length"));
    }
    for f in [f_min, f_max] {
        let level = rec.excitation.relative_level_db(f);
        if level < BANDWIDTH_LEVEL_DB - 1e-6 {
            return Err(Error::InsufficientExcitation(format!(
                "{:.3} GHz lies {:.1} dB below the excitation peak, outside its {} dB support",
                f / 1e9,
                -level,
                BANDWIDTH_LEVEL_DB
            )));
        }
    }
    let frequencies = linspace(f_min, f_max, n_points);
    let v_source = match rec.ports.first() {
        Some(p) => dft(&p.v_source, rec.dt, rec.v_offset, &frequencies),
        None => vec![Complex64::new(0.0, 0.0); n_points],
    };
    Ok(PortSpectra {
        v: dft(&port.v, rec.dt, rec.v_offset, &frequencies),
        i: dft(&port.i, rec.dt, rec.i_offset, &frequencies),
        v_source,
        frequencies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S11Spectrum {
    pub frequencies: Vec<f64>,
    pub s11_db: Vec<f64>,
    pub z_in: Vec<Complex64>,
    pub z0: f64,
    /// Indices where the port current vanished and the impedance is undefined.
    pub undefined: Vec<usize>,
    /// Indices where |Γ| exceeds 1 by more than 0.1 dB (non-passive result).
    pub passivity_violations: Vec<usize>,
}

pub fn reflection_coefficient(z: Complex64, z0: f64) -> Complex64 {
    (z - z0) / (z + z0)
}

fn to_db(gamma_abs: f64) -> f64 {
    if gamma_abs > 0.0 {
        (20.0 * gamma_abs.log10()).max(S11_FLOOR_DB)
    } else {
        S11_FLOOR_DB
    }
}

/// Reflection spectrum from port voltage and current spectra.
pub fn s11(frequencies: &[f64], v: &[Complex64], i: &[Complex64], z0: f64) -> Result<S11Spectrum> {
    if !(z0 > 0.0) {
        return Err(invalid("reference impedance must be positive"));
    }
    if v.len() != frequencies.len() || i.len() != frequencies.len() {
        return Err(invalid("spectra and frequency list differ in length"));
    }
    let i_max = i.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut out = S11Spectrum {
        frequencies: frequencies.to_vec(),
        s11_db: Vec::with_capacity(v.len()),
        z_in: Vec::with_capacity(v.len()),
        z0,
        undefined: Vec::new(),
        passivity_violations: Vec::new(),
    };
    for (k, (&vk, &ik)) in v.iter().zip(i).enumerate() {
        if ik.norm() <= CURRENT_FLOOR * i_max || ik.norm() == 0.0 {
            out.undefined.push(k);
            out.z_in.push(Complex64::new(f64::INFINITY, 0.0));
            out.s11_db.push(0.0);
            continue;
        }
        let z = vk / ik;
        let db = to_db(reflection_coefficient(z, z0).norm());
        if db > 0.1 {
            out.passivity_violations.push(k);
        }
        out.z_in.push(z);
        out.s11_db.push(db);
    }
    Ok(out)
}

/// S11 in dB for a single load impedance; an infinite load gives 0 dB.
pub fn s11_db_for_load(z: Complex64, z0: f64) -> f64 {
    if !z.re.is_finite() || !z.im.is_finite() {
        return 0.0;
    }
    to_db(reflection_coefficient(z, z0).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resonance {
    pub f_dip: f64,
    pub depth_db: f64,
    /// Band edges where the response crosses the threshold (interpolated).
    pub band_edges: (f64, f64),
}

impl Resonance {
    pub fn bandwidth(&self) -> f64 {
        self.band_edges.1 - self.band_edges.0
    }
}

/// Dips below `threshold_db`: one entry per contiguous run of samples below the
/// threshold, located at its deepest sample, sorted by frequency.
pub fn find_resonances(spec: &S11Spectrum, threshold_db: f64) -> Vec<Resonance> {
    let f = &spec.frequencies;
    let s = &spec.s11_db;
    let n = s.len().min(f.len());
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        if s[k] >= threshold_db {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && s[k] < threshold_db {
            k += 1;
        }
        let end = k - 1;
        let mut best = start;
        for q in start..=end {
            if s[q] < s[best] {
                best = q;
            }
        }
        let cross = |a: usize, b: usize| {
            let t = (threshold_db - s[a]) / (s[b] - s[a]);
            f[a] + t * (f[b] - f[a])
        };
        let lo = if start > 0 { cross(start - 1, start) } else { f[0] };
        let hi = if end + 1 < n { cross(end, end + 1) } else { f[n - 1] };
        out.push(Resonance {
            f_dip: f[best],
            depth_db: s[best],
            band_edges: (lo, hi),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sinusoid_amplitude() {
        let (f0, dt): (f64, f64) = (2.45e9, 1e-12);
        let n = (40.0 / (f0 * dt)).round() as usize;
        let x: Vec<f64> = (0..n).map(|k| 3.0 * (2.0 * PI * f0 * k as f64 * dt + 0.3).sin()).collect();
        let a = tone_amplitude(&x, dt, f0);
        assert!((a / 3.0 - 1.0).abs() < 1e-3, "{a}");
    }

    #[test]
    fn shift_keeps_magnitude() {
        let dt = 1e-12;
        let pulse = |t: f64| (-((t - 1e-9) / 2e-10).powi(2)).exp();
        let a: Vec<f64> = (0..4000).map(|k| pulse(k as f64 * dt)).collect();
        let b: Vec<f64> = (0..4000).map(|k| pulse(k as f64 * dt - 0.37e-9)).collect();
        let fs = linspace(0.5e9, 3e9, 11);
        for (x, y) in dft(&a, dt, 0.0, &fs).iter().zip(dft(&b, dt, 0.0, &fs)) {
            assert!((x.norm() - y.norm()).abs() < 1e-9 * x.norm().max(1e-30));
        }
    }

    #[test]
    fn two_tones() {
        let (f1, f2, dt) = (2.45e9, 5.6e9, 1e-12);
        // window holds integer periods of both tones
        let n = 100_000;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                1.5 * (2.0 * PI * f1 * t).cos() + 0.7 * (2.0 * PI * f2 * t).sin()
            })
            .collect();
        assert!((tone_amplitude(&x, dt, f1) / 1.5 - 1.0).abs() < 5e-3);
        assert!((tone_amplitude(&x, dt, f2) / 0.7 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(s11_db_for_load(Complex64::new(50.0, 0.0), 50.0), S11_FLOOR_DB);
        assert_eq!(s11_db_for_load(Complex64::new(f64::INFINITY, 0.0), 50.0), 0.0);
        assert!((s11_db_for_load(Complex64::new(1e12, 0.0), 50.0)).abs() < 1e-6);
        let d = s11_db_for_load(Complex64::new(100.0, 0.0), 50.0);
        assert!((d + 9.542).abs() < 1e-3, "{d}");
    }

    #[test]
    fn zero_current_is_reported() {
        let f = [1e9, 2e9];
        let v = [Complex64::new(1.0, 0.0); 2];
        let i = [Complex64::new(0.02, 0.0), Complex64::new(0.0, 0.0)];
        let s = s11(&f, &v, &i, 50.0).unwrap();
        assert_eq!(s.undefined, vec![1]);
        assert!(s.s11_db[0] <= S11_FLOOR_DB);
    }

    fn spectrum(fs: &[f64], f: impl Fn(f64) -> f64) -> S11Spectrum {
        S11Spectrum {
            frequencies: fs.to_vec(),
            s11_db: fs.iter().map(|&x| f(x)).collect(),
            z_in: vec![Complex64::new(50.0, 0.0); fs.len()],
            z0: 50.0,
            undefined: vec![],
            passivity_violations: vec![],
        }
    }

    #[test]
    fn flat_has_no_dips() {
        let fs = linspace(1e9, 7e9, 601);
        assert!(find_resonances(&spectrum(&fs, |_| 0.0), -10.0).is_empty());
    }

    #[test]
    fn two_dips_in_order() {
        let fs = linspace(1e9, 7e9, 601);
        let lor = |f: f64, f0: f64, w: f64, d: f64| d / (1.0 + ((f - f0) / w).powi(2));
        let s = spectrum(&fs, |f| lor(f, 5.6e9, 0.2e9, -25.0) + lor(f, 2.45e9, 0.1e9, -20.0));
        let r = find_resonances(&s, -10.0);
        assert_eq!(r.len(), 2);
        assert!((r[0].f_dip - 2.45e9).abs() < 1.5e7);
        assert!((r[1].f_dip - 5.6e9).abs() < 1.5e7);
        // -10 dB edges of a -20 dB Lorentzian of half-width w are at f0 ± w
        assert!((r[0].band_edges.0 - 2.35e9).abs() < 5e6, "{:?}", r[0]);
        assert!((r[0].band_edges.1 - 2.55e9).abs() < 5e6);
    }
}
