use std::f64::consts::PI;

use buttonsim_core::fdtd::*;
use buttonsim_core::grid::GridSpec;
use buttonsim_core::post::*;
use buttonsim_core::validation::{hertzian_fields, surface_from_fields};
use num_complex::Complex64;

/// Port record of a series RLC load driven through 50 Ω, integrated with RK4
/// at half the sample interval so V lands on (n+1)dt and I on (n+½)dt.
fn rlc_record(r: f64, l: f64, c: f64) -> TimeSeriesRecord {
    let exc = ExcitationSpec::default();
    let dt = 1e-12;
    let h = 0.5 * dt;
    let rs = 50.0;
    let deriv = |t: f64, [i, vc]: [f64; 2]| [(exc.value(t) - (rs + r) * i - vc) / l, i / c];
    let mut state = [0.0, 0.0];
    let (mut v, mut cur, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    let mut t = 0.0;
    for _ in 0..2 * 20000 {
        let k1 = deriv(t, state);
        let mid = |k: [f64; 2], f: f64| [state[0] + f * h * k[0], state[1] + f * h * k[1]];
        let k2 = deriv(t + 0.5 * h, mid(k1, 0.5));
        let k3 = deriv(t + 0.5 * h, mid(k2, 0.5));
        let k4 = deriv(t + h, mid(k3, 1.0));
        for q in 0..2 {
            state[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
        t += h;
        let half_steps = (t / h).round() as usize;
        if half_steps % 2 == 1 {
            cur.push(state[0]);
        } else {
            let s = exc.value(t);
            vs.push(s);
            v.push(s - rs * state[0]);
        }
    }
    TimeSeriesRecord {
        dt,
        v_offset: 1.0,
        i_offset: 0.5,
        excitation: exc,
        ports: vec![PortSeries {
            impedance: rs,
            v,
            i: cur,
            v_source: vs,
        }],
        points: Vec::new(),
        volume: Vec::new(),
        surface: None,
        metadata: RunMetadata {
            grid: GridSpec::new([1e-3; 3], [0.0; 3], [1, 1, 1], 0).unwrap(),
            steps: 20000,
            stop_reason: StopReason::MaxSteps,
            dft_stride: 1,
            coefficient_classes: 0,
            notes: vec!["synthetic".into()],
            config_hash: "rlc".into(),
        },
    }
}

#[test]
fn rlc_load_reflection_matches_closed_form() {
    let (r, l, c) = (20.0, 3e-9, 1e-12);
    let rec = rlc_record(r, l, c);
    let sp = port_spectra(&rec, 1e9, 7e9, 121).unwrap();
    let spec = s11(&sp.frequencies, &sp.v, &sp.i, 50.0).unwrap();
    let j = Complex64::new(0.0, 1.0);
    for (f, z) in spec.frequencies.iter().zip(&spec.z_in) {
        let w = 2.0 * PI * f;
        let zl = r + j * w * l + 1.0 / (j * w * c);
        let want = reflection_coefficient(zl, 50.0);
        let got = reflection_coefficient(*z, 50.0);
        let err = (got - want).norm() / want.norm();
        assert!(err < 0.005, "{:.2} GHz: {got} vs {want}", f / 1e9);
    }
}

/// Surface phasors of `n` equal z-directed elements on a ring of radius `rho`,
/// rotated by `alpha` about z.
fn ring_directivity(n: usize, rho: f64, alpha: f64) -> f64 {
    let f = 2.45e9;
    let grid = GridSpec::new([1e-3; 3], [-0.05; 3], [100, 100, 100], 10).unwrap();
    let centres: Vec<[f64; 3]> = (0..n)
        .map(|m| {
            let a = alpha + 2.0 * PI * m as f64 / n as f64;
            [rho * a.cos(), rho * a.sin(), 0.0]
        })
        .collect();
    let surface = surface_from_fields(&grid, [15; 3], [85; 3], f, |r| {
        let mut e = [Complex64::new(0.0, 0.0); 3];
        let mut h = e;
        for c in &centres {
            let (ec, hc) = hertzian_fields(r, *c, Complex64::new(1e-3, 0.0), f);
            for q in 0..3 {
                e[q] += ec[q];
                h[q] += hc[q];
            }
        }
        (e, h)
    });
    far_field(&surface, &grid, f, Complex64::new(1.0, 0.0), None)
        .unwrap()
        .directivity_dbi
}

#[test]
fn ring_directivity_is_rotation_invariant() {
    let base = ring_directivity(6, 20e-3, 0.0);
    for alpha in [0.3, 0.7, 1.9] {
        let d = ring_directivity(6, 20e-3, alpha);
        assert!((d - base).abs() < 0.1, "rotation {alpha}: {d:.3} vs {base:.3} dBi");
    }
}
