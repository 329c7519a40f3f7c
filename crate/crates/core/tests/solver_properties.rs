use buttonsim_core::fdtd::*;
use buttonsim_core::geometry::*;
use buttonsim_core::grid::GridSpec;
use buttonsim_core::material::Material;
use buttonsim_core::post::{dft, linspace};
use buttonsim_core::validation::dipole_sized;
use buttonsim_core::voxel::*;
use num_complex::Complex64;

/// Two gap-fed short dipoles next to an off-centre lossy block.
fn two_dipoles() -> (MaterialGrid, PortEdges, PortEdges) {
    let mm = 1e-3;
    let mut shapes = Vec::new();
    for (n, x) in [(0, -6.0), (1, 7.0)] {
        for (part, (z0, z1)) in [(-7.0, 0.0), (1.0, 8.0)].into_iter().enumerate() {
            shapes.push(Shape::new(
                &format!("d{n}_{part}"),
                ShapeKind::Wire {
                    start: [x * mm, 0.0, z0 * mm],
                    end: [x * mm, 0.0, z1 * mm],
                    diameter: 0.1 * mm,
                },
                Material::pec(),
                2,
            ));
        }
    }
    shapes.push(Shape::new(
        "block",
        ShapeKind::Box {
            min: [-2.0 * mm, 2.0 * mm, -5.0 * mm],
            max: [4.0 * mm, 6.0 * mm, 3.0 * mm],
        },
        Material::dielectric("block", 6.0, 0.05),
        1,
    ));
    let p1 = PortSpec::new([-6.0 * mm, 0.0, 0.0], [-6.0 * mm, 0.0, mm]);
    let p2 = PortSpec::new([7.0 * mm, 0.0, 0.0], [7.0 * mm, 0.0, mm]);
    let scene = Scene::new(shapes, p1).unwrap();
    let grid = GridSpec::around(&scene.focus, [mm; 3], [8.0 * mm; 6], 8).unwrap();
    let mgrid = voxelize(&scene, &grid, &VoxelOptions::new(4e9)).unwrap();
    let e1 = mgrid.port.clone().unwrap();
    let e2 = resolve_port(&grid, &p2).unwrap();
    (mgrid, e1, e2)
}

fn run(mgrid: &MaterialGrid, ports: [(&PortEdges, bool); 2]) -> TimeSeriesRecord {
    let boundary = BoundarySpec {
        cpml_cells: 8,
        ..BoundarySpec::default()
    };
    let mut setup = SimulationSetup::new(ExcitationSpec::default(), boundary);
    setup.stop = StopCriterion {
        max_steps: 20000,
        energy_floor_db: -70.0,
    };
    for (edges, driven) in ports {
        setup.ports.push(PortDrive {
            edges: edges.clone(),
            impedance: 50.0,
            driven,
        });
    }
    Simulation::new(mgrid, setup).unwrap().run().unwrap()
}

/// Voltage at the passive port per volt of source at the driven one.
fn transfer(rec: &TimeSeriesRecord, f: &[f64]) -> Vec<Complex64> {
    let series = |k: usize| &rec.ports[k];
    let (driven, passive) = if series(0).v_source.iter().any(|&v| v != 0.0) { (0, 1) } else { (1, 0) };
    let vs = dft(&series(driven).v_source, rec.dt, rec.v_offset, f);
    let v = dft(&series(passive).v, rec.dt, rec.v_offset, f);
    v.iter().zip(&vs).map(|(a, b)| a / b).collect()
}

#[test]
fn swapping_ports_preserves_transfer() {
    let (mgrid, e1, e2) = two_dipoles();
    let f = linspace(1.5e9, 6.5e9, 21);
    let forward = transfer(&run(&mgrid, [(&e1, true), (&e2, false)]), &f);
    let backward = transfer(&run(&mgrid, [(&e1, false), (&e2, true)]), &f);
    for ((a, b), fk) in forward.iter().zip(&backward).zip(&f) {
        let err = (a - b).norm() / a.norm();
        assert!(err < 0.01, "{:.2} GHz: {a} vs {b} ({:.3}%)", fk / 1e9, 100.0 * err);
    }
}

/// Resonances of a 24 mm-arm, 6 mm-gap dipole meshed at about λ/20, λ/40 and λ/60.
fn refinement_series() -> Vec<(f64, f64)> {
    [6e-3, 3e-3, 2e-3]
        .into_iter()
        .map(|cell| {
            let r = dipole_sized(24e-3, 6e-3, cell).unwrap();
            let dip = r.main_dip().expect("dipole resonance").f_dip;
            println!("cell {:.1} mm: dip {:.4} GHz", cell * 1e3, dip / 1e9);
            (cell, dip)
        })
        .collect()
}

#[test]
fn dipole_resonance_converges_monotonically_at_first_order() {
    let runs = refinement_series();
    assert!(runs.windows(2).all(|w| w[1].1 > w[0].1), "{runs:?}");
    // f ≈ f0 - kΔ: the slope from the two coarse grids predicts the finest one
    let k = (runs[1].1 - runs[0].1) / (runs[0].0 - runs[1].0);
    let predicted = runs[1].1 + k * (runs[1].0 - runs[2].0);
    assert!((predicted / runs[2].1 - 1.0).abs() < 0.01, "{predicted} vs {}", runs[2].1);
}

#[test]
#[ignore = "known: the Yee wire-tip current extends about half a cell past each end, a 6% shift from λ/20 to λ/40"]
fn dipole_resonance_shift_below_one_percent_from_lambda_20_to_40() {
    let runs = refinement_series();
    let shift = (runs[1].1 / runs[0].1 - 1.0).abs();
    assert!(shift < 0.01, "λ/20 to λ/40 shift {:.2}%", 100.0 * shift);
}
