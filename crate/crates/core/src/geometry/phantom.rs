//! Body phantoms and the cylindrical bend transform.

use super::scene::Scene;
use super::shape::{Axis, Bend, Shape, ShapeKind};
use crate::error::{ensure_positive, invalid, Result};
use crate::material::{Tissue, TissueTable};

pub const CHEST_SIZE: [f64; 3] = [200e-3, 200e-3, 50e-3];
pub const SKIN_THICKNESS: f64 = 4e-3;
pub const FAT_THICKNESS: f64 = 8e-3;
pub const MUSCLE_THICKNESS: f64 = 30e-3;
pub const ARM_RADIUS: f64 = 50e-3;
pub const ARM_LENGTH: f64 = 150e-3;

/// Tissue shapes sit below every antenna part in priority.
const TISSUE_PRIORITY: i32 = -10;

fn check_gap(gap: f64) -> Result<()> {
    if gap.is_finite() && gap >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("phantom gap must be non-negative, got {gap}")))
    }
}

/// Places a flat skin/fat/muscle slab under the antenna, `gap` below its lowest point.
///
/// The slab allocation is 200×200×50 mm³ while the layers sum to 42 mm; the
/// muscle layer is extended downwards to fill the allocation and the scene
/// notes record it.
pub fn build_chest_phantom(antenna: &Scene, gap: f64, tissues: &TissueTable, f_ref: f64) -> Result<Scene> {
    check_gap(gap)?;
    let ab = antenna.bounding_box;
    let cx = 0.5 * (ab.min[0] + ab.max[0]);
    let cy = 0.5 * (ab.min[1] + ab.max[1]);
    let top = ab.min[2] - gap;
    let (hx, hy) = (0.5 * CHEST_SIZE[0], 0.5 * CHEST_SIZE[1]);
    let layer = |name: &str, z0: f64, z1: f64, tissue: Tissue| -> Result<Shape> {
        Ok(Shape::new(
            name,
            ShapeKind::Box {
                min: [cx - hx, cy - hy, z0],
                max: [cx + hx, cy + hy, z1],
            },
            tissues.material(tissue, f_ref)?,
            TISSUE_PRIORITY,
        ))
    };
    let bottom = top - CHEST_SIZE[2];
    let mut scene = antenna.clone();
    scene.shapes.push(layer("skin", top - SKIN_THICKNESS, top, Tissue::Skin)?);
    scene
        .shapes
        .push(layer("fat", top - SKIN_THICKNESS - FAT_THICKNESS, top - SKIN_THICKNESS, Tissue::Fat)?);
    scene
        .shapes
        .push(layer("muscle", bottom, top - SKIN_THICKNESS - FAT_THICKNESS, Tissue::Muscle)?);
    let extension = CHEST_SIZE[2] - SKIN_THICKNESS - FAT_THICKNESS - MUSCLE_THICKNESS;
    scene.notes.push(format!(
        "chest phantom {:.0}x{:.0}x{:.0} mm, gap {:.2} mm; layers skin 4 / fat 8 / muscle 30 mm, muscle extended by {:.0} mm to fill the slab",
        CHEST_SIZE[0] * 1e3,
        CHEST_SIZE[1] * 1e3,
        CHEST_SIZE[2] * 1e3,
        gap * 1e3,
        extension * 1e3
    ));
    scene.refresh_bounds();
    scene.validate()?;
    Ok(scene)
}

/// Wraps the antenna onto a muscle cylinder (radius 50 mm, length 150 mm, axis along y).
///
/// The antenna is bent with radius `ARM_RADIUS + gap` so its lowest face stays
/// `gap` above the arm surface.
pub fn build_arm_phantom(antenna: &Scene, gap: f64, tissues: &TissueTable, f_ref: f64) -> Result<Scene> {
    check_gap(gap)?;
    let radius = ARM_RADIUS + gap;
    let mut scene = bend_scene(antenna, radius, Axis::Y)?;
    let bend = scene.bend().expect("bent scene carries a bend");
    let ab = antenna.bounding_box;
    let cy = 0.5 * (ab.min[1] + ab.max[1]);
    scene.shapes.push(Shape::new(
        "arm",
        ShapeKind::Cylinder {
            center: [bend.center, cy, bend.axis_height()],
            axis: Axis::Y,
            radius: ARM_RADIUS,
            length: ARM_LENGTH,
        },
        tissues.material(Tissue::Muscle, f_ref)?,
        TISSUE_PRIORITY,
    ));
    scene.notes.push(format!(
        "arm phantom: muscle cylinder r={:.0} mm, L={:.0} mm, gap {:.2} mm, bend radius {:.2} mm",
        ARM_RADIUS * 1e3,
        ARM_LENGTH * 1e3,
        gap * 1e3,
        radius * 1e3
    ));
    scene.refresh_bounds();
    scene.validate()?;
    Ok(scene)
}

/// Wraps every flat shape of `scene` around a cylinder of radius `radius`
/// whose axis runs along `axis` (x or y) below the scene.
///
/// The lowest face of the scene is the reference surface: it keeps its arc
/// length, and layer thicknesses are preserved radially. The port segment is
/// mapped point-wise.
pub fn bend_scene(scene: &Scene, radius: f64, axis: Axis) -> Result<Scene> {
    ensure_positive("bend radius", radius)?;
    if axis == Axis::Z {
        return Err(invalid("bend axis must be x or y"));
    }
    if scene.bend().is_some() {
        return Err(invalid("scene is already bent"));
    }
    let b = scene.bounding_box;
    let thickness = b.max[2] - b.min[2];
    if radius <= thickness {
        return Err(invalid(format!(
            "bend radius {radius} m must exceed the stack thickness {thickness} m"
        )));
    }
    let mut bend = Bend {
        radius,
        axis,
        reference_z: b.min[2],
        center: 0.0,
    };
    let w = bend.wrap_index();
    bend.center = 0.5 * (b.min[w] + b.max[w]);

    let mut out = scene.clone();
    for s in &mut out.shapes {
        s.bend = Some(bend);
    }
    out.port.start = bend.to_world(scene.port.start);
    out.port.end = bend.to_world(scene.port.end);
    out.refresh_bounds();
    out.focus = out.bounding_box;
    out.notes.push(format!(
        "bent around {:?} with radius {:.2} mm",
        axis,
        radius * 1e3
    ));
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_button_stackup, StackupParams};

    fn button() -> Scene {
        build_button_stackup(&StackupParams::default()).unwrap()
    }

    fn box_of(s: &Scene, name: &str) -> ([f64; 3], [f64; 3]) {
        match s.shape(name).unwrap().kind {
            ShapeKind::Box { min, max } => (min, max),
            _ => panic!(),
        }
    }

    #[test]
    fn chest_slab_dimensions() {
        let s = build_chest_phantom(&button(), 5e-3, &TissueTable::default(), 2.45e9).unwrap();
        let (skin_min, skin_max) = box_of(&s, "skin");
        let (mus_min, _) = box_of(&s, "muscle");
        assert!((skin_max[0] - skin_min[0] - 0.2).abs() < 1e-12);
        assert!((skin_max[1] - skin_min[1] - 0.2).abs() < 1e-12);
        assert!((skin_max[2] - mus_min[2] - 0.05).abs() < 1e-12);
        assert!((skin_max[2] + 5e-3).abs() < 1e-12);
        let (fat_min, fat_max) = box_of(&s, "fat");
        assert!((skin_max[2] - skin_min[2] - 4e-3).abs() < 1e-12);
        assert!((fat_max[2] - fat_min[2] - 8e-3).abs() < 1e-12);
        assert!(s.focus.min[2] > -1e-12, "focus stays on the antenna");
    }

    #[test]
    fn chest_muscle_properties() {
        let s = build_chest_phantom(&button(), 5e-3, &TissueTable::default(), 2.4e9).unwrap();
        let m = &s.shape("muscle").unwrap().material;
        assert_eq!(m.eps_r, 52.7);
        assert_eq!(m.loss, crate::material::Loss::Sigma(1.95));
    }

    #[test]
    fn chest_contact() {
        let s = build_chest_phantom(&button(), 0.0, &TissueTable::default(), 2.45e9).unwrap();
        let (_, skin_max) = box_of(&s, "skin");
        assert_eq!(skin_max[2], 0.0);
        assert!(build_chest_phantom(&button(), -1e-3, &TissueTable::default(), 2.45e9).is_err());
    }

    #[test]
    fn arm_cylinder_and_bend_radius() {
        let s = build_arm_phantom(&button(), 5e-3, &TissueTable::default(), 2.45e9).unwrap();
        match s.shape("arm").unwrap().kind {
            ShapeKind::Cylinder { radius, length, .. } => {
                assert_eq!(radius, 0.05);
                assert_eq!(length, 0.15);
            }
            _ => panic!(),
        }
        assert!((s.bend().unwrap().radius - 0.055).abs() < 1e-12);
        let s0 = build_arm_phantom(&button(), 0.0, &TissueTable::default(), 2.45e9).unwrap();
        assert_eq!(s0.bend().unwrap().radius, 0.05);
    }

    #[test]
    fn bend_rejects_tight_radius() {
        assert!(bend_scene(&button(), 5e-3, Axis::Y).is_err());
        assert!(bend_scene(&button(), 0.0, Axis::Y).is_err());
        assert!(bend_scene(&button(), 0.05, Axis::Z).is_err());
    }

    #[test]
    fn ground_subtends_arc_angle() {
        let s = bend_scene(&button(), 0.05, Axis::Y).unwrap();
        let b = s.bend().unwrap();
        assert!((b.subtended_angle(45e-3) - 0.9).abs() < 1e-12);
        // the ground's far corner sits on the reference circle at ±0.45 rad
        let corner = b.to_world([0.0225, 0.0, 0.0]);
        let angle = corner[0].atan2(corner[2] - b.axis_height());
        assert!((angle - 0.45).abs() < 1e-12);
    }
}
