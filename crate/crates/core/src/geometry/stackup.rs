//! Parametric button-antenna stack-up.
//!
//! Bottom-up: conductive-textile ground sheet, felt spacer, air gap, Rogers
//! PCB. The PCB carries a probe-fed patch on its lower face and a smaller
//! capacitive patch on its upper face; a shorting via runs from the ground
//! through both patches. Slot and staircase cuts are optional parameters with
//! documented defaults, since their exact dimensions are not known.

use serde::{Deserialize, Serialize};

use super::scene::{PortSpec, Scene};
use super::shape::{Axis, Shape, ShapeKind};
use crate::error::{Error, Result};
use crate::material::Material;

/// Metallisation thickness used for PCB copper.
pub const COPPER_THICKNESS: f64 = 35e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackupParams {
    pub ground_size: f64,
    pub ground_thickness: f64,
    pub ground_sigma: f64,
    pub felt_thickness: f64,
    pub felt_eps_r: f64,
    pub felt_tan_delta: f64,
    pub air_gap: f64,
    pub substrate_thickness: f64,
    pub substrate_radius: f64,
    pub substrate_eps_r: f64,
    pub substrate_tan_delta: f64,
    /// Radius of the capacitive patch on the upper PCB face.
    pub patch_radius: f64,
    /// Centre offset (x, y) of the capacitive patch from the stack axis.
    pub top_patch_offset: [f64; 2],
    /// Radius of the probe-fed patch on the lower PCB face.
    pub bottom_patch_radius: f64,
    /// Radial offset of the probe from the stack axis.
    pub feed_offset: f64,
    /// Direction of the feed offset, degrees from +x.
    pub feed_angle_deg: f64,
    pub probe_diameter: f64,
    pub shorting_via: bool,
    pub via_diameter: f64,
    /// Via position (x, y).
    pub via_position: [f64; 2],
    /// Rectangular slot in the bottom patch: length along x, width along y,
    /// centred at `slot_offset`. A zero length disables it.
    pub slot_length: f64,
    pub slot_width: f64,
    pub slot_offset: [f64; 2],
    /// Staircase notch cut into the bottom-patch rim on the -x side:
    /// `stair_steps` rectangles, each `stair_step` deep and wide.
    pub stair_steps: u32,
    pub stair_step: f64,
    /// Height of the lumped gap at the bottom of the probe.
    pub port_gap: f64,
    pub port_impedance: f64,
}

impl Default for StackupParams {
    fn default() -> Self {
        Self {
            ground_size: 45e-3,
            ground_thickness: 0.17e-3,
            ground_sigma: 1.18e5,
            felt_thickness: 1.50e-3,
            felt_eps_r: 1.4,
            felt_tan_delta: 0.044,
            air_gap: 3.76e-3,
            substrate_thickness: 1.574e-3,
            substrate_radius: 22.5e-3,
            substrate_eps_r: 2.2,
            substrate_tan_delta: 0.0009,
            patch_radius: 8e-3,
            top_patch_offset: [0.0, 0.0],
            bottom_patch_radius: 11e-3,
            feed_offset: 9e-3,
            feed_angle_deg: 0.0,
            probe_diameter: 1.27e-3,
            shorting_via: true,
            via_diameter: 1.22e-3,
            via_position: [-7e-3, 0.0],
            slot_length: 0.0,
            slot_width: 0.0,
            slot_offset: [0.0, 0.0],
            stair_steps: 0,
            stair_step: 1e-3,
            port_gap: 0.5e-3,
            port_impedance: 50.0,
        }
    }
}

impl StackupParams {
    pub fn stack_height(&self) -> f64 {
        self.ground_thickness + self.felt_thickness + self.air_gap + self.substrate_thickness
    }

    /// z of the lower PCB face (bottom patch plane).
    pub fn bottom_patch_z(&self) -> f64 {
        self.ground_thickness + self.felt_thickness + self.air_gap
    }

    pub fn feed_position(&self) -> [f64; 2] {
        let a = self.feed_angle_deg.to_radians();
        [self.feed_offset * a.cos(), self.feed_offset * a.sin()]
    }

    fn check(&self) -> Result<()> {
        let conflict = |m: String| Err(Error::GeometryConflict(m));
        let lengths = [
            ("ground_size", self.ground_size),
            ("ground_thickness", self.ground_thickness),
            ("felt_thickness", self.felt_thickness),
            ("air_gap", self.air_gap),
            ("substrate_thickness", self.substrate_thickness),
            ("substrate_radius", self.substrate_radius),
            ("patch_radius", self.patch_radius),
            ("bottom_patch_radius", self.bottom_patch_radius),
            ("probe_diameter", self.probe_diameter),
            ("via_diameter", self.via_diameter),
            ("port_gap", self.port_gap),
            ("port_impedance", self.port_impedance),
            ("felt_eps_r", self.felt_eps_r),
            ("substrate_eps_r", self.substrate_eps_r),
            ("ground_sigma", self.ground_sigma),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.feed_offset < 0.0 || self.slot_length < 0.0 || self.slot_width < 0.0 || self.stair_step <= 0.0 {
            return Err(crate::error::invalid("negative feed offset, slot or stair size"));
        }
        if self.substrate_thickness <= 2.0 * COPPER_THICKNESS {
            return conflict("substrate thinner than its two copper layers".into());
        }
        if self.port_gap >= self.felt_thickness + self.air_gap {
            return conflict("port gap reaches the bottom patch".into());
        }
        if self.bottom_patch_radius > self.substrate_radius || self.patch_radius > self.substrate_radius {
            return conflict("patch larger than the PCB".into());
        }
        if self.substrate_radius > 0.5 * self.ground_size * 2f64.sqrt() {
            return conflict("PCB overhangs the ground corners".into());
        }
        let f = self.feed_position();
        if f[0].hypot(f[1]) + 0.5 * self.probe_diameter > self.bottom_patch_radius {
            return conflict("feed probe lies outside the bottom patch".into());
        }
        if self.shorting_via {
            let v = self.via_position;
            let d = (v[0] - f[0]).hypot(v[1] - f[1]);
            if d < 0.5 * (self.via_diameter + self.probe_diameter) {
                return conflict(format!("shorting via overlaps the feed probe (centre distance {d:.2e} m)"));
            }
            let to_top = (v[0] - self.top_patch_offset[0]).hypot(v[1] - self.top_patch_offset[1]);
            if to_top + 0.5 * self.via_diameter > self.patch_radius
                || v[0].hypot(v[1]) + 0.5 * self.via_diameter > self.bottom_patch_radius
            {
                return conflict("shorting via misses a patch".into());
            }
        }
        Ok(())
    }
}

/// Builds the antenna scene, bottom-up, with the ground centred on the origin
/// and its lower face at z = 0.
pub fn build_button_stackup(p: &StackupParams) -> Result<Scene> {
    p.check()?;
    let half = 0.5 * p.ground_size;
    let z_felt = p.ground_thickness;
    let z_air = z_felt + p.felt_thickness;
    let z_pcb = z_air + p.air_gap;
    let z_top = z_pcb + p.substrate_thickness;

    let mut shapes = Vec::new();
    let mut ground = Material::shieldit();
    ground.loss = crate::material::Loss::Sigma(p.ground_sigma);
    shapes.push(Shape::new(
        "ground",
        ShapeKind::Box {
            min: [-half, -half, 0.0],
            max: [half, half, z_felt],
        },
        ground,
        10,
    ));
    shapes.push(Shape::new(
        "felt",
        ShapeKind::Box {
            min: [-half, -half, z_felt],
            max: [half, half, z_air],
        },
        Material::dielectric("felt", p.felt_eps_r, p.felt_tan_delta),
        1,
    ));
    shapes.push(Shape::new(
        "substrate",
        ShapeKind::Disc {
            center: [0.0, 0.0, z_pcb + 0.5 * p.substrate_thickness],
            axis: Axis::Z,
            radius: p.substrate_radius,
            thickness: p.substrate_thickness,
        },
        Material::dielectric("rogers_5880", p.substrate_eps_r, p.substrate_tan_delta),
        1,
    ));
    shapes.push(Shape::new(
        "bottom_patch",
        ShapeKind::Disc {
            center: [0.0, 0.0, z_pcb + 0.5 * COPPER_THICKNESS],
            axis: Axis::Z,
            radius: p.bottom_patch_radius,
            thickness: COPPER_THICKNESS,
        },
        Material::copper(),
        10,
    ));
    if p.slot_length > 0.0 && p.slot_width > 0.0 {
        let c = p.slot_offset;
        shapes.push(Shape::new(
            "slot",
            ShapeKind::Box {
                min: [c[0] - 0.5 * p.slot_length, c[1] - 0.5 * p.slot_width, z_pcb],
                max: [c[0] + 0.5 * p.slot_length, c[1] + 0.5 * p.slot_width, z_pcb + COPPER_THICKNESS],
            },
            Material::dielectric("slot", p.substrate_eps_r, p.substrate_tan_delta),
            11,
        ));
    }
    for s in 0..p.stair_steps {
        // step s removes a strip reaching (s+1) steps in from the rim
        let depth = (s + 1) as f64 * p.stair_step;
        let y0 = s as f64 * p.stair_step;
        let r = p.bottom_patch_radius;
        shapes.push(Shape::new(
            &format!("stair_{s}"),
            ShapeKind::Box {
                min: [-r, y0, z_pcb],
                max: [-r + depth, y0 + p.stair_step, z_pcb + COPPER_THICKNESS],
            },
            Material::dielectric("stair", p.substrate_eps_r, p.substrate_tan_delta),
            11,
        ));
    }
    let t = p.top_patch_offset;
    shapes.push(Shape::new(
        "top_patch",
        ShapeKind::Disc {
            center: [t[0], t[1], z_top - 0.5 * COPPER_THICKNESS],
            axis: Axis::Z,
            radius: p.patch_radius,
            thickness: COPPER_THICKNESS,
        },
        Material::copper(),
        10,
    ));

    let f = p.feed_position();
    let port_top = z_felt + p.port_gap;
    shapes.push(Shape::new(
        "probe",
        ShapeKind::Wire {
            start: [f[0], f[1], port_top],
            end: [f[0], f[1], z_pcb],
            diameter: p.probe_diameter,
        },
        Material::copper(),
        12,
    ));
    if p.shorting_via {
        let v = p.via_position;
        shapes.push(Shape::new(
            "shorting_via",
            ShapeKind::Wire {
                start: [v[0], v[1], z_felt],
                end: [v[0], v[1], z_top],
                diameter: p.via_diameter,
            },
            Material::copper(),
            12,
        ));
    }

    let mut port = PortSpec::new([f[0], f[1], z_felt], [f[0], f[1], port_top]);
    port.impedance = p.port_impedance;
    let mut scene = Scene::new(shapes, port)?;
    scene.notes.push(format!(
        "button stack: height {:.3} mm, patch radius {:.2} mm, feed offset {:.2} mm",
        p.stack_height() * 1e3,
        p.patch_radius * 1e3,
        p.feed_offset * 1e3
    ));
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_height() {
        let p = StackupParams::default();
        let s = build_button_stackup(&p).unwrap();
        assert!((p.stack_height() - 7.004e-3).abs() < 1e-12);
        let h = s.bounding_box.max[2] - s.bounding_box.min[2];
        assert!((h - 7.004e-3).abs() < 1e-9, "{h}");
    }

    #[test]
    fn default_patch_radius() {
        let s = build_button_stackup(&StackupParams::default()).unwrap();
        match s.shape("top_patch").unwrap().kind {
            ShapeKind::Disc { radius, .. } => assert_eq!(radius, 8e-3),
            _ => panic!(),
        }
    }

    #[test]
    fn centred_feed_without_via() {
        let p = StackupParams {
            feed_offset: 0.0,
            shorting_via: false,
            ..Default::default()
        };
        let s = build_button_stackup(&p).unwrap();
        assert_eq!(s.port.start[0], 0.0);
        assert_eq!(s.port.start[1], 0.0);
        assert!(s.shape("shorting_via").is_none());
    }

    #[test]
    fn conflicts_are_reported() {
        let p = StackupParams {
            bottom_patch_radius: 30e-3,
            ..Default::default()
        };
        assert!(matches!(build_button_stackup(&p), Err(Error::GeometryConflict(_))));
        let p = StackupParams {
            feed_offset: 7e-3,
            feed_angle_deg: 180.0,
            ..Default::default()
        };
        assert!(matches!(build_button_stackup(&p), Err(Error::GeometryConflict(_))));
        let p = StackupParams {
            substrate_thickness: 50e-6,
            ..Default::default()
        };
        assert!(matches!(build_button_stackup(&p), Err(Error::GeometryConflict(_))));
    }
}
