use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::material::Material;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            _ => Axis::Z,
        }
    }

    /// The two axes orthogonal to `self`, in cyclic order.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    pub fn include_point(&mut self, p: Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] - tol && other.max[a] <= self.max[a] + tol)
    }

    pub fn size(&self) -> Vec3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn expand(&self, by: [f64; 6]) -> Aabb {
        Aabb {
            min: [self.min[0] - by[0], self.min[1] - by[2], self.min[2] - by[4]],
            max: [self.max[0] + by[1], self.max[1] + by[3], self.max[2] + by[5]],
        }
    }
}

/// Cylindrical wrap applied to a shape defined in flat coordinates.
///
/// The stack normal is +z. Points on the plane `z = reference_z` keep their arc
/// length along the wrap direction on a cylinder of `radius` whose axis runs
/// along `axis` (x or y) at height `reference_z - radius`, through `center`
/// on the wrap coordinate. Radial distances from that plane are preserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bend {
    pub radius: f64,
    pub axis: Axis,
    pub reference_z: f64,
    pub center: f64,
}

impl Bend {
    /// Index of the coordinate that wraps around the cylinder.
    pub fn wrap_index(&self) -> usize {
        match self.axis {
            Axis::Y => 0,
            _ => 1,
        }
    }

    pub fn axis_height(&self) -> f64 {
        self.reference_z - self.radius
    }

    pub fn to_world(&self, p: Vec3) -> Vec3 {
        let w = self.wrap_index();
        let theta = (p[w] - self.center) / self.radius;
        let r = self.radius + (p[2] - self.reference_z);
        let mut out = p;
        out[w] = self.center + r * theta.sin();
        out[2] = self.axis_height() + r * theta.cos();
        out
    }

    pub fn to_flat(&self, p: Vec3) -> Vec3 {
        let w = self.wrap_index();
        let du = p[w] - self.center;
        let dz = p[2] - self.axis_height();
        let r = du.hypot(dz);
        let theta = du.atan2(dz);
        let mut out = p;
        out[w] = self.center + self.radius * theta;
        out[2] = self.reference_z + r - self.radius;
        out
    }

    /// Angle subtended by a flat length measured on the reference plane.
    pub fn subtended_angle(&self, length: f64) -> f64 {
        length / self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShapeKind {
    Box {
        min: Vec3,
        max: Vec3,
    },
    /// Solid cylinder; `center` is the middle of the axis segment.
    Cylinder {
        center: Vec3,
        axis: Axis,
        radius: f64,
        length: f64,
    },
    /// Thin cylinder; same parametrisation as `Cylinder`.
    Disc {
        center: Vec3,
        axis: Axis,
        radius: f64,
        thickness: f64,
    },
    Annulus {
        center: Vec3,
        axis: Axis,
        inner: f64,
        outer: f64,
        thickness: f64,
    },
    Wire {
        start: Vec3,
        end: Vec3,
        diameter: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub name: String,
    pub kind: ShapeKind,
    pub material: Material,
    /// Higher priority wins where shapes overlap; ties go to the later shape.
    pub priority: i32,
    pub bend: Option<Bend>,
}

impl Shape {
    pub fn new(name: &str, kind: ShapeKind, material: Material, priority: i32) -> Self {
        Self {
            name: name.to_string(),
            kind,
            material,
            priority,
            bend: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |what: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("shape {}: {what} must be positive, got {v}", self.name)))
            }
        };
        match &self.kind {
            ShapeKind::Box { min, max } => {
                for a in 0..3 {
                    pos("box extent", max[a] - min[a])?;
                }
            }
            ShapeKind::Cylinder { radius, length, .. } => {
                pos("radius", *radius)?;
                pos("length", *length)?;
            }
            ShapeKind::Disc {
                radius, thickness, ..
            } => {
                pos("radius", *radius)?;
                pos("thickness", *thickness)?;
            }
            ShapeKind::Annulus {
                inner,
                outer,
                thickness,
                ..
            } => {
                pos("inner radius", *inner)?;
                pos("outer - inner", outer - inner)?;
                pos("thickness", *thickness)?;
            }
            ShapeKind::Wire {
                start,
                end,
                diameter,
            } => {
                pos("diameter", *diameter)?;
                pos("wire length", dist(*start, *end))?;
            }
            ShapeKind::Sphere { radius, .. } => pos("radius", *radius)?,
        }
        self.material.validate()
    }

    /// Point membership in the shape's own (flat) coordinates.
    pub fn contains_flat(&self, p: Vec3) -> bool {
        match &self.kind {
            ShapeKind::Box { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            ShapeKind::Cylinder {
                center,
                axis,
                radius,
                length,
            } => in_cylinder(p, *center, *axis, 0.0, *radius, *length),
            ShapeKind::Disc {
                center,
                axis,
                radius,
                thickness,
            } => in_cylinder(p, *center, *axis, 0.0, *radius, *thickness),
            ShapeKind::Annulus {
                center,
                axis,
                inner,
                outer,
                thickness,
            } => in_cylinder(p, *center, *axis, *inner, *outer, *thickness),
            ShapeKind::Wire {
                start,
                end,
                diameter,
            } => segment_distance(p, *start, *end) <= 0.5 * diameter,
            ShapeKind::Sphere { center, radius } => dist(p, *center) <= *radius,
        }
    }

    /// Point membership in world coordinates (undoes the bend if any).
    pub fn contains(&self, p: Vec3) -> bool {
        match &self.bend {
            Some(b) => self.contains_flat(b.to_flat(p)),
            None => self.contains_flat(p),
        }
    }

    pub fn flat_bounds(&self) -> Aabb {
        match &self.kind {
            ShapeKind::Box { min, max } => Aabb::new(*min, *max),
            ShapeKind::Cylinder {
                center,
                axis,
                radius,
                length,
            } => cylinder_bounds(*center, *axis, *radius, *length),
            ShapeKind::Disc {
                center,
                axis,
                radius,
                thickness,
            } => cylinder_bounds(*center, *axis, *radius, *thickness),
            ShapeKind::Annulus {
                center,
                axis,
                outer,
                thickness,
                ..
            } => cylinder_bounds(*center, *axis, *outer, *thickness),
            ShapeKind::Wire {
                start,
                end,
                diameter,
            } => {
                // exact bounds of a finite cylinder: pad each axis by r·sqrt(1 - d_a²)
                let len = dist(*start, *end).max(f64::MIN_POSITIVE);
                let mut b = Aabb::empty();
                b.include_point(*start);
                b.include_point(*end);
                let mut pad = [0.0; 6];
                for a in 0..3 {
                    let d = (end[a] - start[a]) / len;
                    let r = 0.5 * diameter * (1.0 - d * d).max(0.0).sqrt();
                    pad[2 * a] = r;
                    pad[2 * a + 1] = r;
                }
                b.expand(pad)
            }
            ShapeKind::Sphere { center, radius } => {
                Aabb::new(center.map(|c| c - radius), center.map(|c| c + radius))
            }
        }
    }

    /// World-space bounds. Bent shapes are bounded by sampling their flat box.
    pub fn bounds(&self) -> Aabb {
        let flat = self.flat_bounds();
        let Some(bend) = &self.bend else {
            return flat;
        };
        let n = 16;
        let mut out = Aabb::empty();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=1 {
                    let t = |a: usize, s: usize| flat.min[a] + (flat.max[a] - flat.min[a]) * s as f64 / n as f64;
                    let p = [t(0, i), t(1, j), if k == 0 { flat.min[2] } else { flat.max[2] }];
                    out.include_point(bend.to_world(p));
                }
            }
        }
        out
    }

    /// The axis along which the shape is thinner than `cell`, if it is a sheet.
    pub fn sheet_axis(&self, cell: [f64; 3]) -> Option<Axis> {
        if matches!(self.kind, ShapeKind::Wire { .. } | ShapeKind::Sphere { .. }) {
            return None;
        }
        let size = self.flat_bounds().size();
        Axis::ALL
            .into_iter()
            .filter(|a| size[a.index()] < cell[a.index()])
            .min_by(|a, b| {
                (size[a.index()] / cell[a.index()])
                    .partial_cmp(&(size[b.index()] / cell[b.index()]))
                    .unwrap()
            })
    }
}

fn in_cylinder(p: Vec3, c: Vec3, axis: Axis, r_in: f64, r_out: f64, len: f64) -> bool {
    let a = axis.index();
    let (u, v) = axis.others();
    if (p[a] - c[a]).abs() > 0.5 * len {
        return false;
    }
    let r2 = (p[u.index()] - c[u.index()]).powi(2) + (p[v.index()] - c[v.index()]).powi(2);
    r2 <= r_out * r_out && r2 >= r_in * r_in
}

fn cylinder_bounds(c: Vec3, axis: Axis, r: f64, len: f64) -> Aabb {
    let mut half = [r; 3];
    half[axis.index()] = 0.5 * len;
    Aabb::new(
        [c[0] - half[0], c[1] - half[1], c[2] - half[2]],
        [c[0] + half[0], c[1] + half[1], c[2] + half[2]],
    )
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bend_round_trip() {
        let b = Bend {
            radius: 0.05,
            axis: Axis::Y,
            reference_z: 0.0,
            center: 0.0,
        };
        for p in [[0.01, 0.02, 0.003], [-0.02, 0.0, 0.0], [0.0, 0.0, 0.007]] {
            let q = b.to_flat(b.to_world(p));
            assert!(dist(p, q) < 1e-12);
        }
        // reference plane keeps the arc length
        let w = b.to_world([0.0225, 0.0, 0.0]);
        assert!((w[0].hypot(w[2] + 0.05) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn subtended_angles() {
        let mut b = Bend {
            radius: 0.05,
            axis: Axis::Y,
            reference_z: 0.0,
            center: 0.0,
        };
        assert!((b.subtended_angle(0.045) - 0.9).abs() < 1e-12);
        b.radius = 0.025;
        assert!((b.subtended_angle(0.045) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn sheet_detection() {
        let s = Shape::new(
            "g",
            ShapeKind::Box {
                min: [0.0, 0.0, 0.0],
                max: [0.045, 0.045, 0.17e-3],
            },
            Material::shieldit(),
            0,
        );
        assert_eq!(s.sheet_axis([1e-3, 1e-3, 0.5e-3]), Some(Axis::Z));
        assert_eq!(s.sheet_axis([1e-4, 1e-4, 1e-4]), None);
    }
}
