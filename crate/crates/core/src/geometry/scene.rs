use serde::{Deserialize, Serialize};

use super::shape::{dist, Aabb, Bend, Shape, Vec3};
use crate::error::{ensure_positive, invalid, Result};
use crate::fdtd::ExcitationSpec;
use crate::material::Material;

/// Lumped feed: a segment that must resolve to a straight chain of grid edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    pub start: Vec3,
    pub end: Vec3,
    /// Reference (source) resistance in ohms.
    pub impedance: f64,
    pub excitation: ExcitationSpec,
}

impl PortSpec {
    pub fn new(start: Vec3, end: Vec3) -> Self {
        Self {
            start,
            end,
            impedance: 50.0,
            excitation: ExcitationSpec::default(),
        }
    }

    pub fn midpoint(&self) -> Vec3 {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
            0.5 * (self.start[2] + self.end[2]),
        ]
    }

    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("port impedance", self.impedance)?;
        ensure_positive("port length", self.length())?;
        self.excitation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub shapes: Vec<Shape>,
    pub port: PortSpec,
    pub background: Material,
    pub bounding_box: Aabb,
    /// Region the computational domain is built around. Shapes outside it are
    /// clipped by the domain and continue into the absorbing layer.
    pub focus: Aabb,
    /// Free-form notes propagated into output metadata.
    pub notes: Vec<String>,
}

impl Scene {
    pub fn new(shapes: Vec<Shape>, port: PortSpec) -> Result<Self> {
        let bounds = shapes_bounds(&shapes);
        let mut scene = Self {
            shapes,
            port,
            background: Material::vacuum(),
            bounding_box: bounds,
            focus: bounds,
            notes: Vec::new(),
        };
        scene.refresh_bounds();
        scene.validate()?;
        Ok(scene)
    }

    pub fn refresh_bounds(&mut self) {
        let mut b = shapes_bounds(&self.shapes);
        b.include_point(self.port.start);
        b.include_point(self.port.end);
        self.bounding_box = b;
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.shapes {
            s.validate()?;
        }
        self.port.validate()?;
        let tol = 1e-9;
        for p in [self.port.start, self.port.end] {
            if !self.bounding_box.expand([tol; 6]).contains(p) {
                return Err(invalid("port lies outside the scene bounding box"));
            }
        }
        for s in &self.shapes {
            if !self.bounding_box.contains_box(&s.bounds(), 1e-9) {
                return Err(invalid(format!("shape {} exceeds the bounding box", s.name)));
            }
        }
        Ok(())
    }

    pub fn shape(&self, name: &str) -> Option<&Shape> {
        self.shapes.iter().find(|s| s.name == name)
    }

    /// Bounding box of the shapes carrying `bend` (or all unbent shapes if `None`).
    pub fn bounds_of(&self, pred: impl Fn(&Shape) -> bool) -> Aabb {
        self.shapes
            .iter()
            .filter(|s| pred(s))
            .fold(Aabb::empty(), |acc, s| acc.union(&s.bounds()))
    }

    pub fn bend(&self) -> Option<Bend> {
        self.shapes.iter().find_map(|s| s.bend)
    }
}

fn shapes_bounds(shapes: &[Shape]) -> Aabb {
    shapes.iter().fold(Aabb::empty(), |acc, s| acc.union(&s.bounds()))
}
