//! Scene description: shapes, the button stack-up, phantoms and bending.

mod phantom;
mod scene;
mod shape;
mod stackup;

pub use phantom::{
    bend_scene, build_arm_phantom, build_chest_phantom, ARM_LENGTH, ARM_RADIUS, CHEST_SIZE, FAT_THICKNESS,
    MUSCLE_THICKNESS, SKIN_THICKNESS,
};
pub use scene::{PortSpec, Scene};
pub use shape::{dist, Aabb, Axis, Bend, Shape, ShapeKind, Vec3};
pub use stackup::{build_button_stackup, StackupParams, COPPER_THICKNESS};
