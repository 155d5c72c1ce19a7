//! Reduced-coordinate simulation of articulated objects (doors, drawers,
//! screw caps) with a flying gripper, ray-cast sensing, manipulation tasks
//! and motion-attribute metrics.

pub mod asset;
pub mod control;
pub mod dynamics;
pub mod kinematics;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod profile;
pub mod scalar;
pub mod scene;
pub mod sensors;
pub mod spatial;
pub mod tasks;

pub use model::{ArticulationState, Model};
pub use scalar::Real;

pub type Vec3 = spatial::Vec3<f64>;
pub type Quat = spatial::Quat<f64>;
pub type Transform = spatial::Transform<f64>;
pub type Transform32 = spatial::Transform<f32>;
pub type SpatialVector = spatial::SpatialVector<f64>;
pub type SpatialInertia = spatial::SpatialInertia<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
