//! Wall-clock throughput of stepping and rendering.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::scene::{Scene, SceneConfig, SceneError};
use crate::sensors::{render, CameraIntrinsics, SensorError};
use crate::spatial::Transform;
use crate::tasks::{front_camera, make_task, TaskConfig, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub steps: usize,
    pub steps_per_sec: f64,
    pub renders: usize,
    pub renders_per_sec: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("task setup failed: {0}")]
    Task(String),
}

/// Steps a clone of `scene` `steps` times, then renders `renders` frames.
pub fn profile<T: Real>(
    scene: &Scene<T>,
    steps: usize,
    renders: usize,
    camera: &Transform<f64>,
    intrinsics: &CameraIntrinsics,
) -> Result<ProfileReport, ProfileError>
where
    Scene<T>: Clone,
{
    let mut s = scene.clone();
    let t0 = Instant::now();
    for _ in 0..steps {
        s.step()?;
    }
    let step_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    for _ in 0..renders {
        render(&s, camera, intrinsics)?;
    }
    let render_time = t1.elapsed().as_secs_f64();
    let rate = |n: usize, t: f64| if n == 0 { 0.0 } else { n as f64 / t.max(1e-12) };
    Ok(ProfileReport {
        steps,
        steps_per_sec: rate(steps, step_time),
        renders,
        renders_per_sec: rate(renders, render_time),
        width: intrinsics.width,
        height: intrinsics.height,
    })
}

/// The drawer-pulling task scene with the gripper attached.
pub fn drawer_scene(seed: u64) -> Result<(Scene, Transform<f64>), ProfileError> {
    let (_, scene) = make_task(TaskKind::PullDrawer, seed, &TaskConfig::default()).map_err(|e| ProfileError::Task(e.to_string()))?;
    let cam = front_camera(&scene);
    Ok((scene, cam))
}

pub fn empty_scene() -> Result<Scene, ProfileError> {
    Ok(Scene::new(SceneConfig::default())?)
}
