use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArticulationSpec, AssetError, JointKind};

/// Uniform ranges for per-joint friction/damping and a per-link density
/// multiplier applied to mass and inertia.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPropertyRanges {
    pub friction: [f64; 2],
    pub damping: [f64; 2],
    pub density_scale: [f64; 2],
}

impl Default for PhysicalPropertyRanges {
    fn default() -> Self {
        PhysicalPropertyRanges { friction: [0.0, 0.5], damping: [0.0, 1.0], density_scale: [0.5, 1.5] }
    }
}

impl PhysicalPropertyRanges {
    pub fn validate(&self) -> Result<(), AssetError> {
        for (name, [lo, hi]) in [("friction", self.friction), ("damping", self.damping), ("density_scale", self.density_scale)] {
            if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return Err(AssetError::InvalidConfig(format!("{name} range [{lo}, {hi}] must satisfy 0 <= lo <= hi")));
            }
        }
        if self.density_scale[0] <= 0.0 {
            return Err(AssetError::InvalidConfig("density_scale must be strictly positive".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Redraws friction and damping of every movable joint and scales every
/// link's inertia, deterministically for a given seed.
pub fn randomize_properties(
    spec: &ArticulationSpec,
    ranges: &PhysicalPropertyRanges,
    seed: u64,
) -> Result<ArticulationSpec, AssetError> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = spec.clone();
    for j in out.joints.iter_mut().filter(|j| j.kind != JointKind::Fixed) {
        j.friction = draw(&mut rng, ranges.friction);
        j.damping = draw(&mut rng, ranges.damping);
    }
    for l in out.links.iter_mut() {
        let s = draw(&mut rng, ranges.density_scale);
        l.inertial = l.inertial.scaled(s);
    }
    out.validate()?;
    Ok(out)
}
