//! Mobility sidecar: screw coupling, limit overrides and semantic labels that
//! URDF cannot express.

use serde::{Deserialize, Serialize};

use super::{ArticulationSpec, AssetError, JointKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionType {
    Hinge,
    Slider,
    Screw,
    Fixed,
}

/// One sidecar record. Unknown JSON fields are ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MobilityEntry {
    pub joint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_type: Option<MotionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<bool>,
    /// Translation per radian (m/rad) of a coupled screw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<[f64; 2]>,
    /// Translational range of an uncoupled screw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide_limit: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<String>,
}

/// JSON array of [`MobilityEntry`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MobilityDocument(pub Vec<MobilityEntry>);

impl MobilityDocument {
    pub fn from_json(text: &str) -> Result<Self, AssetError> {
        serde_json::from_str(text).map_err(|e| AssetError::Parse(format!("mobility sidecar: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}

/// Applies a sidecar to `spec` and re-validates the result.
pub fn apply_mobility_sidecar(spec: &ArticulationSpec, sidecar: &MobilityDocument) -> Result<ArticulationSpec, AssetError> {
    let mut out = spec.clone();
    for entry in &sidecar.0 {
        let joint = out.joint_mut(&entry.joint).ok_or_else(|| AssetError::UnknownJoint(entry.joint.clone()))?;
        if let Some([lo, hi]) = entry.limit {
            if lo > hi {
                return Err(AssetError::ConflictingLimits { joint: entry.joint.clone(), lower: lo, upper: hi });
            }
        }
        if let Some([lo, hi]) = entry.slide_limit {
            if lo > hi {
                return Err(AssetError::ConflictingLimits { joint: entry.joint.clone(), lower: lo, upper: hi });
            }
        }
        match entry.motion_type {
            None => {}
            Some(MotionType::Screw) => {
                if !matches!(joint.kind, JointKind::Hinge | JointKind::Slider | JointKind::Screw) {
                    return Err(AssetError::InvalidConfig(format!(
                        "joint `{}` is {} and cannot become a screw",
                        joint.name, joint.kind
                    )));
                }
                joint.kind = JointKind::Screw;
                joint.screw_coupled = entry.coupled.unwrap_or(joint.screw_coupled);
                joint.screw_pitch = if joint.screw_coupled { entry.pitch.or(joint.screw_pitch) } else { None };
            }
            Some(t) => {
                let expected = match t {
                    MotionType::Hinge => JointKind::Hinge,
                    MotionType::Slider => JointKind::Slider,
                    _ => JointKind::Fixed,
                };
                if joint.kind != expected {
                    return Err(AssetError::InvalidConfig(format!(
                        "sidecar declares `{}` as {:?} but the URDF joint is {}",
                        joint.name, t, joint.kind
                    )));
                }
            }
        }
        if let Some([lo, hi]) = entry.limit {
            joint.limit_lower = lo;
            joint.limit_upper = hi;
        }
        if let Some([lo, hi]) = entry.slide_limit {
            joint.slide_lower = Some(lo);
            joint.slide_upper = Some(hi);
        }
        if let Some(label) = &entry.semantic {
            let child = joint.child_link.clone();
            if let Some(link) = out.links.iter_mut().find(|l| l.name == child) {
                link.semantic_label = label.clone();
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Sidecar carrying what [`super::write_urdf`] cannot express: screw
/// joints and the semantic labels of non-root links.
pub fn mobility_sidecar_for(spec: &ArticulationSpec) -> MobilityDocument {
    let mut entries = Vec::new();
    for j in &spec.joints {
        let label = spec.link(&j.child_link).map(|l| l.semantic_label.clone()).filter(|s| !s.is_empty());
        let is_screw = j.kind == JointKind::Screw;
        if !is_screw && label.is_none() {
            continue;
        }
        entries.push(MobilityEntry {
            joint: j.name.clone(),
            motion_type: is_screw.then_some(MotionType::Screw),
            coupled: is_screw.then_some(j.screw_coupled),
            pitch: j.screw_pitch,
            limit: None,
            slide_limit: match (j.slide_lower, j.slide_upper) {
                (Some(lo), Some(hi)) => Some([lo, hi]),
                _ => None,
            },
            semantic: label,
        });
    }
    MobilityDocument(entries)
}
