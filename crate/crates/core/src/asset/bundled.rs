//! Sample assets shipped with the crate.

use super::{apply_mobility_sidecar, parse_urdf, ArticulationSpec, AssetError, MobilityDocument};

pub const CABINET_URDF: &str = include_str!("../../assets/cabinet.urdf");
pub const CABINET_SIDECAR: &str = include_str!("../../assets/cabinet.mobility.json");
pub const CABINET_MANIFEST: &str = include_str!("../../assets/cabinet.manifest.json");
pub const BOTTLE_URDF: &str = include_str!("../../assets/bottle.urdf");
pub const BOTTLE_SIDECAR: &str = include_str!("../../assets/bottle.mobility.json");
pub const CYCLIC_URDF: &str = include_str!("../../assets/cyclic.urdf");
pub const BAD_SIDECAR: &str = include_str!("../../assets/bad.mobility.json");

/// Directory holding the files above, as laid out in the source tree.
pub fn assets_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

/// Loads a URDF document and, if given, applies its mobility sidecar.
pub fn load(urdf: &str, sidecar: Option<&str>) -> Result<ArticulationSpec, AssetError> {
    let spec = parse_urdf(urdf)?;
    match sidecar {
        Some(s) => apply_mobility_sidecar(&spec, &MobilityDocument::from_json(s)?),
        None => Ok(spec),
    }
}

pub fn sample_cabinet() -> ArticulationSpec {
    load(CABINET_URDF, Some(CABINET_SIDECAR)).expect("bundled cabinet is valid")
}

pub fn sample_bottle() -> ArticulationSpec {
    load(BOTTLE_URDF, Some(BOTTLE_SIDECAR)).expect("bundled bottle is valid")
}
