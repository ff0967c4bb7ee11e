//! Static asset bundle for the browser viewer.

use mpijpeg::mpi::{render_novel_view, save_mpi, MpiManifest, MANIFEST_FILE};
use mpijpeg::{CameraModel, RelativePose};
use serde::Serialize;

use crate::commands::pose_from;
use crate::error::{CliError, CliResult};
use crate::ExportViewerArgs;

pub const VIEWER_CONFIG_FILE: &str = "viewer-config.json";
pub const CONFIG_VERSION: u32 = 1;

/// Named poses the viewer must reproduce: translation, then rotation in
/// degrees.
pub const GOLDEN_POSES: [(&str, [f64; 6]); 3] = [
    ("identity", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("shift", [0.3, -0.2, 0.1, 0.0, 0.0, 0.0]),
    ("orbit", [-0.25, 0.15, -0.1, 2.0, -3.0, 1.5]),
];

#[derive(Serialize)]
struct PoseRanges {
    translation: f64,
    rotation_deg: f64,
}

#[derive(Serialize)]
struct Golden {
    name: &'static str,
    translation: [f64; 3],
    rotation_deg: [f64; 3],
    image: String,
}

#[derive(Serialize)]
struct ViewerConfig {
    version: u32,
    manifest: &'static str,
    width: usize,
    height: usize,
    num_planes: usize,
    intrinsics: CameraModel,
    depths: Vec<f64>,
    pose_units: String,
    pose_ranges: PoseRanges,
    /// Euler convention of `rotation_deg` values.
    rotation_order: &'static str,
    golden: Vec<Golden>,
}

pub fn export(a: &ExportViewerArgs) -> CliResult<()> {
    if !(a.translation_range > 0.0 && a.rotation_range > 0.0) {
        return Err(CliError::Validation(format!(
            "pose ranges must be positive, got {} and {}",
            a.translation_range, a.rotation_range
        )));
    }
    let manifest = MpiManifest::read(&a.manifest)?;
    let (mpi, cam) = MpiManifest::load(&a.manifest)?;
    save_mpi(&a.out_dir, &mpi, &cam)?;

    let mut golden = Vec::new();
    for (name, p) in GOLDEN_POSES {
        let pose: RelativePose = pose_from(&p)?;
        let image = format!("golden_{name}.png");
        render_novel_view(&mpi, &pose, &cam)?.save_png(a.out_dir.join(&image))?;
        golden.push(Golden {
            name,
            translation: [p[0], p[1], p[2]],
            rotation_deg: [p[3], p[4], p[5]],
            image,
        });
    }
    let config = ViewerConfig {
        version: CONFIG_VERSION,
        manifest: MANIFEST_FILE,
        width: mpi.width(),
        height: mpi.height(),
        num_planes: mpi.num_planes(),
        intrinsics: cam,
        depths: mpi.depths().to_vec(),
        pose_units: manifest.pose_units,
        pose_ranges: PoseRanges {
            translation: a.translation_range,
            rotation_deg: a.rotation_range,
        },
        rotation_order: "intrinsic-xyz",
        golden,
    };
    let path = a.out_dir.join(VIEWER_CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&config)?)
        .map_err(|e| CliError::io(&path, e))?;
    println!("{}", path.display());
    Ok(())
}
