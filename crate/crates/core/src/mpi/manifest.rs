use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::camera::CameraModel;
use super::stack::MpiStack;
use crate::error::{Error, Result};
use crate::image::Image;

pub const MANIFEST_FILE: &str = "manifest.json";

fn default_units() -> String {
    "scene".to_string()
}

/// On-disk description of an MPI: straight-alpha 8-bit RGBA PNG layers
/// (far to near) next to a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpiManifest {
    pub width: usize,
    pub height: usize,
    pub num_planes: usize,
    pub depths: Vec<f64>,
    pub intrinsics: CameraModel,
    pub layers: Vec<String>,
    /// Unit of depths and pose translations.
    #[serde(default = "default_units")]
    pub pose_units: String,
}

impl MpiManifest {
    pub fn for_stack(mpi: &MpiStack, cam: &CameraModel) -> Self {
        MpiManifest {
            width: mpi.width(),
            height: mpi.height(),
            num_planes: mpi.num_planes(),
            depths: mpi.depths().to_vec(),
            intrinsics: *cam,
            layers: (0..mpi.num_planes())
                .map(|i| format!("layer_{i:02}.png"))
                .collect(),
            pose_units: default_units(),
        }
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            message,
        };
        if self.width == 0 || self.height == 0 {
            return Err(fail(format!("empty size {}x{}", self.width, self.height)));
        }
        if self.depths.len() != self.num_planes || self.layers.len() != self.num_planes {
            return Err(fail(format!(
                "num_planes {} but {} depths and {} layers",
                self.num_planes,
                self.depths.len(),
                self.layers.len()
            )));
        }
        if self.depths.iter().any(|d| !(*d > 0.0)) || self.depths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(fail(
                "depths must be positive and strictly decreasing".into(),
            ));
        }
        if self
            .layers
            .iter()
            .any(|l| Path::new(l).is_absolute() || l.contains(".."))
        {
            return Err(fail("layer paths must be relative to the manifest".into()));
        }
        self.intrinsics
            .validate(self.width, self.height)
            .map_err(|e| fail(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: MpiManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        m.validate(path)?;
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads the manifest at `path` and its layers.
    pub fn load(path: impl AsRef<Path>) -> Result<(MpiStack, CameraModel)> {
        let path = path.as_ref();
        let m = Self::read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut planes = Vec::with_capacity(m.num_planes);
        for name in &m.layers {
            let layer = Image::load_png(dir.join(name))?;
            if layer.dims() != (m.width, m.height, 4) {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    message: format!(
                        "layer {name} is {}x{}x{}, expected {}x{}x4",
                        layer.width(),
                        layer.height(),
                        layer.channels(),
                        m.width,
                        m.height
                    ),
                });
            }
            planes.push(layer);
        }
        let mpi = MpiStack::from_planes(&planes, m.depths.clone())?;
        Ok((mpi, m.intrinsics))
    }
}

/// Writes the stack's layers and manifest into `dir`, returning the manifest path.
pub fn save_mpi(dir: impl AsRef<Path>, mpi: &MpiStack, cam: &CameraModel) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = MpiManifest::for_stack(mpi, cam);
    for (i, name) in m.layers.iter().enumerate() {
        mpi.plane(i).save_png(dir.join(name))?;
    }
    let path = dir.join(MANIFEST_FILE);
    m.write(&path)?;
    Ok(path)
}

/// Rounds every value to the 8-bit grid, matching what a save/load cycle yields.
pub fn quantize_to_8bit(mpi: &MpiStack) -> MpiStack {
    let data = mpi
        .data()
        .iter()
        .map(|&v| crate::image::to_u8(v) as f32 / 255.0)
        .collect();
    MpiStack::with_planes(mpi.width(), mpi.height(), mpi.depths().to_vec(), data)
        .expect("same shape")
}
