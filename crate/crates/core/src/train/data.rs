use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mpi::{composite, default_depths, CameraModel, MpiManifest, MpiStack, MANIFEST_FILE};

/// File name of a scene's reference photo inside its directory.
pub const REFERENCE_FILE: &str = "reference.png";

/// Patch offsets are multiples of this.
pub const PATCH_ALIGN: usize = 8;

/// One scene directory: an MPI manifest plus the reference photo.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneRecord {
    pub id: String,
    pub manifest: PathBuf,
    pub reference: PathBuf,
}

#[derive(Clone, Debug, Default)]
pub struct Ingest {
    pub records: Vec<SceneRecord>,
    /// One message per skipped scene.
    pub warnings: Vec<String>,
}

/// A scene loaded into memory.
#[derive(Clone, Debug)]
pub struct TrainScene {
    pub id: String,
    pub mpi: MpiStack,
    pub reference: Image,
    pub camera: CameraModel,
}

/// Scans `root` for scene directories (sorted by name). A scene is kept
/// when its manifest validates, every layer loads and the reference photo
/// has the MPI's size; anything else is skipped with a warning.
pub fn ingest_dataset(root: impl AsRef<Path>) -> Result<Ingest> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Ingest::default();
    for dir in dirs {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let record = SceneRecord {
            id: id.clone(),
            manifest: dir.join(MANIFEST_FILE),
            reference: dir.join(REFERENCE_FILE),
        };
        match load_scene(&record) {
            Ok(_) => out.records.push(record),
            Err(e) => {
                let msg = format!("skipping scene {id}: {e}");
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
        }
    }
    if out.records.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable scenes under {}",
            root.display()
        )));
    }
    Ok(out)
}

pub fn load_scene(record: &SceneRecord) -> Result<TrainScene> {
    let (mpi, camera) = MpiManifest::load(&record.manifest)?;
    let reference = Image::load_png(&record.reference)?;
    let reference = match reference.channels() {
        3 => reference,
        4 => reference.take_channels(3)?,
        c => return Err(Error::Dataset(format!("reference has {c} channels"))),
    };
    if (reference.width(), reference.height()) != (mpi.width(), mpi.height()) {
        return Err(Error::Dataset(format!(
            "reference is {}x{} but the MPI is {}x{}",
            reference.width(),
            reference.height(),
            mpi.width(),
            mpi.height()
        )));
    }
    Ok(TrainScene {
        id: record.id.clone(),
        mpi,
        reference,
        camera,
    })
}

/// Writes a scene in the layout [`ingest_dataset`] reads.
pub fn save_scene(dir: impl AsRef<Path>, scene: &TrainScene) -> Result<()> {
    let dir = dir.as_ref();
    crate::mpi::save_mpi(dir, &scene.mpi, &scene.camera)?;
    scene.reference.save_png(dir.join(REFERENCE_FILE))
}

impl TrainScene {
    /// A random `width x height` patch at an offset aligned to
    /// [`PATCH_ALIGN`], with the intrinsics shifted to match.
    pub fn patch<R: Rng + ?Sized>(
        &self,
        width: usize,
        height: usize,
        rng: &mut R,
    ) -> Result<TrainScene> {
        let (w, h) = (self.mpi.width(), self.mpi.height());
        if width > w || height > h {
            return Err(Error::Dataset(format!(
                "scene {} is {w}x{h}, smaller than the {width}x{height} training patch",
                self.id
            )));
        }
        if (width, height) == (w, h) {
            return Ok(self.clone());
        }
        let x0 = rng.gen_range(0..=(w - width) / PATCH_ALIGN) * PATCH_ALIGN;
        let y0 = rng.gen_range(0..=(h - height) / PATCH_ALIGN) * PATCH_ALIGN;
        Ok(TrainScene {
            id: self.id.clone(),
            mpi: self.mpi.crop(x0, y0, width, height)?,
            reference: self.reference.crop(x0, y0, width, height)?,
            camera: self.camera.cropped(x0, y0),
        })
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A procedural two-colour texture.
struct Texture {
    a: [f64; 3],
    b: [f64; 3],
    kind: u8,
    freq: f64,
    angle: f64,
    phase: f64,
}

impl Texture {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        let colour = |rng: &mut R| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        Texture {
            a: colour(rng),
            b: colour(rng),
            kind: rng.gen_range(0..3),
            freq: rng.gen_range(0.05..0.4),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, x: f64, y: f64, c: usize) -> f32 {
        let u = x * self.angle.cos() + y * self.angle.sin();
        let t = match self.kind {
            0 => 0.5 + 0.5 * (self.freq * u + self.phase).sin(),
            1 => {
                let cell = (2.0 / self.freq).max(2.0);
                (((x / cell).floor() + (y / cell).floor()) as i64).rem_euclid(2) as f64
            }
            _ => {
                0.5 + 0.25 * (self.freq * u + self.phase).sin()
                    + 0.25 * (0.5 * self.freq * (y - x) + self.phase).cos()
            }
        };
        (self.a[c] * (1.0 - t) + self.b[c] * t) as f32
    }
}

/// A procedural scene: an opaque textured backdrop on the farthest plane
/// and several textured rectangles with soft edges on distinct nearer
/// planes. Depths follow [`default_depths`]; the reference is the
/// composite of the stack. Deterministic per seed.
///
/// # Panics
/// When `planes`, `width` or `height` is zero.
pub fn generate_synthetic_scene(
    seed: u64,
    width: usize,
    height: usize,
    planes: usize,
) -> (MpiStack, Image) {
    assert!(
        planes > 0 && width > 0 && height > 0,
        "empty synthetic scene"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = width * height;
    let mut data = vec![0.0f32; planes * 4 * hw];
    let backdrop = Texture::sample(&mut rng);
    for c in 0..3 {
        for y in 0..height {
            for x in 0..width {
                data[c * hw + y * width + x] = backdrop.at(x as f64, y as f64, c);
            }
        }
    }
    data[3 * hw..4 * hw].fill(1.0);

    let mut candidates: Vec<usize> = (1..planes).collect();
    candidates.shuffle(&mut rng);
    let count = rng.gen_range(3..=6).min(candidates.len());
    let (fw, fh) = (width as f64, height as f64);
    for &plane in &candidates[..count] {
        let tex = Texture::sample(&mut rng);
        let hx = rng.gen_range(0.08..0.3) * fw;
        let hy = rng.gen_range(0.1..0.35) * fh;
        let cx = rng.gen_range(0.0..fw);
        let cy = rng.gen_range(0.0..fh);
        let soft = rng.gen_range(1.5..4.0);
        let peak = if rng.gen_bool(0.7) {
            1.0
        } else {
            rng.gen_range(0.6..0.9)
        };
        let base = plane * 4 * hw;
        for y in 0..height {
            for x in 0..width {
                let inside = (hx - (x as f64 - cx).abs()).min(hy - (y as f64 - cy).abs());
                let alpha = peak * smoothstep(inside / soft);
                let k = y * width + x;
                for c in 0..3 {
                    data[base + c * hw + k] = tex.at(x as f64, y as f64, c);
                }
                data[base + 3 * hw + k] = alpha as f32;
            }
        }
    }
    let mpi = MpiStack::with_planes(width, height, default_depths(planes), data)
        .expect("valid by construction");
    let reference = composite(&mpi);
    (mpi, reference)
}

/// `count` synthetic scenes with seeds `seed, seed + 1, ...` and default
/// intrinsics.
pub fn synthetic_scenes(
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
    planes: usize,
) -> Vec<TrainScene> {
    (0..count as u64)
        .map(|i| {
            let (mpi, reference) = generate_synthetic_scene(seed + i, width, height, planes);
            TrainScene {
                id: format!("synthetic-{}", seed + i),
                mpi,
                reference,
                camera: CameraModel::default_for(width, height),
            }
        })
        .collect()
}
