//! Image quality metrics and the per-scene evaluation protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mpi::{render_novel_view, CameraModel, MpiStack, RelativePose};

/// Returned by [`psnr`] for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// BT.601 luma of an RGB image; single-channel images pass through.
pub fn luma(img: &Image) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.data().iter().map(|&v| v as f64).collect()),
        3 | 4 => {
            let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
            Ok((0..r.len())
                .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
                .collect())
        }
        c => Err(Error::shape(format!(
            "cannot take the luma of a {c}-channel image"
        ))),
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x0 in 0..ow {
            rows[y * ow + x0] = (0..SSIM_WINDOW).map(|i| k[i] * x[y * w + x0 + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = (0..SSIM_WINDOW)
                .map(|i| k[i] * rows[(y0 + i) * ow + x0])
                .sum();
        }
    }
    out
}

/// Structural similarity of the luma channels: 11x11 Gaussian window with
/// sigma 1.5, `K1 = 0.01`, `K2 = 0.03`, dynamic range 1, averaged over all
/// window positions that fit inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs at least 11x11 pixels, got {w}x{h}"
        )));
    }
    let (x, y) = (luma(a)?, luma(b)?);
    ssim_gray(&x, &y, w, h)
}

pub fn ssim_gray(x: &[f64], y: &[f64], w: usize, h: usize) -> Result<f64> {
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).collect::<Vec<_>>();
    let mx = filter_valid(x, w, h, &k);
    let my = filter_valid(y, w, h, &k);
    let sxx = filter_valid(&prod(x, x), w, h, &k);
    let syy = filter_valid(&prod(y, y), w, h, &k);
    let sxy = filter_valid(&prod(x, y), w, h, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total +=
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub psnr: f64,
    pub ssim: f64,
}

impl Scores {
    pub fn between(a: &Image, b: &Image) -> Result<Self> {
        Ok(Scores {
            psnr: psnr(a, b)?,
            ssim: ssim(a, b)?,
        })
    }

    pub fn mean(all: &[Scores]) -> Scores {
        let n = all.len().max(1) as f64;
        Scores {
            psnr: all.iter().map(|s| s.psnr).sum::<f64>() / n,
            ssim: all.iter().map(|s| s.ssim).sum::<f64>() / n,
        }
    }
}

/// The nine evaluation poses: translations on the grid `{-0.4, 0, 0.4}^2`
/// in x and y, no rotation, row-major from `(-0.4, -0.4)`.
pub fn eval_poses() -> Vec<RelativePose> {
    const STEPS: [f64; 3] = [-0.4, 0.0, 0.4];
    STEPS
        .iter()
        .flat_map(|&y| {
            STEPS
                .iter()
                .map(move |&x| RelativePose::translation(x, y, 0.0))
        })
        .collect()
}

/// Anything that can hide an MPI in an image and get it back.
pub trait MpiCodec {
    fn embed(&self, mpi: &MpiStack, reference: &Image) -> Result<Image>;
    fn restore(&self, embedding: &Image) -> Result<MpiStack>;
}

/// Passes the reference through and "restores" a fixed stack; scores the
/// evaluation harness itself.
pub struct IdentityCodec {
    pub mpi: MpiStack,
}

impl MpiCodec for IdentityCodec {
    fn embed(&self, _mpi: &MpiStack, reference: &Image) -> Result<Image> {
        Ok(reference.clone())
    }

    fn restore(&self, _embedding: &Image) -> Result<MpiStack> {
        Ok(self.mpi.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub embedding: Scores,
    pub render: Scores,
    pub per_pose: Vec<Scores>,
}

/// Scores the embedding against the reference and the renders of the
/// restored MPI against renders of the ground truth at each pose.
pub fn eval_scene(
    codec: &dyn MpiCodec,
    mpi: &MpiStack,
    reference: &Image,
    cam: &CameraModel,
    poses: &[RelativePose],
) -> Result<SceneEval> {
    let embedding = codec.embed(mpi, reference)?;
    let restored = codec.restore(&embedding)?;
    let per_pose = poses
        .iter()
        .map(|pose| {
            let truth = render_novel_view(mpi, pose, cam)?;
            let ours = render_novel_view(&restored, pose, cam)?;
            Scores::between(&ours, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneEval {
        embedding: Scores::between(&embedding, reference)?,
        render: Scores::mean(&per_pose),
        per_pose,
    })
}
