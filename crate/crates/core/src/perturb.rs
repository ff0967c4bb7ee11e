//! Differentiable image edits applied to the embedding image between
//! encoding and restoration: colour jitter and cropping.

use mpijpeg_tensor::{Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::jpeg::RGB_TO_YCC;
use crate::mpi::{invert, mat_mul, Mat3};

/// Crops never go below this many pixels per side.
pub const MIN_CROP: usize = 64;

/// Crop sides are multiples of this.
pub const CROP_ALIGN: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// Additive brightness offset drawn from `±brightness_delta`.
    pub brightness_delta: f64,
    /// Contrast factor drawn from `1 ± contrast_range`.
    pub contrast_range: f64,
    /// Saturation factor drawn from `1 ± saturation_range`.
    pub saturation_range: f64,
    /// Hue rotation in degrees drawn from `±hue_delta_deg`.
    pub hue_delta_deg: f64,
    /// Smallest retained fraction of each side.
    pub crop_fraction: f64,
    pub brightness: bool,
    pub contrast: bool,
    pub saturation: bool,
    pub hue: bool,
    pub crop: bool,
    /// Chance that each enabled edit is applied to a given sample.
    pub probability: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            brightness_delta: 0.1,
            contrast_range: 0.15,
            saturation_range: 0.15,
            hue_delta_deg: 10.0,
            crop_fraction: 0.9,
            brightness: true,
            contrast: true,
            saturation: true,
            hue: true,
            crop: true,
            probability: 0.5,
        }
    }
}

impl PerturbConfig {
    /// Every edit disabled.
    pub fn none() -> Self {
        PerturbConfig {
            brightness: false,
            contrast: false,
            saturation: false,
            hue: false,
            crop: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("brightness_delta", self.brightness_delta),
            ("contrast_range", self.contrast_range),
            ("saturation_range", self.saturation_range),
            ("hue_delta_deg", self.hue_delta_deg),
        ];
        for (name, v) in ranges {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "crop_fraction must be in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "probability must be in [0, 1], got {}",
                self.probability
            )));
        }
        Ok(())
    }
}

/// One concrete colour edit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_deg: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        JitterParams {
            brightness: 0.0,
            contrast: 1.0,
            saturation: 1.0,
            hue_deg: 0.0,
        }
    }
}

impl JitterParams {
    pub fn is_identity(&self) -> bool {
        *self == JitterParams::default()
    }

    /// Draws each enabled edit with probability `cfg.probability`, uniform
    /// within its range. Always consumes the same number of draws so later
    /// randomness does not depend on which edits fired.
    pub fn sample<R: Rng + ?Sized>(cfg: &PerturbConfig, rng: &mut R) -> Self {
        let mut draw = |enabled: bool, range: f64| {
            let fire = rng.gen::<f64>() < cfg.probability;
            let u = rng.gen_range(-1.0..=1.0);
            if enabled && fire {
                u * range
            } else {
                0.0
            }
        };
        JitterParams {
            brightness: draw(cfg.brightness, cfg.brightness_delta),
            contrast: 1.0 + draw(cfg.contrast, cfg.contrast_range),
            saturation: 1.0 + draw(cfg.saturation, cfg.saturation_range),
            hue_deg: draw(cfg.hue, cfg.hue_delta_deg),
        }
    }

    /// RGB-to-RGB matrix rotating the (Cb, Cr) chroma plane by `hue_deg`.
    pub fn hue_matrix(&self) -> Mat3 {
        hue_matrix(self.hue_deg)
    }
}

const LUMA: [f64; 3] = RGB_TO_YCC[0];

fn hue_matrix(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    let rot = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
    let back = invert(&RGB_TO_YCC).expect("colour transform is invertible");
    mat_mul(&back, &mat_mul(&rot, &RGB_TO_YCC))
}

/// Colour jitter of an `[N, 3, H, W]` batch with one parameter set per
/// image: brightness, contrast about the image's mean luma, saturation
/// about each pixel's luma, hue rotation, then a clamp to `[0, 1]`.
/// Identity edits are skipped, so identity parameters return the input
/// unchanged.
pub fn color_jitter<T: Scalar>(x: &Tensor<T>, params: &[JitterParams]) -> Result<Tensor<T>> {
    if x.shape().len() != 4 || x.shape()[1] != 3 {
        return Err(Error::shape(format!(
            "colour jitter expects [N, 3, H, W], got {:?}",
            x.shape()
        )));
    }
    let (n, _, h, w) = x.dims4();
    if params.len() != n {
        return Err(Error::shape(format!(
            "{} jitter parameter sets for a batch of {n}",
            params.len()
        )));
    }
    if params.iter().all(JitterParams::is_identity) {
        return Ok(x.clone());
    }
    let hw = h * w;
    let params = params.to_vec();
    let mut out = Vec::with_capacity(x.data().len());
    let mut inside = Vec::with_capacity(x.data().len());
    for (img, p) in x.data().chunks(3 * hw).zip(&params) {
        let mut v: Vec<f64> = img.iter().map(|t| t.as_f64()).collect();
        jitter_forward(&mut v, hw, p);
        inside.extend(v.iter().map(|&t| (0.0..=1.0).contains(&t)));
        out.extend(v.iter().map(|&t| T::from_f64_lossy(t.clamp(0.0, 1.0))));
    }
    Ok(Tensor::from_op(&[x], x.shape(), out, move |g, _| {
        let mut gx = Vec::with_capacity(g.len());
        for ((gi, mi), p) in g.chunks(3 * hw).zip(inside.chunks(3 * hw)).zip(&params) {
            let mut v: Vec<f64> = gi
                .iter()
                .zip(mi)
                .map(|(t, &m)| if m { t.as_f64() } else { 0.0 })
                .collect();
            jitter_adjoint(&mut v, hw, p);
            gx.extend(v.into_iter().map(T::from_f64_lossy));
        }
        vec![Some(gx)]
    }))
}

/// [`color_jitter`] on a single RGB image.
pub fn color_jitter_image(img: &Image, params: &JitterParams) -> Result<Image> {
    let t = color_jitter(&img.to_tensor::<f64>(), std::slice::from_ref(params))?;
    Image::from_tensor(&t, 0)
}

/// Unclamped jitter of one channel-planar image, in place.
fn jitter_forward(v: &mut [f64], hw: usize, p: &JitterParams) {
    if p.brightness != 0.0 {
        v.iter_mut().for_each(|t| *t += p.brightness);
    }
    if p.contrast != 1.0 {
        let mean = (0..hw).map(|k| luma_at(v, hw, k)).sum::<f64>() / hw as f64;
        v.iter_mut()
            .for_each(|t| *t = mean + p.contrast * (*t - mean));
    }
    if p.saturation != 1.0 {
        for k in 0..hw {
            let l = luma_at(v, hw, k);
            for c in 0..3 {
                v[c * hw + k] = l + p.saturation * (v[c * hw + k] - l);
            }
        }
    }
    if p.hue_deg != 0.0 {
        apply_matrix(v, hw, &p.hue_matrix());
    }
}

/// Transpose of the linear part of [`jitter_forward`], in place.
fn jitter_adjoint(g: &mut [f64], hw: usize, p: &JitterParams) {
    if p.hue_deg != 0.0 {
        let m = p.hue_matrix();
        let mt = std::array::from_fn(|i| std::array::from_fn(|j| m[j][i]));
        apply_matrix(g, hw, &mt);
    }
    if p.saturation != 1.0 {
        // x' = s x + (1 - s) (w . x) 1
        for k in 0..hw {
            let total: f64 = (0..3).map(|c| g[c * hw + k]).sum();
            for c in 0..3 {
                g[c * hw + k] =
                    p.saturation * g[c * hw + k] + (1.0 - p.saturation) * LUMA[c] * total;
            }
        }
    }
    if p.contrast != 1.0 {
        // x' = c x + (1 - c) mean(w . x) 1
        let total: f64 = g.iter().sum();
        let share = (1.0 - p.contrast) * total / hw as f64;
        for c in 0..3 {
            for t in &mut g[c * hw..(c + 1) * hw] {
                *t = p.contrast * *t + share * LUMA[c];
            }
        }
    }
}

fn luma_at(v: &[f64], hw: usize, k: usize) -> f64 {
    LUMA[0] * v[k] + LUMA[1] * v[hw + k] + LUMA[2] * v[2 * hw + k]
}

fn apply_matrix(v: &mut [f64], hw: usize, m: &Mat3) {
    for k in 0..hw {
        let px = [v[k], v[hw + k], v[2 * hw + k]];
        for (c, row) in m.iter().enumerate() {
            v[c * hw + k] = row[0] * px[0] + row[1] * px[1] + row[2] * px[2];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        CropRect {
            x: 0,
            y: 0,
            width,
            height,
        }
    }
}

/// Inclusive range of allowed crop lengths for one side.
fn crop_lengths(side: usize, fraction: f64) -> Result<(usize, usize)> {
    let hi = side / CROP_ALIGN * CROP_ALIGN;
    if hi < MIN_CROP {
        return Err(Error::shape(format!(
            "side of {side} pixels is below the {MIN_CROP}-pixel minimum crop"
        )));
    }
    let min_len = (fraction * side as f64).ceil() as usize;
    let lo = min_len.div_ceil(CROP_ALIGN) * CROP_ALIGN;
    Ok((lo.clamp(MIN_CROP, hi), hi))
}

/// Draws a crop rectangle for a `width x height` image: each side keeps at
/// least `cfg.crop_fraction` of its length, is a multiple of 8 and at least
/// 64 pixels; the offset is uniform. A fraction of 1 returns the whole
/// image, whatever its size.
pub fn sample_crop<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<CropRect> {
    if fraction >= 1.0 {
        return Ok(CropRect::full(width, height));
    }
    let (wlo, whi) = crop_lengths(width, fraction)?;
    let (hlo, hhi) = crop_lengths(height, fraction)?;
    let cw = rng.gen_range(wlo / CROP_ALIGN..=whi / CROP_ALIGN) * CROP_ALIGN;
    let ch = rng.gen_range(hlo / CROP_ALIGN..=hhi / CROP_ALIGN) * CROP_ALIGN;
    Ok(CropRect {
        x: rng.gen_range(0..=width - cw),
        y: rng.gen_range(0..=height - ch),
        width: cw,
        height: ch,
    })
}

/// Random crop of an image per `cfg.crop_fraction` (applied regardless of
/// `cfg.crop` and `cfg.probability`).
pub fn random_crop<R: Rng + ?Sized>(
    img: &Image,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<(Image, CropRect)> {
    let rect = sample_crop(img.width(), img.height(), cfg.crop_fraction, rng)?;
    Ok((img.crop(rect.x, rect.y, rect.width, rect.height)?, rect))
}

/// Crops the spatial dimensions of an `[N, C, H, W]` tensor.
pub fn crop_tensor<T: Scalar>(x: &Tensor<T>, rect: &CropRect) -> Result<Tensor<T>> {
    let (_, _, h, w) = x.dims4();
    if rect.x + rect.width > w || rect.y + rect.height > h {
        return Err(Error::shape(format!(
            "crop {rect:?} exceeds a {w}x{h} tensor"
        )));
    }
    if rect.width == w && rect.height == h {
        return Ok(x.clone());
    }
    Ok(x.narrow(2, rect.y, rect.height)
        .narrow(3, rect.x, rect.width))
}

/// The edits applied to one training batch: per-image colour jitter and a
/// shared crop (the batch must stay rectangular).
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub jitter: Vec<JitterParams>,
    pub crop: CropRect,
}

impl Perturbation {
    pub fn identity(batch: usize, width: usize, height: usize) -> Self {
        Perturbation {
            jitter: vec![JitterParams::default(); batch],
            crop: CropRect::full(width, height),
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        cfg: &PerturbConfig,
        batch: usize,
        width: usize,
        height: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let jitter = (0..batch).map(|_| JitterParams::sample(cfg, rng)).collect();
        let fire = rng.gen::<f64>() < cfg.probability;
        let fraction = if cfg.crop && fire {
            cfg.crop_fraction
        } else {
            1.0
        };
        Ok(Perturbation {
            jitter,
            crop: sample_crop(width, height, fraction, rng)?,
        })
    }

    /// Jitter, then crop.
    pub fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        crop_tensor(&color_jitter(x, &self.jitter)?, &self.crop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hue_matrix_at_zero_is_identity() {
        let m = hue_matrix(0.0);
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hue_preserves_gray() {
        let m = hue_matrix(37.0);
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_fraction_keeps_odd_sizes() {
        let mut rng = rand::thread_rng();
        assert_eq!(
            sample_crop(70, 65, 1.0, &mut rng).unwrap(),
            CropRect::full(70, 65)
        );
        assert!(sample_crop(60, 100, 0.9, &mut rng).is_err());
    }
}
