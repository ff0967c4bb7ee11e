use std::rc::Rc;

use mpijpeg_tensor::{Scalar, Tensor};

use super::camera::{apply, inverse_plane_homography, CameraModel, RelativePose};
use super::stack::MpiStack;
use crate::error::{Error, Result};
use crate::image::Image;

/// Sample positions within this distance of a pixel centre are snapped to
/// it, so warps that land on the grid reproduce the input exactly.
const SNAP: f64 = 1e-9;

/// Precomputed bilinear taps of one plane warp: for every target pixel, up
/// to four `(source index, weight)` pairs. Taps outside the source image are
/// dropped, which makes out-of-frustum regions transparent.
#[derive(Clone, Debug)]
pub struct WarpTable {
    width: usize,
    height: usize,
    taps: Option<Vec<[(u32, f32); 4]>>,
}

impl WarpTable {
    pub fn identity(width: usize, height: usize) -> Self {
        WarpTable {
            width,
            height,
            taps: None,
        }
    }

    pub fn new(
        width: usize,
        height: usize,
        cam: &CameraModel,
        pose: &RelativePose,
        depth: f64,
    ) -> Result<Self> {
        if !(depth > 0.0) {
            return Err(Error::Geometry(format!(
                "plane depth must be positive, got {depth}"
            )));
        }
        if pose.is_identity() {
            return Ok(Self::identity(width, height));
        }
        let hinv = inverse_plane_homography(cam, pose, depth)?;
        let mut taps = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                taps.push(bilinear_taps(&hinv, x as f64, y as f64, width, height));
            }
        }
        Ok(WarpTable {
            width,
            height,
            taps: Some(taps),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.taps.is_none()
    }

    /// Warps one channel.
    pub fn apply<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        match &self.taps {
            None => dst.copy_from_slice(src),
            Some(taps) => {
                for (d, t) in dst.iter_mut().zip(taps) {
                    let mut acc = T::zero();
                    for &(i, w) in t {
                        if w != 0.0 {
                            acc += src[i as usize] * T::from_f64_lossy(w as f64);
                        }
                    }
                    *d = acc;
                }
            }
        }
    }

    /// Accumulates the adjoint of [`apply`](Self::apply) into `gsrc`.
    pub fn apply_adjoint<T: Scalar>(&self, g: &[T], gsrc: &mut [T]) {
        match &self.taps {
            None => gsrc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            Some(taps) => {
                for (&gv, t) in g.iter().zip(taps) {
                    for &(i, w) in t {
                        if w != 0.0 {
                            gsrc[i as usize] += gv * T::from_f64_lossy(w as f64);
                        }
                    }
                }
            }
        }
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn bilinear_taps(
    hinv: &[[f64; 3]; 3],
    x: f64,
    y: f64,
    width: usize,
    height: usize,
) -> [(u32, f32); 4] {
    let mut out = [(0u32, 0.0f32); 4];
    let [u, v, w] = apply(hinv, x, y);
    // Points behind the reference camera never project into it.
    if !(w > 1e-12) {
        return out;
    }
    let (u, v) = (snap(u / w), snap(v / w));
    if !u.is_finite() || !v.is_finite() {
        return out;
    }
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    for (slot, (cx, cy, wt)) in out.iter_mut().zip(corners) {
        if wt != 0.0 && cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64 {
            *slot = ((cy as usize * width + cx as usize) as u32, wt as f32);
        }
    }
    out
}

pub fn warp_tables(
    width: usize,
    height: usize,
    depths: &[f64],
    pose: &RelativePose,
    cam: &CameraModel,
) -> Result<Vec<WarpTable>> {
    depths
        .iter()
        .map(|&d| WarpTable::new(width, height, cam, pose, d))
        .collect()
}

/// Back-to-front over compositing of `[P, 4, H, W]` straight-alpha planes
/// into a `[3, H, W]` image.
pub fn composite_planes<T: Scalar>(planes: &[T], num_planes: usize, hw: usize, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for i in 0..num_planes {
        let p = &planes[i * 4 * hw..(i + 1) * 4 * hw];
        let alpha = &p[3 * hw..];
        for c in 0..3 {
            let color = &p[c * hw..(c + 1) * hw];
            let dst = &mut out[c * hw..(c + 1) * hw];
            for k in 0..hw {
                let a = alpha[k];
                dst[k] = color[k] * a + dst[k] * (T::one() - a);
            }
        }
    }
}

/// Gradient of [`composite_planes`]: `dC/dc_i = a_i T_i` and
/// `dC/da_i = T_i (c_i - A_{i-1})`, where `T_i` is the transmittance of the
/// planes in front of `i` and `A_{i-1}` the composite of the planes behind.
fn composite_planes_adjoint<T: Scalar>(
    planes: &[T],
    num_planes: usize,
    hw: usize,
    g: &[T],
    gx: &mut [T],
) {
    let mut trans = vec![T::zero(); num_planes * hw];
    let mut run = vec![T::one(); hw];
    for i in (0..num_planes).rev() {
        trans[i * hw..(i + 1) * hw].copy_from_slice(&run);
        let alpha = &planes[(i * 4 + 3) * hw..(i * 4 + 4) * hw];
        for k in 0..hw {
            run[k] *= T::one() - alpha[k];
        }
    }
    let mut behind = vec![T::zero(); 3 * hw];
    for i in 0..num_planes {
        let p = &planes[i * 4 * hw..(i + 1) * 4 * hw];
        let t = &trans[i * hw..(i + 1) * hw];
        let gp = &mut gx[i * 4 * hw..(i + 1) * 4 * hw];
        let (gcolor, galpha) = gp.split_at_mut(3 * hw);
        let alpha = &p[3 * hw..];
        for c in 0..3 {
            let color = &p[c * hw..(c + 1) * hw];
            let gc = &g[c * hw..(c + 1) * hw];
            let acc = &mut behind[c * hw..(c + 1) * hw];
            for k in 0..hw {
                gcolor[c * hw + k] += gc[k] * alpha[k] * t[k];
                galpha[k] += gc[k] * t[k] * (color[k] - acc[k]);
                acc[k] = color[k] * alpha[k] + acc[k] * (T::one() - alpha[k]);
            }
        }
    }
}

fn check_mpi_tensor<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    if x.shape().len() != 4 || !x.shape()[1].is_multiple_of(4) || x.shape()[1] == 0 {
        return Err(Error::shape(format!(
            "expected [N, 4P, H, W], got {:?}",
            x.shape()
        )));
    }
    let (n, c, h, w) = x.dims4();
    Ok((n, c / 4, h, w))
}

/// Differentiable over compositing: `[N, 4P, H, W]` to `[N, 3, H, W]`.
pub fn composite_tensor<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, p, h, w) = check_mpi_tensor(x)?;
    let hw = h * w;
    let mut out = vec![T::zero(); n * 3 * hw];
    for b in 0..n {
        composite_planes(
            &x.data()[b * 4 * p * hw..(b + 1) * 4 * p * hw],
            p,
            hw,
            &mut out[b * 3 * hw..(b + 1) * 3 * hw],
        );
    }
    let input = x.clone();
    Ok(Tensor::from_op(&[x], &[n, 3, h, w], out, move |g, _| {
        let xd = input.data();
        let mut gx = vec![T::zero(); xd.len()];
        for b in 0..n {
            let r = b * 4 * p * hw..(b + 1) * 4 * p * hw;
            composite_planes_adjoint(
                &xd[r.clone()],
                p,
                hw,
                &g[b * 3 * hw..(b + 1) * 3 * hw],
                &mut gx[r],
            );
        }
        vec![Some(gx)]
    }))
}

/// Differentiable per-plane warp of `[N, 4P, H, W]`; table `i` applies to
/// all four channels of plane `i` in every batch element.
pub fn warp_planes_tensor<T: Scalar>(
    x: &Tensor<T>,
    tables: Rc<Vec<WarpTable>>,
) -> Result<Tensor<T>> {
    let (n, p, h, w) = check_mpi_tensor(x)?;
    if tables.len() != p || tables.iter().any(|t| (t.width, t.height) != (w, h)) {
        return Err(Error::shape(format!(
            "{} warp tables do not fit an MPI of {p} planes at {w}x{h}",
            tables.len()
        )));
    }
    if tables.iter().all(WarpTable::is_identity) {
        return Ok(x.clone());
    }
    let hw = h * w;
    let mut out = vec![T::zero(); x.numel()];
    for (k, (src, dst)) in x.data().chunks(hw).zip(out.chunks_mut(hw)).enumerate() {
        tables[(k / 4) % p].apply(src, dst);
    }
    Ok(Tensor::from_op(&[x], x.shape(), out, move |g, _| {
        let mut gx = vec![T::zero(); n * 4 * p * hw];
        for (k, (gs, gd)) in g.chunks(hw).zip(gx.chunks_mut(hw)).enumerate() {
            tables[(k / 4) % p].apply_adjoint(gs, gd);
        }
        vec![Some(gx)]
    }))
}

/// Differentiable novel-view render of an `[N, 4P, H, W]` MPI tensor.
pub fn render_tensor<T: Scalar>(
    x: &Tensor<T>,
    depths: &[f64],
    pose: &RelativePose,
    cam: &CameraModel,
) -> Result<Tensor<T>> {
    let (_, p, h, w) = check_mpi_tensor(x)?;
    if p != depths.len() {
        return Err(Error::shape(format!(
            "{p} planes but {} depths",
            depths.len()
        )));
    }
    if pose.is_identity() {
        return composite_tensor(x);
    }
    let tables = Rc::new(warp_tables(w, h, depths, pose, cam)?);
    composite_tensor(&warp_planes_tensor(x, tables)?)
}

/// Over-composites the stack into an RGB image.
pub fn composite(mpi: &MpiStack) -> Image {
    let hw = mpi.width() * mpi.height();
    let mut out = vec![0.0f32; 3 * hw];
    composite_planes(mpi.data(), mpi.num_planes(), hw, &mut out);
    Image::new(mpi.width(), mpi.height(), 3, out)
        .expect("valid image")
        .clamp01()
}

/// Warps an RGBA plane at `depth` into the target view.
pub fn warp_plane(
    plane: &Image,
    depth: f64,
    pose: &RelativePose,
    cam: &CameraModel,
) -> Result<Image> {
    let (w, h, c) = plane.dims();
    let table = WarpTable::new(w, h, cam, pose, depth)?;
    let mut out = vec![0.0f32; w * h * c];
    for (src, dst) in plane.data().chunks(w * h).zip(out.chunks_mut(w * h)) {
        table.apply(src, dst);
    }
    Image::new(w, h, c, out)
}

/// Warps every plane by its depth and composites the result.
pub fn render_novel_view(mpi: &MpiStack, pose: &RelativePose, cam: &CameraModel) -> Result<Image> {
    if pose.is_identity() {
        return Ok(composite(mpi));
    }
    let (w, h) = (mpi.width(), mpi.height());
    let hw = w * h;
    let mut warped = vec![0.0f32; mpi.data().len()];
    for (i, &d) in mpi.depths().iter().enumerate() {
        let table = WarpTable::new(w, h, cam, pose, d)?;
        for c in 0..4 {
            let r = (i * 4 + c) * hw..(i * 4 + c + 1) * hw;
            table.apply(&mpi.data()[r.clone()], &mut warped[r]);
        }
    }
    let mut out = vec![0.0f32; 3 * hw];
    composite_planes(&warped, mpi.num_planes(), hw, &mut out);
    Ok(Image::new(w, h, 3, out)?.clamp01())
}
