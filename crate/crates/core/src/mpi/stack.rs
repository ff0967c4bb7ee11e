use mpijpeg_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::{NUM_PLANES, PREMERGE_PLANES};

/// Default plane depths: uniform in inverse depth between `far` and `near`,
/// index 0 farthest.
pub fn inverse_depth_planes(count: usize, near: f64, far: f64) -> Vec<f64> {
    if count == 1 {
        return vec![far];
    }
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            1.0 / ((1.0 - t) / far + t / near)
        })
        .collect()
}

pub fn default_depths(count: usize) -> Vec<f64> {
    inverse_depth_planes(count, 1.0, 100.0)
}

/// A stack of fronto-parallel RGBA planes (straight alpha) ordered far to
/// near, stored as `[P, 4, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpiStack {
    width: usize,
    height: usize,
    depths: Vec<f64>,
    data: Vec<f32>,
}

impl MpiStack {
    /// A standard 32-plane stack.
    pub fn new(width: usize, height: usize, depths: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        if depths.len() != NUM_PLANES {
            return Err(Error::shape(format!(
                "an MPI has {NUM_PLANES} planes, got {}",
                depths.len()
            )));
        }
        Self::with_planes(width, height, depths, data)
    }

    /// A 128-plane stack awaiting [`merge_planes`](super::merge_planes).
    pub fn new_premerge(
        width: usize,
        height: usize,
        depths: Vec<f64>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if depths.len() != PREMERGE_PLANES {
            return Err(Error::shape(format!(
                "a pre-merge stack has {PREMERGE_PLANES} planes, got {}",
                depths.len()
            )));
        }
        Self::with_planes(width, height, depths, data)
    }

    /// Any plane count; used for small fixtures and intermediate results.
    pub fn with_planes(
        width: usize,
        height: usize,
        depths: Vec<f64>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let p = depths.len();
        if p == 0 || width == 0 || height == 0 {
            return Err(Error::shape(format!(
                "empty MPI {width}x{height} with {p} planes"
            )));
        }
        if data.len() != p * 4 * width * height {
            return Err(Error::shape(format!(
                "MPI buffer has {} values, expected {p}x4x{height}x{width}",
                data.len()
            )));
        }
        if depths.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Config(format!(
                "plane depths must be positive: {depths:?}"
            )));
        }
        if depths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "plane depths must strictly decrease from far to near".into(),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("MPI value {v} outside [0, 1]")));
        }
        Ok(MpiStack {
            width,
            height,
            depths,
            data,
        })
    }

    /// Builds a stack from per-plane RGBA images.
    pub fn from_planes(planes: &[Image], depths: Vec<f64>) -> Result<Self> {
        let first = planes.first().ok_or_else(|| Error::shape("no planes"))?;
        if planes.len() != depths.len() {
            return Err(Error::shape(format!(
                "{} planes but {} depths",
                planes.len(),
                depths.len()
            )));
        }
        let mut data = Vec::with_capacity(planes.len() * first.data().len());
        for p in planes {
            if p.dims() != (first.width(), first.height(), 4) {
                return Err(Error::shape(format!(
                    "plane is {:?}, expected {}x{}x4",
                    p.dims(),
                    first.width(),
                    first.height()
                )));
            }
            data.extend_from_slice(p.data());
        }
        Self::with_planes(first.width(), first.height(), depths, data)
    }

    /// Stack `index` of an `[N, 4P, H, W]` tensor. Values are clamped into
    /// `[0, 1]` to absorb rounding at the activation limits.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, index: usize, depths: Vec<f64>) -> Result<Self> {
        let [n, c, h, w] = *t.shape() else {
            return Err(Error::shape(format!(
                "expected [N, 4P, H, W], got {:?}",
                t.shape()
            )));
        };
        if c != 4 * depths.len() || index >= n {
            return Err(Error::shape(format!(
                "tensor {:?} does not hold {} planes at batch index {index}",
                t.shape(),
                depths.len()
            )));
        }
        let len = c * h * w;
        let data = t.data()[index * len..(index + 1) * len]
            .iter()
            .map(|v| (v.as_f64() as f32).clamp(0.0, 1.0))
            .collect();
        Self::with_planes(w, h, depths, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_planes(&self) -> usize {
        self.depths.len()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn plane_len(&self) -> usize {
        4 * self.width * self.height
    }

    /// RGBA values of plane `i`, channel-planar.
    pub fn plane_data(&self, i: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn plane(&self, i: usize) -> Image {
        Image::new(self.width, self.height, 4, self.plane_data(i).to_vec()).expect("valid plane")
    }

    pub fn planes(&self) -> Vec<Image> {
        (0..self.num_planes()).map(|i| self.plane(i)).collect()
    }

    pub fn alpha(&self, i: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.plane_data(i)[3 * n..4 * n]
    }

    /// `[1, 4P, H, W]` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(
            self.data
                .iter()
                .map(|&v| T::from_f64_lossy(v as f64))
                .collect(),
            &[1, 4 * self.num_planes(), self.height, self.width],
        )
    }

    pub fn batch_to_tensor<T: Scalar>(stacks: &[&MpiStack]) -> Result<Tensor<T>> {
        let first = stacks
            .first()
            .ok_or_else(|| Error::shape("empty MPI batch"))?;
        let mut data = Vec::with_capacity(stacks.len() * first.data.len());
        for s in stacks {
            if (s.width, s.height, s.num_planes())
                != (first.width, first.height, first.num_planes())
            {
                return Err(Error::shape("MPI batch members differ in shape"));
            }
            data.extend(s.data.iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        Ok(Tensor::from_vec(
            data,
            &[
                stacks.len(),
                4 * first.num_planes(),
                first.height,
                first.width,
            ],
        ))
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<MpiStack> {
        let planes = self
            .planes()
            .iter()
            .map(|p| p.crop(x0, y0, w, h))
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(&planes, self.depths.clone())
    }

    /// Squared L2 distance between the raw plane values of two stacks.
    pub fn l2_distance_sq(&self, other: &MpiStack) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_depths_are_inverse_linear() {
        let d = default_depths(32);
        assert_eq!(d.len(), 32);
        assert!((d[0] - 100.0).abs() < 1e-9 && (d[31] - 1.0).abs() < 1e-12);
        let step = 1.0 / d[1] - 1.0 / d[0];
        for w in d.windows(2) {
            assert!((1.0 / w[1] - 1.0 / w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn invariants_are_enforced() {
        let d = default_depths(32);
        let n = 32 * 4 * 2 * 2;
        assert!(MpiStack::new(2, 2, d.clone(), vec![0.5; n]).is_ok());
        assert!(MpiStack::new(2, 2, d[..31].to_vec(), vec![0.5; n - 16]).is_err());
        let mut bad = vec![0.5; n];
        bad[7] = 1.5;
        assert!(MpiStack::new(2, 2, d.clone(), bad).is_err());
        let mut rev = d.clone();
        rev.reverse();
        assert!(MpiStack::new(2, 2, rev, vec![0.5; n]).is_err());
        assert!(MpiStack::new(2, 2, d, vec![0.5; n + 1]).is_err());
    }
}
