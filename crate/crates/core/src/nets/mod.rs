//! The trainable networks: embedding, restoration, patch discriminator, and
//! the frozen perceptual feature extractor.

mod discriminator;
mod embedder;
mod perceptual;
mod restorer;

use mpijpeg_tensor::{Conv2dArgs, ParamId, ParamStore, Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use discriminator::Discriminator;
pub use embedder::Embedder;
pub use perceptual::Perceptual;
pub use restorer::Restorer;

/// Slope of every leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Channel widths and depths of all networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub num_planes: usize,
    /// Hidden and output widths of each per-plane colour branch.
    pub branch_channels: [usize; 2],
    /// Kernel size of the colour branch convolutions.
    pub branch_kernel: usize,
    /// Hidden and output widths of the alpha and reference extractors.
    pub extractor_channels: [usize; 2],
    pub trunk_channels: usize,
    pub trunk_res_blocks: usize,
    pub restorer_channels: usize,
    pub restorer_res_blocks: usize,
    /// Kernel size of the layer that emits the restored planes.
    pub restorer_head_kernel: usize,
    /// Widths of the four stride-2 layers of each discriminator scale.
    pub disc_channels: [usize; 4],
    pub disc_scales: usize,
    /// Widths of the four perceptual stages.
    pub perceptual_channels: [usize; 4],
    /// Convolutions per perceptual stage.
    pub perceptual_convs: [usize; 4],
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            num_planes: crate::NUM_PLANES,
            branch_channels: [16, 32],
            branch_kernel: 3,
            extractor_channels: [16, 32],
            trunk_channels: 64,
            trunk_res_blocks: 4,
            restorer_channels: 64,
            restorer_res_blocks: 8,
            restorer_head_kernel: 3,
            disc_channels: [64, 128, 256, 512],
            disc_scales: 2,
            perceptual_channels: [64, 128, 256, 512],
            perceptual_convs: [2, 2, 4, 4],
        }
    }
}

impl NetConfig {
    /// Narrow networks for single-core CPU training: fewer channels,
    /// pointwise colour branches and output head, half the restorer blocks.
    pub fn desk() -> Self {
        NetConfig {
            branch_channels: [4, 8],
            branch_kernel: 1,
            restorer_head_kernel: 1,
            extractor_channels: [8, 8],
            trunk_channels: 24,
            trunk_res_blocks: 4,
            restorer_channels: 16,
            restorer_res_blocks: 4,
            disc_channels: [8, 16, 32, 32],
            disc_scales: 2,
            perceptual_channels: [8, 16, 32, 32],
            perceptual_convs: [1, 1, 1, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self
            .branch_channels
            .iter()
            .chain(&self.extractor_channels)
            .chain(&self.disc_channels)
            .chain(&self.perceptual_channels)
            .chain(&self.perceptual_convs)
            .chain([
                &self.num_planes,
                &self.trunk_channels,
                &self.restorer_channels,
                &self.disc_scales,
            ]);
        if self.branch_kernel.is_multiple_of(2) || self.restorer_head_kernel.is_multiple_of(2) {
            return Err(Error::Config(
                "branch and restorer head kernels must be odd".into(),
            ));
        }
        if widths.copied().any(|w| w == 0) {
            return Err(Error::Config(
                "network widths, depths and plane count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A convolution with bias, its weights living in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Conv {
    weight: ParamId,
    bias: ParamId,
    args: Conv2dArgs,
}

impl Conv {
    /// He-initialized `k x k` convolution with "same" padding.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin / groups * k * k;
        let std = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE) / fan_in as f64).sqrt();
        Conv {
            weight: store.add_normal(
                format!("{name}.weight"),
                &[cout, cin / groups, k, k],
                std,
                rng,
            ),
            bias: store.add_zeros(format!("{name}.bias"), &[cout]),
            args: Conv2dArgs::same(k).with_stride(stride).with_groups(groups),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        x.conv2d(
            store.get(self.weight),
            Some(store.get(self.bias)),
            self.args,
        )
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }
}

/// `x + conv(lrelu(conv(x)))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    a: Conv,
    b: Conv,
}

impl ResBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        ResBlock {
            a: Conv::new(
                store,
                &format!("{name}.a"),
                channels,
                channels,
                3,
                1,
                1,
                rng,
            ),
            b: Conv::new(
                store,
                &format!("{name}.b"),
                channels,
                channels,
                3,
                1,
                1,
                rng,
            ),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        let h = self.a.forward(store, x).leaky_relu(LEAKY_SLOPE);
        x.add(&self.b.forward(store, &h))
    }
}

/// Splits an `[N, 4P, H, W]` MPI tensor (plane-major RGBA) into colours
/// `[N, 3P, H, W]` and alphas `[N, P, H, W]`.
pub fn split_rgba<T: Scalar>(mpi: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = dims4_checked(mpi, "MPI tensor")?;
    if c % 4 != 0 {
        return Err(Error::shape(format!(
            "MPI tensor has {c} channels, not a multiple of 4"
        )));
    }
    let p = c / 4;
    let planes = mpi.reshape(&[n, p, 4, h * w]);
    let rgb = planes.narrow(2, 0, 3).reshape(&[n, 3 * p, h, w]);
    let alpha = planes.narrow(2, 3, 1).reshape(&[n, p, h, w]);
    Ok((rgb, alpha))
}

/// Alpha-weighted feature fusion: `out = sum_i alpha_i * s_i` where
/// `features` is `[N, P*C, H, W]` (plane-major) and `alphas` is
/// `[N, P, H, W]`, each alpha broadcast over its plane's `C` channels.
pub fn fuse_features<T: Scalar>(features: &Tensor<T>, alphas: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, pc, h, w) = dims4_checked(features, "features")?;
    let (an, p, ah, aw) = dims4_checked(alphas, "alphas")?;
    if an != n || ah != h || aw != w || p == 0 || pc % p != 0 {
        return Err(Error::shape(format!(
            "cannot fuse features {:?} with alphas {:?}",
            features.shape(),
            alphas.shape()
        )));
    }
    let c = pc / p;
    let hw = h * w;
    let s = features.data();
    let a = alphas.data();
    let mut out = vec![T::zero(); n * c * hw];
    for b in 0..n {
        for i in 0..p {
            let ai = &a[(b * p + i) * hw..(b * p + i + 1) * hw];
            for ch in 0..c {
                let si = &s[((b * p + i) * c + ch) * hw..((b * p + i) * c + ch + 1) * hw];
                let o = &mut out[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                for k in 0..hw {
                    o[k] += ai[k] * si[k];
                }
            }
        }
    }
    let (fs, fa) = (features.clone(), alphas.clone());
    let (need_s, need_a) = (features.requires_grad(), alphas.requires_grad());
    Ok(Tensor::from_op(
        &[features, alphas],
        &[n, c, h, w],
        out,
        move |g, _| {
            let s = fs.data();
            let a = fa.data();
            let mut gs = need_s.then(|| vec![T::zero(); n * pc * hw]);
            let mut ga = need_a.then(|| vec![T::zero(); n * p * hw]);
            for b in 0..n {
                for i in 0..p {
                    for ch in 0..c {
                        let go = &g[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                        let si = ((b * p + i) * c + ch) * hw;
                        let ai = (b * p + i) * hw;
                        for k in 0..hw {
                            if let Some(gs) = gs.as_mut() {
                                gs[si + k] = go[k] * a[ai + k];
                            }
                            if let Some(ga) = ga.as_mut() {
                                ga[ai + k] += go[k] * s[si + k];
                            }
                        }
                    }
                }
            }
            vec![gs, ga]
        },
    ))
}

fn dims4_checked<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize, usize)> {
    if t.shape().len() != 4 {
        return Err(Error::shape(format!(
            "{what} must be [N, C, H, W], got {:?}",
            t.shape()
        )));
    }
    Ok(t.dims4())
}

/// Errors unless the spatial size of `x` is a positive multiple of `m`.
fn check_multiple<T: Scalar>(
    x: &Tensor<T>,
    m: usize,
    what: &str,
) -> Result<(usize, usize, usize, usize)> {
    let dims = dims4_checked(x, what)?;
    let (_, _, h, w) = dims;
    if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::shape(format!(
            "{what} must be a multiple of {m} in height and width, got {w}x{h}"
        )));
    }
    Ok(dims)
}
