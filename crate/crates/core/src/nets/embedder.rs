use mpijpeg_tensor::{ParamStore, Scalar, Tensor};
use rand::Rng;

use super::{check_multiple, fuse_features, split_rgba, Conv, NetConfig, ResBlock, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Hides an MPI in a 3-channel image that resembles the reference photo.
///
/// Each plane's colours go through their own two-layer branch (no shared
/// weights); the branch features are fused with the alphas, concatenated
/// with alpha and reference features, and passed through an hourglass
/// trunk with skip connections.
#[derive(Clone, Debug)]
pub struct Embedder<T: Scalar = f32> {
    pub params: ParamStore<T>,
    config: NetConfig,
    branch: [Conv; 2],
    alpha: [Conv; 2],
    reference: [Conv; 2],
    down: [Conv; 2],
    res: Vec<ResBlock>,
    up: [Conv; 2],
    head: Conv,
}

impl<T: Scalar> Embedder<T> {
    pub fn new<R: Rng>(config: &NetConfig, rng: &mut R) -> Self {
        let mut ps = ParamStore::new();
        let p = config.num_planes;
        let [b1, b2] = config.branch_channels;
        let [e1, e2] = config.extractor_channels;
        let t = config.trunk_channels;
        let bk = config.branch_kernel;
        let fused = b2 + 2 * e2;
        let ps_ = &mut ps;
        let branch = [
            Conv::new(ps_, "embedder.branch.0", 3 * p, b1 * p, bk, 1, p, rng),
            Conv::new(ps_, "embedder.branch.1", b1 * p, b2 * p, bk, 1, p, rng),
        ];
        let alpha = [
            Conv::new(ps_, "embedder.alpha.0", p, e1, 3, 1, 1, rng),
            Conv::new(ps_, "embedder.alpha.1", e1, e2, 3, 1, 1, rng),
        ];
        let reference = [
            Conv::new(ps_, "embedder.ref.0", 3, e1, 3, 1, 1, rng),
            Conv::new(ps_, "embedder.ref.1", e1, e2, 3, 1, 1, rng),
        ];
        let down = [
            Conv::new(ps_, "embedder.down.0", fused, t, 3, 2, 1, rng),
            Conv::new(ps_, "embedder.down.1", t, t, 3, 2, 1, rng),
        ];
        let res = (0..config.trunk_res_blocks)
            .map(|i| ResBlock::new(ps_, &format!("embedder.res.{i}"), t, rng))
            .collect();
        let up = [
            Conv::new(ps_, "embedder.up.0", t, t, 3, 1, 1, rng),
            Conv::new(ps_, "embedder.up.1", 2 * t, t, 3, 1, 1, rng),
        ];
        let head = Conv::new(ps_, "embedder.head", t + fused, 3, 3, 1, 1, rng);
        Embedder {
            params: ps,
            config: config.clone(),
            branch,
            alpha,
            reference,
            down,
            res,
            up,
            head,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Per-plane branch features `s_i`, plane-major: `[N, P*C, H, W]`.
    pub fn branch_features(&self, rgb: &Tensor<T>) -> Tensor<T> {
        let ps = &self.params;
        let h = self.branch[0].forward(ps, rgb).leaky_relu(LEAKY_SLOPE);
        self.branch[1].forward(ps, &h).leaky_relu(LEAKY_SLOPE)
    }

    /// Embedding image `[N, 3, H, W]` in `(0, 1)` from an MPI tensor
    /// `[N, 4P, H, W]` and the reference `[N, 3, H, W]`. Height and width
    /// must be multiples of 4. The head predicts a correction to the
    /// reference in logit space.
    pub fn forward(&self, mpi: &Tensor<T>, reference: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = check_multiple(mpi, 4, "embedder input")?;
        if c != 4 * self.config.num_planes || reference.shape() != [n, 3, h, w] {
            return Err(Error::shape(format!(
                "embedder expects an MPI of [N, {}, H, W] and a matching [N, 3, H, W] reference, got {:?} and {:?}",
                4 * self.config.num_planes,
                mpi.shape(),
                reference.shape()
            )));
        }
        let ps = &self.params;
        let act = |conv: &Conv, x: &Tensor<T>| conv.forward(ps, x).leaky_relu(LEAKY_SLOPE);
        let (rgb, alphas) = split_rgba(mpi)?;
        let s_rgb = fuse_features(&self.branch_features(&rgb), &alphas)?;
        let s_alpha = act(&self.alpha[1], &act(&self.alpha[0], &alphas));
        let s_ref = act(&self.reference[1], &act(&self.reference[0], reference));
        let x0 = Tensor::concat(&[&s_rgb, &s_alpha, &s_ref], 1);
        let d1 = act(&self.down[0], &x0);
        let mut y = act(&self.down[1], &d1);
        for block in &self.res {
            y = block.forward(ps, &y);
        }
        let u1 = act(&self.up[0], &y.upsample_bilinear2x());
        let u1 = Tensor::concat(&[&u1, &d1], 1);
        let u2 = act(&self.up[1], &u1.upsample_bilinear2x());
        let out = self.head.forward(ps, &Tensor::concat(&[&u2, &x0], 1));
        Ok(out.add(&reference_logits(reference)).sigmoid())
    }
}

/// Logit of the reference, clamped away from 0 and 1; a constant.
fn reference_logits<T: Scalar>(reference: &Tensor<T>) -> Tensor<T> {
    let eps = T::from_f64(1e-3).unwrap();
    let one = T::one();
    let data = reference
        .data()
        .iter()
        .map(|&r| {
            let r = r.max(eps).min(one - eps);
            (r / (one - r)).ln()
        })
        .collect();
    Tensor::from_vec(data, reference.shape())
}
