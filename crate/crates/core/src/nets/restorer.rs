use mpijpeg_tensor::{ParamStore, Scalar, Tensor};
use rand::Rng;

use super::{check_multiple, Conv, NetConfig, ResBlock, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Recovers the MPI planes from a (possibly compressed, edited, cropped)
/// embedding image. Fully convolutional at stride 1.
#[derive(Clone, Debug)]
pub struct Restorer<T: Scalar = f32> {
    pub params: ParamStore<T>,
    config: NetConfig,
    stem: Conv,
    res: Vec<ResBlock>,
    flat: Conv,
    head: Conv,
}

impl<T: Scalar> Restorer<T> {
    pub fn new<R: Rng>(config: &NetConfig, rng: &mut R) -> Self {
        let mut ps = ParamStore::new();
        let c = config.restorer_channels;
        let stem = Conv::new(&mut ps, "restorer.stem", 3, c, 3, 1, 1, rng);
        let res = (0..config.restorer_res_blocks)
            .map(|i| ResBlock::new(&mut ps, &format!("restorer.res.{i}"), c, rng))
            .collect();
        let flat = Conv::new(&mut ps, "restorer.flat", c, c, 3, 1, 1, rng);
        let head = Conv::new(
            &mut ps,
            "restorer.head",
            2 * c,
            4 * config.num_planes,
            config.restorer_head_kernel,
            1,
            1,
            rng,
        );
        Restorer {
            params: ps,
            config: config.clone(),
            stem,
            res,
            flat,
            head,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// `[N, 3, H, W]` to an MPI tensor `[N, 4P, H, W]` in `(0, 1)`; height
    /// and width must be multiples of 8.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = check_multiple(x, 8, "restorer input")?;
        if c != 3 {
            return Err(Error::shape(format!(
                "restorer expects 3 channels, got {c}"
            )));
        }
        let ps = &self.params;
        let f0 = self.stem.forward(ps, x).leaky_relu(LEAKY_SLOPE);
        let mut y = f0.clone();
        for (i, block) in self.res.iter().enumerate() {
            y = block.forward(ps, &y);
            // a long skip halfway through the stack
            if i + 1 == self.res.len() / 2 {
                y = y.add(&f0);
            }
        }
        let y = self.flat.forward(ps, &y).leaky_relu(LEAKY_SLOPE);
        Ok(self
            .head
            .forward(ps, &Tensor::concat(&[&y, &f0], 1))
            .sigmoid())
    }
}
