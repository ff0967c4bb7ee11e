use mpijpeg_tensor::{ParamStore, Scalar, Tensor};
use rand::Rng;

use super::{dims4_checked, Conv, NetConfig, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Smallest accepted input side.
pub const MIN_DISCRIMINATOR_SIDE: usize = 64;

/// Multi-scale patch discriminator: the same layout applied to the image
/// and to successive 2x average-pooled copies, each scale with its own
/// weights and its own map of per-patch logits.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Scalar = f32> {
    pub params: ParamStore<T>,
    scales: Vec<(Vec<Conv>, Conv)>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng>(config: &NetConfig, rng: &mut R) -> Self {
        let mut ps = ParamStore::new();
        let scales = (0..config.disc_scales)
            .map(|s| {
                let mut cin = 3;
                let layers = config
                    .disc_channels
                    .iter()
                    .enumerate()
                    .map(|(i, &cout)| {
                        let conv =
                            Conv::new(&mut ps, &format!("disc.{s}.{i}"), cin, cout, 3, 2, 1, rng);
                        cin = cout;
                        conv
                    })
                    .collect();
                (
                    layers,
                    Conv::new(&mut ps, &format!("disc.{s}.logits"), cin, 1, 3, 1, 1, rng),
                )
            })
            .collect();
        Discriminator { params: ps, scales }
    }

    /// One `[N, 1, h, w]` logit map per scale, finest first.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (_, c, h, w) = dims4_checked(image, "discriminator input")?;
        if c != 3 || h < MIN_DISCRIMINATOR_SIDE || w < MIN_DISCRIMINATOR_SIDE {
            return Err(Error::shape(format!(
                "discriminator needs a 3-channel image of at least {MIN_DISCRIMINATOR_SIDE}x{MIN_DISCRIMINATOR_SIDE}, got {:?}",
                image.shape()
            )));
        }
        let ps = &self.params;
        let mut x = image.clone();
        let mut maps = Vec::with_capacity(self.scales.len());
        for (i, (layers, logits)) in self.scales.iter().enumerate() {
            if i > 0 {
                x = x.avg_pool2();
            }
            let mut y = x.clone();
            for conv in layers {
                y = conv.forward(ps, &y).leaky_relu(LEAKY_SLOPE);
            }
            maps.push(logits.forward(ps, &y));
        }
        Ok(maps)
    }
}
