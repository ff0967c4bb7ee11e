use std::path::Path;

use mpijpeg_tensor::{ParamStore, Scalar, Tensor};
use rand::Rng;

use super::{dims4_checked, Conv, NetConfig};
use crate::error::{Error, Result};
use crate::weights::TensorArchive;

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// A VGG-style feature stack: four stages of 3x3 convolutions with ReLU,
/// separated by 2x max pooling. Its weights never train.
#[derive(Clone, Debug)]
pub struct Perceptual<T: Scalar = f32> {
    pub params: ParamStore<T>,
    stages: Vec<Vec<Conv>>,
}

impl<T: Scalar> Perceptual<T> {
    /// Fixed random weights drawn from `rng`.
    pub fn new<R: Rng>(config: &NetConfig, rng: &mut R) -> Self {
        let mut ps = ParamStore::new();
        let mut cin = 3;
        let stages = config
            .perceptual_channels
            .iter()
            .zip(&config.perceptual_convs)
            .enumerate()
            .map(|(s, (&cout, &convs))| {
                (0..convs)
                    .map(|i| {
                        let conv = Conv::new(
                            &mut ps,
                            &format!("perceptual.{s}.{i}"),
                            cin,
                            cout,
                            3,
                            1,
                            1,
                            rng,
                        );
                        cin = cout;
                        conv
                    })
                    .collect()
            })
            .collect();
        Perceptual { params: ps, stages }
    }

    /// Replaces the weights with those stored in an archive under the same
    /// names (`perceptual.<stage>.<conv>.weight|bias`).
    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        TensorArchive::read(path)?.load_store(&mut self.params)
    }

    /// Feature maps after each stage, at full, 1/2, 1/4 and 1/8 resolution
    /// (pooling stops once a side is down to one pixel).
    pub fn features(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (n, c, h, w) = dims4_checked(image, "perceptual input")?;
        if c != 3 {
            return Err(Error::shape(format!(
                "perceptual features need 3 channels, got {c}"
            )));
        }
        let shift: Vec<T> = IMAGENET_MEAN
            .iter()
            .map(|&m| T::from_f64_lossy(-m))
            .collect();
        let scale: Vec<T> = IMAGENET_STD
            .iter()
            .map(|&s| T::from_f64_lossy(1.0 / s))
            .collect();
        let mut x = image
            .add_b(&Tensor::from_vec(shift, &[1, 3, 1, 1]))
            .mul_b(&Tensor::from_vec(scale, &[1, 3, 1, 1]));
        debug_assert_eq!(x.shape(), [n, 3, h, w]);
        let mut out = Vec::with_capacity(self.stages.len());
        for (s, convs) in self.stages.iter().enumerate() {
            let (_, _, xh, xw) = x.dims4();
            if s > 0 && xh >= 2 && xw >= 2 {
                x = x.max_pool2();
            }
            for conv in convs {
                x = conv.forward(&self.params, &x).relu();
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}
