use mpijpeg_tensor::{Scalar, Tensor};

use super::transform::{analyze, linear_chain, synthesize};
use super::{quant_tables_for_quality, JpegConfig};
use crate::error::{Error, Result};
use crate::image::to_u8;

/// Straight-through rounding onto the 8-bit grid: `round(255 x) / 255`
/// forward, identity backward.
pub fn quantize_8bit<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.round_ste(255.0)
}

/// Differentiable JPEG round trip of an `[N, 3, H, W]` batch in `[0, 1]`.
///
/// The forward pass rounds the input to 8 bits and then runs exactly the
/// sample arithmetic of [`jpeg_encode`](super::jpeg_encode) followed by
/// [`jpeg_decode`](super::jpeg_decode), stopping short of the final
/// rounding to integers. The backward pass treats every rounding as the
/// identity, giving the exact gradient of the rounding-free pipeline
/// (including its final clamp to `[0, 1]`).
pub fn jpeg_simulate<T: Scalar>(x: &Tensor<T>, cfg: &JpegConfig) -> Result<Tensor<T>> {
    if x.shape().len() != 4 || x.shape()[1] != 3 {
        return Err(Error::shape(format!(
            "JPEG simulation expects [N, 3, H, W], got {:?}",
            x.shape()
        )));
    }
    let (n, _, h, w) = x.dims4();
    let tables = quant_tables_for_quality(cfg.quality)?;
    let cfg = *cfg;
    let len = 3 * h * w;
    let mut out = Vec::with_capacity(n * len);
    let mut mask = Vec::with_capacity(n * len);
    for img in x.data().chunks(len) {
        let samples: Vec<f64> = img
            .iter()
            .map(|v| to_u8(v.as_f64() as f32) as f64)
            .collect();
        let frame = analyze(&samples, w, h, &cfg, &tables, true);
        out.extend(
            synthesize(&frame)
                .iter()
                .map(|&v| T::from_f64_lossy(v.clamp(0.0, 255.0) / 255.0)),
        );
        let free: Vec<f64> = img.iter().map(|v| v.as_f64()).collect();
        mask.extend(
            linear_chain(&free, w, h, &cfg, false)
                .iter()
                .map(|&v| (0.0..=1.0).contains(&v)),
        );
    }
    Ok(Tensor::from_op(&[x], x.shape(), out, move |g, _| {
        let mut gx = Vec::with_capacity(g.len());
        for (gi, mi) in g.chunks(len).zip(mask.chunks(len)) {
            let masked: Vec<f64> = gi
                .iter()
                .zip(mi)
                .map(|(v, &m)| if m { v.as_f64() } else { 0.0 })
                .collect();
            gx.extend(
                linear_chain(&masked, w, h, &cfg, true)
                    .into_iter()
                    .map(T::from_f64_lossy),
            );
        }
        vec![Some(gx)]
    }))
}

/// The simulation with every rounding removed, evaluated through the full
/// DCT path: three `[0, 1]` planes in, three clamped planes out.
pub fn simulate_rounding_free(
    rgb: &[f64],
    width: usize,
    height: usize,
    cfg: &JpegConfig,
) -> Result<Vec<f64>> {
    let tables = quant_tables_for_quality(cfg.quality)?;
    let samples: Vec<f64> = rgb.iter().map(|v| v * 255.0).collect();
    let frame = analyze(&samples, width, height, cfg, &tables, false);
    Ok(synthesize(&frame)
        .iter()
        .map(|v| v.clamp(0.0, 255.0) / 255.0)
        .collect())
}
