//! Training objectives. Every norm is mean-reduced per element so the
//! weights do not depend on resolution.

use std::rc::Rc;
use std::sync::Arc;

use mpijpeg_tensor::{Scalar, Tensor};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpi::{render_tensor, CameraModel, RelativePose};
use crate::nets::{split_rgba, Perceptual};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub reg: f64,
    pub perceptual: f64,
    pub freq: f64,
    pub restore: f64,
    pub render: f64,
    /// Colour weight inside the restoration loss.
    pub rgb: f64,
    /// MSE weight inside the render loss.
    pub render_mse: f64,
    /// Perceptual weight inside the render loss.
    pub render_perceptual: f64,
    /// Weight of the generator's adversarial term.
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            reg: 8.0,
            perceptual: 6.0,
            freq: 0.003,
            restore: 30.0,
            render: 1.0,
            rgb: 10.0,
            render_mse: 100.0,
            render_perceptual: 15.0,
            adversarial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.reg,
            self.perceptual,
            self.freq,
            self.restore,
            self.render,
            self.rgb,
            self.render_mse,
            self.render_perceptual,
            self.adversarial,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Unweighted generator loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reg: f64,
    pub perceptual: f64,
    pub freq: f64,
    pub restore: f64,
    pub render: f64,
    pub adversarial: f64,
}

impl LossTerms {
    pub fn all_finite(&self) -> bool {
        [
            self.reg,
            self.perceptual,
            self.freq,
            self.restore,
            self.render,
            self.adversarial,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Weighted generator objective from scalar terms.
pub fn total_g(terms: &LossTerms, w: &LossWeights) -> f64 {
    w.reg * terms.reg
        + w.perceptual * terms.perceptual
        + w.freq * terms.freq
        + w.restore * terms.restore
        + w.render * terms.render
        + w.adversarial * terms.adversarial
}

/// The same weighted sum over differentiable terms.
pub fn total_g_tensor<T: Scalar>(terms: &LossTensors<T>, w: &LossWeights) -> Tensor<T> {
    let parts = [
        terms.reg.scale(w.reg),
        terms.perceptual.scale(w.perceptual),
        terms.freq.scale(w.freq),
        terms.restore.scale(w.restore),
        terms.render.scale(w.render),
        terms.adversarial.scale(w.adversarial),
    ];
    Tensor::sum_n(&parts.iter().collect::<Vec<_>>())
}

/// Differentiable counterparts of [`LossTerms`].
#[derive(Clone, Debug)]
pub struct LossTensors<T: Scalar = f32> {
    pub reg: Tensor<T>,
    pub perceptual: Tensor<T>,
    pub freq: Tensor<T>,
    pub restore: Tensor<T>,
    pub render: Tensor<T>,
    pub adversarial: Tensor<T>,
}

impl<T: Scalar> LossTensors<T> {
    pub fn values(&self) -> LossTerms {
        LossTerms {
            reg: self.reg.item().as_f64(),
            perceptual: self.perceptual.item().as_f64(),
            freq: self.freq.item().as_f64(),
            restore: self.restore.item().as_f64(),
            render: self.render.item().as_f64(),
            adversarial: self.adversarial.item().as_f64(),
        }
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error between embedding and reference.
pub fn loss_reg<T: Scalar>(embedding: &Tensor<T>, reference: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(embedding, reference, "loss_reg")?;
    Ok(embedding.mse(reference))
}

/// Mean over channels and frequency bins of `|F(a) - F(b)|^2`, where `F` is
/// the orthonormal 2-D DFT of each `H x W` channel. By Parseval this equals
/// [`loss_reg`] for real inputs.
pub fn loss_freq<T: Scalar>(embedding: &Tensor<T>, reference: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(embedding, reference, "loss_freq")?;
    let shape = embedding.shape();
    if shape.len() < 2 {
        return Err(Error::shape(format!(
            "loss_freq needs [.., H, W], got {shape:?}"
        )));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    Ok(spectral_energy(&embedding.sub(reference), h, w))
}

struct Dft2 {
    h: usize,
    w: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Dft2 {
    fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft2 {
            h,
            w,
            rows: planner.plan_fft_forward(w),
            cols: planner.plan_fft_forward(h),
            rows_inv: planner.plan_fft_inverse(w),
            cols_inv: planner.plan_fft_inverse(h),
        }
    }

    /// Orthonormal transform of one channel, in place.
    fn apply(&self, buf: &mut [Complex64], inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.rows_inv, &self.cols_inv)
        } else {
            (&self.rows, &self.cols)
        };
        rows.process(buf);
        let mut col = vec![Complex64::default(); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                col[y] = buf[y * self.w + x];
            }
            cols.process(&mut col);
            for y in 0..self.h {
                buf[y * self.w + x] = col[y];
            }
        }
        let norm = 1.0 / ((self.h * self.w) as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= norm);
    }
}

/// `mean |F(d)|^2` over all channels and bins, with its exact gradient
/// `2/M * Re(F^H F d)`.
fn spectral_energy<T: Scalar>(d: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let dft = Rc::new(Dft2::new(h, w));
    let total = d.numel();
    let mut spectra = Vec::with_capacity(total);
    for chan in d.data().chunks(h * w) {
        let mut buf: Vec<Complex64> = chan
            .iter()
            .map(|v| Complex64::new(v.as_f64(), 0.0))
            .collect();
        dft.apply(&mut buf, false);
        spectra.extend(buf);
    }
    let energy = spectra.iter().map(|c| c.norm_sqr()).sum::<f64>() / total as f64;
    Tensor::from_op(&[d], &[], vec![T::from_f64_lossy(energy)], move |g, _| {
        let scale = 2.0 * g[0].as_f64() / total as f64;
        let mut out = Vec::with_capacity(total);
        for spec in spectra.chunks(h * w) {
            let mut buf = spec.to_vec();
            dft.apply(&mut buf, true);
            out.extend(buf.iter().map(|c| T::from_f64_lossy(scale * c.re)));
        }
        vec![Some(out)]
    })
}

/// `sum_j mean |phi_j(a) - phi_j(b)|` over the extractor's feature maps.
pub fn loss_perceptual<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    features: &Perceptual<T>,
) -> Result<Tensor<T>> {
    same_shape(a, b, "loss_perceptual")?;
    let fa = features.features(a)?;
    let fb = features.features(b)?;
    let terms: Vec<Tensor<T>> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| x.sub(y).abs().mean_all())
        .collect();
    Ok(Tensor::sum_n(&terms.iter().collect::<Vec<_>>()))
}

/// Restoration loss on `[N, 4P, H, W]` MPI tensors:
/// `sum_i [rgb_weight * mean((c~_i a_i - c_i a_i)^2) + mean((a~_i - a_i)^2)]`
/// with the ground-truth alpha `a_i` masking both colour terms.
pub fn loss_restore<T: Scalar>(
    restored: &Tensor<T>,
    truth: &Tensor<T>,
    rgb_weight: f64,
) -> Result<Tensor<T>> {
    same_shape(restored, truth, "loss_restore")?;
    let (rc, ra) = split_rgba(restored)?;
    let (tc, ta) = split_rgba(truth)?;
    let (n, p, h, w) = ta.dims4();
    let mask = ta.reshape(&[n, p, 1, h * w]);
    let masked = |c: &Tensor<T>| c.reshape(&[n, p, 3, h * w]).mul_b(&mask);
    let color = masked(&rc).mse(&masked(&tc));
    let alpha = ra.mse(&ta);
    // every plane has the same element count, so the per-plane sum of
    // means is P times the global mean
    Ok(color.scale(rgb_weight).add(&alpha).scale(p as f64))
}

/// Render loss: both MPIs rendered at `pose`, compared by MSE and
/// perceptual distance.
#[allow(clippy::too_many_arguments)]
pub fn loss_render<T: Scalar>(
    restored: &Tensor<T>,
    truth: &Tensor<T>,
    depths: &[f64],
    pose: &RelativePose,
    cam: &CameraModel,
    features: Option<&Perceptual<T>>,
    weights: &LossWeights,
) -> Result<Tensor<T>> {
    same_shape(restored, truth, "loss_render")?;
    let ours = render_tensor(restored, depths, pose, cam)?;
    let target = render_tensor(truth, depths, pose, cam)?;
    let mut loss = ours.mse(&target).scale(weights.render_mse);
    if let Some(f) = features {
        loss = loss.add(&loss_perceptual(&ours, &target, f)?.scale(weights.render_perceptual));
    }
    Ok(loss)
}

fn check_maps<T: Scalar>(a: &[Tensor<T>], b: &[Tensor<T>]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "{} real vs {} fake logit maps",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Discriminator loss: binary cross-entropy of real maps against 1 and fake
/// maps against 0, averaged over patches and scales. Minimizing it
/// maximizes `log D(real) + log(1 - D(fake))`.
pub fn loss_adversarial_d<T: Scalar>(real: &[Tensor<T>], fake: &[Tensor<T>]) -> Result<Tensor<T>> {
    check_maps(real, fake)?;
    let terms: Vec<Tensor<T>> = real
        .iter()
        .zip(fake)
        .map(|(r, f)| r.neg().softplus().mean_all().add(&f.softplus().mean_all()))
        .collect();
    Ok(Tensor::sum_n(&terms.iter().collect::<Vec<_>>()).scale(1.0 / terms.len() as f64))
}

/// Non-saturating generator loss `-log D(fake)`, averaged over patches and
/// scales.
pub fn loss_adversarial_g<T: Scalar>(fake: &[Tensor<T>]) -> Result<Tensor<T>> {
    if fake.is_empty() {
        return Err(Error::shape("no logit maps"));
    }
    let terms: Vec<Tensor<T>> = fake.iter().map(|f| f.neg().softplus().mean_all()).collect();
    Ok(Tensor::sum_n(&terms.iter().collect::<Vec<_>>()).scale(1.0 / terms.len() as f64))
}
