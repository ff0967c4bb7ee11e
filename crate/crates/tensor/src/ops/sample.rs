use crate::{Scalar, Tensor};

/// Two-tap linear interpolation weights for 2x upsampling with half-pixel
/// centres (align_corners = false): output `o` reads `(i0, w0), (i1, w1)`.
fn up2_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let i = o / 2;
            let other = if o % 2 == 0 {
                i.saturating_sub(1)
            } else {
                (i + 1).min(n - 1)
            };
            (i, other, 0.75, 0.25)
        })
        .collect()
}

/// Applies taps along the middle axis of an `[outer, n, inner]` layout.
fn up2_axis<T: Scalar>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let taps = up2_taps(n);
    let mut out = vec![T::zero(); outer * 2 * n * inner];
    for o in 0..outer {
        let src = &x[o * n * inner..(o + 1) * n * inner];
        let dst = &mut out[o * 2 * n * inner..(o + 1) * 2 * n * inner];
        for (j, &(a, b, wa, wb)) in taps.iter().enumerate() {
            let (wa, wb) = (T::from_f64_lossy(wa), T::from_f64_lossy(wb));
            let d = &mut dst[j * inner..(j + 1) * inner];
            let sa = &src[a * inner..(a + 1) * inner];
            let sb = &src[b * inner..(b + 1) * inner];
            for ((d, &p), &q) in d.iter_mut().zip(sa).zip(sb) {
                *d = wa * p + wb * q;
            }
        }
    }
    out
}

fn up2_axis_adjoint<T: Scalar>(g: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let taps = up2_taps(n);
    let mut out = vec![T::zero(); outer * n * inner];
    for o in 0..outer {
        let src = &g[o * 2 * n * inner..(o + 1) * 2 * n * inner];
        let dst = &mut out[o * n * inner..(o + 1) * n * inner];
        for (j, &(a, b, wa, wb)) in taps.iter().enumerate() {
            let (wa, wb) = (T::from_f64_lossy(wa), T::from_f64_lossy(wb));
            let s = &src[j * inner..(j + 1) * inner];
            for (k, &v) in s.iter().enumerate() {
                dst[a * inner + k] += wa * v;
                dst[b * inner + k] += wb * v;
            }
        }
    }
    out
}

impl<T: Scalar> Tensor<T> {
    /// Bilinear 2x upsampling of an NCHW tensor (half-pixel centres, edge clamp).
    pub fn upsample_bilinear2x(&self) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        let rows = up2_axis(self.data(), n * c * h, w, 1);
        let data = up2_axis(&rows, n * c, h, 2 * w);
        Tensor::from_op(&[self], &[n, c, 2 * h, 2 * w], data, move |g, _| {
            let gh = up2_axis_adjoint(g, n * c, h, 2 * w);
            vec![Some(up2_axis_adjoint(&gh, n * c * h, w, 1))]
        })
    }

    /// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool2(&self) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "avg_pool2 on {h}x{w}");
        let quarter = T::from_f64_lossy(0.25);
        let x = self.data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for p in 0..n * c {
            let src = &x[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let i = 2 * oy * w + 2 * ox;
                    out[(p * ho + oy) * wo + ox] =
                        (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
                }
            }
        }
        Tensor::from_op(&[self], &[n, c, ho, wo], out, move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for p in 0..n * c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let v = g[(p * ho + oy) * wo + ox] * quarter;
                        let i = p * h * w + 2 * oy * w + 2 * ox;
                        gx[i] += v;
                        gx[i + 1] += v;
                        gx[i + w] += v;
                        gx[i + w + 1] += v;
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// 2x2 max pooling with stride 2; the gradient goes to the first maximum.
    pub fn max_pool2(&self) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "max_pool2 on {h}x{w}");
        let x = self.data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut arg = vec![0usize; n * c * ho * wo];
        for p in 0..n * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = p * h * w + 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if x[cand] > x[best] {
                            best = cand;
                        }
                    }
                    let o = (p * ho + oy) * wo + ox;
                    out[o] = x[best];
                    arg[o] = best;
                }
            }
        }
        let len = self.numel();
        Tensor::from_op(&[self], &[n, c, ho, wo], out, move |g, _| {
            let mut gx = vec![T::zero(); len];
            for (&gi, &a) in g.iter().zip(&arg) {
                gx[a] += gi;
            }
            vec![Some(gx)]
        })
    }
}
