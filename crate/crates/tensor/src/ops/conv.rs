use crate::gemm::{matmul, Transpose};
use crate::{Scalar, Tensor};

/// Geometry of a 2-D convolution (square stride and zero padding).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dArgs {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dArgs {
    fn default() -> Self {
        Conv2dArgs {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv2dArgs {
    pub fn same(kernel: usize) -> Self {
        Conv2dArgs {
            stride: 1,
            padding: kernel / 2,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> usize {
        assert!(
            input + 2 * self.padding >= kernel,
            "input extent {input} too small for kernel {kernel} with padding {}",
            self.padding
        );
        (input + 2 * self.padding - kernel) / self.stride + 1
    }
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Range of output columns `ox` whose input column `ox*stride + kx - pad`
    /// is inside the image.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo_num = self.pad as isize - kx as isize;
        let lo = if lo_num <= 0 {
            0
        } else {
            (lo_num as usize).div_ceil(self.stride)
        };
        let hi_num = self.w as isize + self.pad as isize - kx as isize;
        let hi = if hi_num <= 0 {
            0
        } else {
            ((hi_num as usize).div_ceil(self.stride)).min(self.wo)
        };
        (lo.min(hi), hi)
    }
}

/// Direct stride-1 kernels for groups too thin to amortize im2col.
const DIRECT_MAX_PAIRS: usize = 48;

impl Geom {
    fn prefers_direct(&self, cout_g: usize) -> bool {
        self.stride == 1 && !self.is_pointwise() && self.c * cout_g <= DIRECT_MAX_PAIRS
    }

    /// Visits every (input row, output row, column span) pair touched by
    /// kernel tap `(ky, kx)`.
    fn for_each_span(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (lo, hi) = self.valid_cols(kx);
        if hi <= lo {
            return;
        }
        let ix0 = lo + kx - self.pad;
        for oy in 0..self.ho {
            let iy = (oy + ky) as isize - self.pad as isize;
            if iy >= 0 && iy < self.h as isize {
                f(iy as usize * self.w + ix0, oy * self.wo + lo, hi - lo);
            }
        }
    }
}

fn direct_forward<T: Scalar>(x: &[T], wt: &[T], g: &Geom, cout_g: usize, out: &mut [T]) {
    let (plane_in, plane_out) = (g.h * g.w, g.ho * g.wo);
    for o in 0..cout_g {
        let dst = &mut out[o * plane_out..(o + 1) * plane_out];
        for ci in 0..g.c {
            let src = &x[ci * plane_in..(ci + 1) * plane_in];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let a = wt[((o * g.c + ci) * g.kh + ky) * g.kw + kx];
                    g.for_each_span(ky, kx, |i, j, len| {
                        T::axpy(&mut dst[j..j + len], a, &src[i..i + len])
                    });
                }
            }
        }
    }
}

fn direct_grad_input<T: Scalar>(gy: &[T], wt: &[T], g: &Geom, cout_g: usize, gx: &mut [T]) {
    let (plane_in, plane_out) = (g.h * g.w, g.ho * g.wo);
    for ci in 0..g.c {
        let dst = &mut gx[ci * plane_in..(ci + 1) * plane_in];
        for o in 0..cout_g {
            let src = &gy[o * plane_out..(o + 1) * plane_out];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let a = wt[((o * g.c + ci) * g.kh + ky) * g.kw + kx];
                    g.for_each_span(ky, kx, |i, j, len| {
                        T::axpy(&mut dst[i..i + len], a, &src[j..j + len])
                    });
                }
            }
        }
    }
}

fn direct_grad_weight<T: Scalar>(gy: &[T], x: &[T], g: &Geom, cout_g: usize, gw: &mut [T]) {
    let (plane_in, plane_out) = (g.h * g.w, g.ho * g.wo);
    for o in 0..cout_g {
        let go = &gy[o * plane_out..(o + 1) * plane_out];
        for ci in 0..g.c {
            let src = &x[ci * plane_in..(ci + 1) * plane_in];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let mut acc = T::zero();
                    g.for_each_span(ky, kx, |i, j, len| {
                        acc += T::dot(&go[j..j + len], &src[i..i + len])
                    });
                    gw[((o * g.c + ci) * g.kh + ky) * g.kw + kx] += acc;
                }
            }
        }
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geom, col: &mut [T]) {
    let plane = g.ho * g.wo;
    let mut row = 0;
    for c in 0..g.c {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..g.ho {
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..lo].iter_mut().for_each(|v| *v = T::zero());
                    out[hi..].iter_mut().for_each(|v| *v = T::zero());
                    if hi > lo {
                        let ix0 = lo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            out[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                        } else {
                            for (j, v) in out[lo..hi].iter_mut().enumerate() {
                                *v = src[ix0 + j * g.stride];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], g: &Geom, x: &mut [T]) {
    let plane = g.ho * g.wo;
    let mut row = 0;
    for c in 0..g.c {
        let xc = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_cols(kx);
                if hi > lo {
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst = &mut xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let s = &src[oy * g.wo + lo..oy * g.wo + hi];
                        let ix0 = lo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            dst[ix0..ix0 + (hi - lo)]
                                .iter_mut()
                                .zip(s)
                                .for_each(|(d, &v)| *d += v);
                        } else {
                            for (j, &v) in s.iter().enumerate() {
                                dst[ix0 + j * g.stride] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// 2-D convolution of an `N x C x H x W` input with a
    /// `Cout x C/groups x kh x kw` kernel and optional `Cout` bias.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        args: Conv2dArgs,
    ) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        let (cout, cin_g, kh, kw) = weight.dims4();
        let groups = args.groups;
        assert!(
            groups >= 1 && c % groups == 0 && cout % groups == 0,
            "bad group count {groups}"
        );
        assert_eq!(
            cin_g * groups,
            c,
            "conv2d: input has {c} channels, kernel expects {}",
            cin_g * groups
        );
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[cout], "conv2d: bias shape");
        }
        let geom = Geom {
            c: cin_g,
            h,
            w,
            kh,
            kw,
            stride: args.stride,
            pad: args.padding,
            ho: args.output_size(h, kh),
            wo: args.output_size(w, kw),
        };
        let cout_g = cout / groups;
        let k = cin_g * kh * kw;
        let plane_out = geom.ho * geom.wo;
        let plane_in = h * w;
        let x = self.data_rc();
        let wt = weight.data_rc();

        let direct = geom.prefers_direct(cout_g);
        let mut out = vec![T::zero(); n * cout * plane_out];
        let mut col = if geom.is_pointwise() || direct {
            Vec::new()
        } else {
            vec![T::zero(); k * plane_out]
        };
        for b in 0..n {
            for gi in 0..groups {
                let xin =
                    &x[(b * c + gi * cin_g) * plane_in..(b * c + (gi + 1) * cin_g) * plane_in];
                let o0 = (b * cout + gi * cout_g) * plane_out;
                if direct {
                    let wg = &wt[gi * cout_g * k..(gi + 1) * cout_g * k];
                    direct_forward(
                        xin,
                        wg,
                        &geom,
                        cout_g,
                        &mut out[o0..o0 + cout_g * plane_out],
                    );
                    continue;
                }
                let cols: &[T] = if geom.is_pointwise() {
                    xin
                } else {
                    im2col(xin, &geom, &mut col);
                    &col
                };
                matmul(
                    &mut out[o0..o0 + cout_g * plane_out],
                    &wt[gi * cout_g * k..(gi + 1) * cout_g * k],
                    Transpose::No,
                    cols,
                    Transpose::No,
                    cout_g,
                    k,
                    plane_out,
                    false,
                );
            }
            if let Some(bias) = bias {
                for (o, &bv) in bias.data().iter().enumerate() {
                    let s = (b * cout + o) * plane_out;
                    out[s..s + plane_out].iter_mut().for_each(|v| *v += bv);
                }
            }
        }

        let need_x = self.requires_grad();
        let need_w = weight.requires_grad();
        let need_b = bias.is_some_and(|b| b.requires_grad());
        let has_bias = bias.is_some();
        let mut inputs: Vec<&Tensor<T>> = vec![self, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Tensor::from_op(&inputs, &[n, cout, geom.ho, geom.wo], out, move |gy, _| {
            let mut gx = need_x.then(|| vec![T::zero(); n * c * plane_in]);
            let mut gw = need_w.then(|| vec![T::zero(); cout * k]);
            let im2col_len = if geom.is_pointwise() || direct {
                0
            } else {
                k * plane_out
            };
            let mut col = vec![T::zero(); if need_w { im2col_len } else { 0 }];
            let mut gcol = vec![T::zero(); if need_x { im2col_len } else { 0 }];
            for b in 0..n {
                for gi in 0..groups {
                    let gy_g = &gy[(b * cout + gi * cout_g) * plane_out
                        ..(b * cout + (gi + 1) * cout_g) * plane_out];
                    let wg = &wt[gi * cout_g * k..(gi + 1) * cout_g * k];
                    let xs = (b * c + gi * cin_g) * plane_in;
                    if direct {
                        if let Some(gw) = gw.as_mut() {
                            let gwg = &mut gw[gi * cout_g * k..(gi + 1) * cout_g * k];
                            direct_grad_weight(
                                gy_g,
                                &x[xs..xs + cin_g * plane_in],
                                &geom,
                                cout_g,
                                gwg,
                            );
                        }
                        if let Some(gx) = gx.as_mut() {
                            direct_grad_input(
                                gy_g,
                                wg,
                                &geom,
                                cout_g,
                                &mut gx[xs..xs + cin_g * plane_in],
                            );
                        }
                        continue;
                    }
                    if let Some(gw) = gw.as_mut() {
                        let xin = &x[xs..xs + cin_g * plane_in];
                        let cols: &[T] = if geom.is_pointwise() {
                            xin
                        } else {
                            im2col(xin, &geom, &mut col);
                            &col
                        };
                        matmul(
                            &mut gw[gi * cout_g * k..(gi + 1) * cout_g * k],
                            gy_g,
                            Transpose::No,
                            cols,
                            Transpose::Yes,
                            cout_g,
                            plane_out,
                            k,
                            true,
                        );
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx[xs..xs + cin_g * plane_in];
                        if geom.is_pointwise() {
                            matmul(
                                dst,
                                wg,
                                Transpose::Yes,
                                gy_g,
                                Transpose::No,
                                k,
                                cout_g,
                                plane_out,
                                true,
                            );
                        } else {
                            matmul(
                                &mut gcol,
                                wg,
                                Transpose::Yes,
                                gy_g,
                                Transpose::No,
                                k,
                                cout_g,
                                plane_out,
                                false,
                            );
                            col2im_add(&gcol, &geom, dst);
                        }
                    }
                }
            }
            let gb = need_b.then(|| {
                let mut gb = vec![T::zero(); cout];
                for b in 0..n {
                    for (o, acc) in gb.iter_mut().enumerate() {
                        let s = (b * cout + o) * plane_out;
                        *acc += gy[s..s + plane_out].iter().copied().sum::<T>();
                    }
                }
                gb
            });
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(gb);
            }
            grads
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(
        x: &[f64],
        (n, c, h, w): (usize, usize, usize, usize),
        wt: &[f64],
        (cout, cin_g, kh, kw): (usize, usize, usize, usize),
        bias: &[f64],
        a: Conv2dArgs,
    ) -> Vec<f64> {
        let ho = a.output_size(h, kh);
        let wo = a.output_size(w, kw);
        let cout_g = cout / a.groups;
        let mut out = vec![0.0; n * cout * ho * wo];
        for b in 0..n {
            for o in 0..cout {
                let g = o / cout_g;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bias[o];
                        for ci in 0..cin_g {
                            let cc = g * cin_g + ci;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * a.stride + ky) as isize - a.padding as isize;
                                    let ix = (ox * a.stride + kx) as isize - a.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x[((b * c + cc) * h + iy as usize) * w + ix as usize]
                                        * wt[((o * cin_g + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out[((b * cout + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn values(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    fn check(xs: (usize, usize, usize, usize), ws: (usize, usize, usize, usize), a: Conv2dArgs) {
        let xv = values(xs.0 * xs.1 * xs.2 * xs.3, 0.731);
        let wv = values(ws.0 * ws.1 * ws.2 * ws.3, 1.37);
        let bv = values(ws.0, 0.29);
        let x = Tensor::var(xv.clone(), &[xs.0, xs.1, xs.2, xs.3]);
        let w = Tensor::var(wv.clone(), &[ws.0, ws.1, ws.2, ws.3]);
        let b = Tensor::var(bv.clone(), &[ws.0]);
        let y = x.conv2d(&w, Some(&b), a);
        let want = naive_conv(&xv, xs, &wv, ws, &bv, a);
        for (p, q) in y.data().iter().zip(&want) {
            assert!((p - q).abs() < 1e-10, "forward mismatch {p} vs {q}");
        }
        // Directional finite differences of sum(y * r) against the gradient.
        let r = Tensor::from_vec(values(y.numel(), 0.113), y.shape());
        let grads = y.mul(&r).sum_all().backward();
        let loss = |xv: &[f64], wv: &[f64], bv: &[f64]| -> f64 {
            naive_conv(xv, xs, wv, ws, bv, a)
                .iter()
                .zip(r.data())
                .map(|(p, q)| p * q)
                .sum()
        };
        let eps = 1e-6;
        let dirs = [(0usize, 0.4), (1, 0.7), (2, 1.1)];
        for (which, s) in dirs {
            let (len, g) = match which {
                0 => (xv.len(), grads.get(&x).unwrap()),
                1 => (wv.len(), grads.get(&w).unwrap()),
                _ => (bv.len(), grads.get(&b).unwrap()),
            };
            let d = values(len, s);
            let shift = |v: &[f64], sign: f64| -> Vec<f64> {
                v.iter().zip(&d).map(|(a, b)| a + sign * eps * b).collect()
            };
            let (fp, fm) = match which {
                0 => (
                    loss(&shift(&xv, 1.0), &wv, &bv),
                    loss(&shift(&xv, -1.0), &wv, &bv),
                ),
                1 => (
                    loss(&xv, &shift(&wv, 1.0), &bv),
                    loss(&xv, &shift(&wv, -1.0), &bv),
                ),
                _ => (
                    loss(&xv, &wv, &shift(&bv, 1.0)),
                    loss(&xv, &wv, &shift(&bv, -1.0)),
                ),
            };
            let fd = (fp - fm) / (2.0 * eps);
            let ad: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!(
                (fd - ad).abs() < 1e-6 * (1.0 + fd.abs()),
                "grad {which}: fd {fd} vs ad {ad}"
            );
        }
    }

    #[test]
    fn conv_3x3_same() {
        check((2, 3, 7, 6), (4, 3, 3, 3), Conv2dArgs::same(3));
    }

    #[test]
    fn conv_strided_4x4() {
        check(
            (1, 2, 8, 10),
            (3, 2, 4, 4),
            Conv2dArgs::default().with_stride(2).with_padding(1),
        );
        check(
            (2, 2, 9, 7),
            (2, 2, 3, 3),
            Conv2dArgs::same(3).with_stride(2),
        );
    }

    #[test]
    fn conv_grouped_and_pointwise() {
        check(
            (2, 6, 5, 5),
            (9, 2, 3, 3),
            Conv2dArgs::same(3).with_groups(3),
        );
        check((2, 4, 3, 5), (5, 4, 1, 1), Conv2dArgs::default());
    }

    #[test]
    fn direct_and_im2col_paths_agree_with_naive() {
        check((2, 8, 6, 5), (8, 8, 3, 3), Conv2dArgs::same(3));
        check(
            (1, 2, 9, 8),
            (3, 2, 5, 5),
            Conv2dArgs::default().with_padding(1),
        );
        check((1, 3, 4, 6), (2, 3, 3, 3), Conv2dArgs::default());
        check(
            (2, 8, 5, 7),
            (16, 2, 3, 3),
            Conv2dArgs::same(3).with_groups(4),
        );
    }

    #[test]
    fn output_size_arithmetic() {
        let a = Conv2dArgs::default().with_stride(2).with_padding(1);
        assert_eq!(a.output_size(512, 4), 256);
        assert_eq!(a.output_size(9, 4), 4);
        assert_eq!(Conv2dArgs::same(3).output_size(72, 3), 72);
    }
}
