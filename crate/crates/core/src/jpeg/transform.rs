//! Sample-domain arithmetic shared by the encoder, the decoder and the
//! differentiable simulation, so all three agree on every operation.

use std::sync::OnceLock;

use super::{ChromaSubsampling, JpegConfig, QuantTables};

/// Forward colour transform rows (R, G, B weights) for Y, Cb, Cr.
pub const RGB_TO_YCC: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

/// Inverse colour transform rows (Y, Cb, Cr weights) for R, G, B.
pub const YCC_TO_RGB: [[f64; 3]; 3] = [
    [1.0, 0.0, 1.402],
    [1.0, -0.344_136, -0.714_136],
    [1.0, 1.772, 0.0],
];

const MAX_AC: f64 = 1023.0;
const MAX_DC: f64 = 2047.0;

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn basis() -> &'static [[f64; 8]; 8] {
    static B: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = c * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

/// 2-D DCT of a level-shifted 8x8 block (natural order in and out).
pub fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| b[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| b[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

/// One colour component of a frame: quantized DCT coefficients of
/// `blocks_w x blocks_h` blocks, row-major, natural order within a block.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub id: u8,
    pub h: usize,
    pub v: usize,
    pub table: usize,
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub coeffs: Vec<f64>,
}

impl Component {
    pub fn block(&self, bx: usize, by: usize) -> &[f64] {
        let i = (by * self.blocks_w + bx) * 64;
        &self.coeffs[i..i + 64]
    }

    pub fn block_mut(&mut self, bx: usize, by: usize) -> &mut [f64] {
        let i = (by * self.blocks_w + bx) * 64;
        &mut self.coeffs[i..i + 64]
    }
}

/// Image-level coefficient data between the sample and entropy stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub components: Vec<Component>,
    /// Quantization tables by slot, natural order.
    pub tables: [[u16; 64]; 4],
}

impl Frame {
    pub fn h_max(&self) -> usize {
        self.components.iter().map(|c| c.h).max().unwrap_or(1)
    }

    pub fn v_max(&self) -> usize {
        self.components.iter().map(|c| c.v).max().unwrap_or(1)
    }

    pub fn mcus(&self) -> (usize, usize) {
        (
            self.width.div_ceil(8 * self.h_max()),
            self.height.div_ceil(8 * self.v_max()),
        )
    }
}

/// Pads a plane to `pw x ph` by replicating the last row and column.
pub(crate) fn pad_replicate(src: &[f64], w: usize, h: usize, pw: usize, ph: usize) -> Vec<f64> {
    let mut out = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            out[y * pw + x] = src[sy * w + x.min(w - 1)];
        }
    }
    out
}

fn pad_replicate_adjoint(g: &[f64], w: usize, h: usize, pw: usize, ph: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            out[sy * w + x.min(w - 1)] += g[y * pw + x];
        }
    }
    out
}

/// 2x2 box average; `w` and `h` even.
pub(crate) fn downsample2(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) / 4.0;
        }
    }
    out
}

/// Nearest-neighbour upsampling by integer factors.
pub(crate) fn upsample(src: &[f64], w: usize, h: usize, fx: usize, fy: usize) -> Vec<f64> {
    if fx == 1 && fy == 1 {
        return src.to_vec();
    }
    let ow = w * fx;
    let mut out = vec![0.0; ow * h * fy];
    for y in 0..h * fy {
        for x in 0..ow {
            out[y * ow + x] = src[(y / fy) * w + x / fx];
        }
    }
    out
}

/// Triangle-filter 2x upsampling along the middle axis of an
/// `[outer, n, inner]` array: each output mixes its nearer input with
/// weight 3/4 and the farther with 1/4, clamping at the edges.
fn fancy2_axis(x: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; outer * 2 * n * inner];
    for o in 0..outer {
        for j in 0..2 * n {
            let i = j / 2;
            let far = if j % 2 == 0 {
                i.saturating_sub(1)
            } else {
                (i + 1).min(n - 1)
            };
            for k in 0..inner {
                out[(o * 2 * n + j) * inner + k] =
                    0.75 * x[(o * n + i) * inner + k] + 0.25 * x[(o * n + far) * inner + k];
            }
        }
    }
    out
}

fn fancy2_axis_adjoint(g: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for j in 0..2 * n {
            let i = j / 2;
            let far = if j % 2 == 0 {
                i.saturating_sub(1)
            } else {
                (i + 1).min(n - 1)
            };
            for k in 0..inner {
                let v = g[(o * 2 * n + j) * inner + k];
                out[(o * n + i) * inner + k] += 0.75 * v;
                out[(o * n + far) * inner + k] += 0.25 * v;
            }
        }
    }
    out
}

fn crop(src: &[f64], sw: usize, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        out.extend_from_slice(&src[y * sw..y * sw + w]);
    }
    out
}

fn uncrop(src: &[f64], w: usize, h: usize, dw: usize, dh: usize) -> Vec<f64> {
    let mut out = vec![0.0; dw * dh];
    for y in 0..h {
        out[y * dw..y * dw + w].copy_from_slice(&src[y * w..(y + 1) * w]);
    }
    out
}

/// Brings a decoded component plane (`pw x ph` samples, block padded) to
/// the `width x height` image grid.
///
/// Factors of two use the triangle filter of common decoders, applied to
/// the component's true extent `ceil(width / fx) x ceil(height / fy)` so
/// padding never bleeds in; other factors replicate samples.
pub(crate) fn upsample_component(
    src: &[f64],
    pw: usize,
    ph: usize,
    fx: usize,
    fy: usize,
    width: usize,
    height: usize,
) -> Vec<f64> {
    if (fx == 1 || fx == 2) && (fy == 1 || fy == 2) {
        let (cw, ch) = (width.div_ceil(fx), height.div_ceil(fy));
        let mut plane = crop(src, pw, cw, ch);
        let mut w = cw;
        if fx == 2 {
            plane = fancy2_axis(&plane, ch, cw, 1);
            w = 2 * cw;
        }
        if fy == 2 {
            plane = fancy2_axis(&plane, 1, ch, w);
        }
        return crop(&plane, w, width, height);
    }
    let up = upsample(src, pw, ph, fx, fy);
    crop(&up, pw * fx, width, height)
}

/// Adjoint of [`upsample_component`] for factors of one or two.
fn upsample_component_adjoint(
    g: &[f64],
    pw: usize,
    ph: usize,
    fx: usize,
    fy: usize,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let (cw, ch) = (width.div_ceil(fx), height.div_ceil(fy));
    let w = cw * fx;
    let mut plane = uncrop(g, width, height, w, ch * fy);
    if fy == 2 {
        plane = fancy2_axis_adjoint(&plane, 1, ch, w);
    }
    if fx == 2 {
        plane = fancy2_axis_adjoint(&plane, ch, cw, 1);
    }
    uncrop(&plane, cw, ch, pw, ph)
}

fn quantize(v: f64, q: u16, dc: bool, round: bool) -> f64 {
    let r = v / q as f64;
    if !round {
        return r;
    }
    let lim = if dc { MAX_DC } else { MAX_AC };
    r.round().clamp(-lim, lim)
}

/// Sample planes to coefficients: colour conversion, edge padding to whole
/// MCUs, optional chroma subsampling, level shift, DCT and quantization.
///
/// `rgb` holds three `width x height` planes on the 0..=255 scale. With
/// `round == false` the quantized coefficients keep their fractional part,
/// which yields the rounding-free pipeline used as the gradient reference.
pub fn analyze(
    rgb: &[f64],
    width: usize,
    height: usize,
    cfg: &JpegConfig,
    tables: &QuantTables,
    round: bool,
) -> Frame {
    let hw = width * height;
    assert_eq!(
        rgb.len(),
        3 * hw,
        "analyze expects three {width}x{height} planes"
    );
    let mut ycc = vec![0.0; 3 * hw];
    for k in 0..hw {
        let (r, g, b) = (rgb[k], rgb[hw + k], rgb[2 * hw + k]);
        for (c, m) in RGB_TO_YCC.iter().enumerate() {
            let offset = if c == 0 { 0.0 } else { 128.0 };
            ycc[c * hw + k] = m[0] * r + m[1] * g + m[2] * b + offset;
        }
    }
    let (hs, vs) = cfg.chroma_subsampling.luma_factors();
    let (mw, mh) = (8 * hs, 8 * vs);
    let (pw, ph) = (width.div_ceil(mw) * mw, height.div_ceil(mh) * mh);
    let mut components = Vec::with_capacity(3);
    for c in 0..3 {
        let mut plane = pad_replicate(&ycc[c * hw..(c + 1) * hw], width, height, pw, ph);
        let (mut cw, mut ch) = (pw, ph);
        let (h, v) = if c == 0 { (hs, vs) } else { (1, 1) };
        if c > 0 && cfg.chroma_subsampling == ChromaSubsampling::S420 {
            plane = downsample2(&plane, pw, ph);
            cw /= 2;
            ch /= 2;
        }
        let q = if c == 0 { &tables.luma } else { &tables.chroma };
        let (bw, bh) = (cw / 8, ch / 8);
        let mut coeffs = vec![0.0; bw * bh * 64];
        for by in 0..bh {
            for bx in 0..bw {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        block[y * 8 + x] = plane[(by * 8 + y) * cw + bx * 8 + x] - 128.0;
                    }
                }
                let f = fdct(&block);
                let dst = &mut coeffs[(by * bw + bx) * 64..(by * bw + bx + 1) * 64];
                for k in 0..64 {
                    dst[k] = quantize(f[k], q[k], k == 0, round);
                }
            }
        }
        components.push(Component {
            id: c as u8 + 1,
            h,
            v,
            table: usize::from(c > 0),
            blocks_w: bw,
            blocks_h: bh,
            coeffs,
        });
    }
    let mut slots = [[1u16; 64]; 4];
    slots[0] = tables.luma;
    slots[1] = tables.chroma;
    Frame {
        width,
        height,
        components,
        tables: slots,
    }
}

/// Coefficients back to three RGB planes on the 0..=255 scale, neither
/// rounded nor clamped. Single-component frames are replicated to gray RGB.
pub fn synthesize(frame: &Frame) -> Vec<f64> {
    let (w, h) = (frame.width, frame.height);
    let (hmax, vmax) = (frame.h_max(), frame.v_max());
    let mut planes = Vec::with_capacity(frame.components.len());
    for comp in &frame.components {
        let (cw, ch) = (comp.blocks_w * 8, comp.blocks_h * 8);
        let q = &frame.tables[comp.table];
        let mut plane = vec![0.0; cw * ch];
        for by in 0..comp.blocks_h {
            for bx in 0..comp.blocks_w {
                let src = comp.block(bx, by);
                let mut deq = [0.0; 64];
                for k in 0..64 {
                    deq[k] = src[k] * q[k] as f64;
                }
                let s = idct(&deq);
                for y in 0..8 {
                    for x in 0..8 {
                        plane[(by * 8 + y) * cw + bx * 8 + x] = s[y * 8 + x] + 128.0;
                    }
                }
            }
        }
        let (fx, fy) = (hmax / comp.h, vmax / comp.v);
        planes.push(upsample_component(&plane, cw, ch, fx, fy, w, h));
    }
    let hw = w * h;
    let mut rgb = vec![0.0; 3 * hw];
    if planes.len() == 1 {
        for c in 0..3 {
            rgb[c * hw..(c + 1) * hw].copy_from_slice(&planes[0]);
        }
        return rgb;
    }
    for k in 0..hw {
        let (y, cb, cr) = (planes[0][k], planes[1][k] - 128.0, planes[2][k] - 128.0);
        for (c, m) in YCC_TO_RGB.iter().enumerate() {
            rgb[c * hw + k] = m[0] * y + m[1] * cb + m[2] * cr;
        }
    }
    rgb
}

/// The rounding-free pipeline is linear: DCT, quantizer scaling and IDCT
/// cancel, leaving colour conversion and the chroma resampling chain. This
/// applies it (or its adjoint) to three planes without the level offsets.
pub(crate) fn linear_chain(
    x: &[f64],
    width: usize,
    height: usize,
    cfg: &JpegConfig,
    adjoint: bool,
) -> Vec<f64> {
    let hw = width * height;
    let (first, second) = if adjoint {
        (transpose(&YCC_TO_RGB), transpose(&RGB_TO_YCC))
    } else {
        (RGB_TO_YCC, YCC_TO_RGB)
    };
    let mut ycc = mix(x, hw, &first);
    if cfg.chroma_subsampling == ChromaSubsampling::S420 {
        let (pw, ph) = (width.div_ceil(16) * 16, height.div_ceil(16) * 16);
        for c in 1..3 {
            let plane = &ycc[c * hw..(c + 1) * hw];
            let out = if adjoint {
                let spread = upsample_component_adjoint(plane, pw / 2, ph / 2, 2, 2, width, height);
                // down^T spreads a quarter to each source, then pad^T folds edges back
                let spread = upsample(&spread, pw / 2, ph / 2, 2, 2)
                    .iter()
                    .map(|v| v / 4.0)
                    .collect::<Vec<_>>();
                pad_replicate_adjoint(&spread, width, height, pw, ph)
            } else {
                let padded = pad_replicate(plane, width, height, pw, ph);
                upsample_component(
                    &downsample2(&padded, pw, ph),
                    pw / 2,
                    ph / 2,
                    2,
                    2,
                    width,
                    height,
                )
            };
            ycc[c * hw..(c + 1) * hw].copy_from_slice(&out);
        }
    }
    mix(&ycc, hw, &second)
}

fn mix(x: &[f64], hw: usize, m: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; 3 * hw];
    for k in 0..hw {
        let v = [x[k], x[hw + k], x[2 * hw + k]];
        for (c, row) in m.iter().enumerate() {
            out[c * hw + k] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
    }
    out
}

fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}
