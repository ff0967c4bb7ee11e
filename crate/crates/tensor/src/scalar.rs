use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type usable by the engine.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` with arbitrary strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid, non-aliasing (for `c`)
    /// matrices of the given dimensions.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// `y += a * x` over the common length.
    fn axpy(y: &mut [Self], a: Self, x: &[Self]) {
        for (yv, &xv) in y.iter_mut().zip(x) {
            *yv += a * xv;
        }
    }

    /// Dot product with a fixed summation order.
    fn dot(x: &[Self], y: &[Self]) -> Self {
        let mut acc = [Self::zero(); 8];
        let n = x.len().min(y.len()) / 8 * 8;
        for (xc, yc) in x[..n].chunks_exact(8).zip(y[..n].chunks_exact(8)) {
            for l in 0..8 {
                acc[l] += xc[l] * yc[l];
            }
        }
        let tail: Self = x[n..].iter().zip(&y[n..]).map(|(&a, &b)| a * b).sum();
        acc.iter().fold(Self::zero(), |s, &v| s + v) + tail
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
        #[cfg(target_arch = "x86_64")]
        if simd::available() {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { simd::axpy(y, a, x) };
        }
        for (yv, &xv) in y.iter_mut().zip(x) {
            *yv += a * xv;
        }
    }

    fn dot(x: &[f32], y: &[f32]) -> f32 {
        #[cfg(target_arch = "x86_64")]
        if simd::available() {
            // SAFETY: as above.
            return unsafe { simd::dot(x, y) };
        }
        let mut acc = [0.0f32; 8];
        let n = x.len().min(y.len()) / 8 * 8;
        for (xc, yc) in x[..n].chunks_exact(8).zip(y[..n].chunks_exact(8)) {
            for l in 0..8 {
                acc[l] += xc[l] * yc[l];
            }
        }
        let tail: f32 = x[n..].iter().zip(&y[n..]).map(|(&a, &b)| a * b).sum();
        acc.iter().sum::<f32>() + tail
    }
}

/// AVX2/FMA versions of the f32 vector kernels, chosen at runtime.
#[cfg(target_arch = "x86_64")]
mod simd {
    pub fn available() -> bool {
        is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
        for (yv, &xv) in y.iter_mut().zip(x) {
            *yv = xv.mul_add(a, *yv);
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot(x: &[f32], y: &[f32]) -> f32 {
        const LANES: usize = 32;
        let mut acc = [0.0f32; LANES];
        let n = x.len().min(y.len()) / LANES * LANES;
        for (xc, yc) in x[..n].chunks_exact(LANES).zip(y[..n].chunks_exact(LANES)) {
            for l in 0..LANES {
                acc[l] = xc[l].mul_add(yc[l], acc[l]);
            }
        }
        let mut tail = 0.0f32;
        for (&a, &b) in x[n..].iter().zip(&y[n..]) {
            tail = a.mul_add(b, tail);
        }
        acc.iter().sum::<f32>() + tail
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}
