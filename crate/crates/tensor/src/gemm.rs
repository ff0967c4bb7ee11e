use crate::Scalar;

/// Whether a GEMM operand is read transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// Row or column count at or below which the packed kernels are skipped.
const THIN: usize = 8;
const COLUMN_BLOCK: usize = 256;
/// Output size at or below which a transposed-rhs product uses dot products.
const SMALL_OUTPUT: usize = 1024;

/// `c = op(a) * op(b) + (accumulate ? c : 0)`.
///
/// `op(a)` is `m x k` and `op(b)` is `k x n`; `a` and `b` are stored
/// row-major in their untransposed layout.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Scalar>(
    c: &mut [T],
    a: &[T],
    ta: Transpose,
    b: &[T],
    tb: Transpose,
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    assert!(c.len() >= m * n, "gemm output too small");
    assert!(a.len() >= m * k, "gemm lhs too small");
    assert!(b.len() >= k * n, "gemm rhs too small");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Transpose::No => (k as isize, 1),
        Transpose::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Transpose::No => (n as isize, 1),
        Transpose::Yes => (1, k as isize),
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    if !accumulate {
        // thin shapes below read `c` before writing it
        if tb == Transpose::No && (m <= THIN || k <= THIN)
            || tb == Transpose::Yes && m * n <= SMALL_OUTPUT
        {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
    }
    if tb == Transpose::No && (m <= THIN || k <= THIN) {
        // rank-k update as row axpys; the packed kernels pad such shapes
        // to full register tiles
        // column blocks keep the touched rows of `b` and `c` in L1
        for j0 in (0..n).step_by(COLUMN_BLOCK) {
            let j1 = (j0 + COLUMN_BLOCK).min(n);
            for p in 0..k {
                let brow = &b[p * n + j0..p * n + j1];
                for i in 0..m {
                    let aip = match ta {
                        Transpose::No => a[i * k + p],
                        Transpose::Yes => a[p * m + i],
                    };
                    T::axpy(&mut c[i * n + j0..i * n + j1], aip, brow);
                }
            }
        }
        return;
    }
    if tb == Transpose::Yes && ta == Transpose::No && m * n <= SMALL_OUTPUT {
        // few outputs, long reductions: plain dot products of rows
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                c[i * n + j] += T::dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
        return;
    }
    // SAFETY: bounds were asserted above and `c` does not alias `a` or `b`
    // because it is borrowed mutably.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
