use crate::{numel, Scalar, Tensor};

fn split_at_dim(shape: &[usize], dim: usize) -> (usize, usize, usize) {
    assert!(
        dim < shape.len(),
        "dim {dim} out of range for shape {shape:?}"
    );
    let outer = numel(&shape[..dim]);
    let inner = numel(&shape[dim + 1..]);
    (outer, shape[dim], inner)
}

impl<T: Scalar> Tensor<T> {
    /// Slice `len` entries along `dim` starting at `start`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Tensor<T> {
        let (outer, size, inner) = split_at_dim(self.shape(), dim);
        assert!(
            start + len <= size,
            "narrow {start}+{len} exceeds axis size {size}"
        );
        if start == 0 && len == size {
            return self.clone();
        }
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * size + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[dim] = len;
        let total = self.numel();
        Tensor::from_op(&[self], &shape, data, move |g, _| {
            let mut gx = vec![T::zero(); total];
            for o in 0..outer {
                let dst = (o * size + start) * inner;
                let src = o * len * inner;
                gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Concatenates along `dim`; all other axes must agree.
    pub fn concat(parts: &[&Tensor<T>], dim: usize) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape();
        for p in parts {
            assert_eq!(p.shape().len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(
                    d == dim || a == b,
                    "concat shape mismatch {:?} vs {first:?}",
                    p.shape()
                );
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[dim]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = split_at_dim(first, dim);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &s) in parts.iter().zip(&sizes) {
                let base = o * s * inner;
                data.extend_from_slice(&p.data()[base..base + s * inner]);
            }
        }
        let mut shape = first.to_vec();
        shape[dim] = total;
        Tensor::from_op(parts, &shape, data, move |g, _| {
            let mut grads: Vec<Vec<T>> = sizes
                .iter()
                .map(|&s| Vec::with_capacity(outer * s * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &s) in grads.iter_mut().zip(&sizes) {
                    gp.extend_from_slice(&g[off..off + s * inner]);
                    off += s * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        })
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Tensor<T> {
        let rank = self.shape().len();
        assert!(a < rank && b < rank, "transpose axes out of range");
        if a == b {
            return self.clone();
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// General axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Tensor<T> {
        let shape = self.shape().to_vec();
        let rank = shape.len();
        assert_eq!(perm.len(), rank, "permutation rank mismatch");
        let mut seen = vec![false; rank];
        for &p in perm {
            assert!(p < rank && !seen[p], "invalid permutation {perm:?}");
            seen[p] = true;
        }
        let mut in_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let index = permuted_offsets(&out_shape, &strides);
        let src = self.data();
        let data = index.iter().map(|&i| src[i]).collect();
        let n = self.numel();
        Tensor::from_op(&[self], &out_shape, data, move |g, _| {
            let mut gx = vec![T::zero(); n];
            for (&gi, &i) in g.iter().zip(&index) {
                gx[i] = gi;
            }
            vec![Some(gx)]
        })
    }
}

fn permuted_offsets(shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let total = numel(shape);
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        out.push(idx.iter().zip(strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn narrow_then_concat_round_trips() {
        let x = Tensor::<f64>::var((0..24).map(f64::from).collect(), &[2, 3, 4]);
        let a = x.narrow(1, 0, 1);
        let b = x.narrow(1, 1, 2);
        assert_eq!(a.shape(), &[2, 1, 4]);
        assert_eq!(a.data(), &[0.0, 1.0, 2.0, 3.0, 12.0, 13.0, 14.0, 15.0]);
        let y = Tensor::concat(&[&a, &b], 1);
        assert_eq!(y.data(), x.data());
        let w = Tensor::from_vec((0..24).map(|v| v as f64 * 0.5).collect(), &[2, 3, 4]);
        let g = y.mul(&w).sum_all().backward();
        assert_eq!(g.get(&x).unwrap(), w.data());
    }

    #[test]
    fn permute_moves_axes_and_gradients() {
        let x = Tensor::<f64>::var((0..6).map(f64::from).collect(), &[2, 3]);
        let t = x.transpose(0, 1);
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let w = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]);
        let g = t.mul(&w).sum_all().backward();
        assert_eq!(g.get(&x).unwrap(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }
}
