use crate::{numel, Scalar, Tensor};

/// Strides of `small` viewed inside `big`, zero along broadcast axes.
fn broadcast_strides(small: &[usize], big: &[usize]) -> Vec<usize> {
    assert_eq!(
        small.len(),
        big.len(),
        "broadcast requires equal rank: {small:?} vs {big:?}"
    );
    let mut strides = vec![0; small.len()];
    let mut acc = 1;
    for i in (0..small.len()).rev() {
        if small[i] == big[i] {
            strides[i] = acc;
        } else {
            assert_eq!(small[i], 1, "cannot broadcast {small:?} to {big:?}");
        }
        acc *= small[i];
    }
    strides
}

/// Visits every index of `big`, yielding (flat big index, flat small index).
fn for_each_broadcast(small: &[usize], big: &[usize], mut f: impl FnMut(usize, usize)) {
    let strides = broadcast_strides(small, big);
    let rank = big.len();
    let total = numel(big);
    if total == 0 {
        return;
    }
    if rank == 0 {
        f(0, 0);
        return;
    }
    let inner = big[rank - 1];
    let inner_stride = strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut flat = 0;
    while flat < total {
        let base: usize = idx[..rank - 1]
            .iter()
            .zip(&strides)
            .map(|(i, s)| i * s)
            .sum();
        for j in 0..inner {
            f(flat + j, base + j * inner_stride);
        }
        flat += inner;
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if idx[d] < big[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn sum_into<T: Scalar>(src: &[T], big: &[usize], small: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); numel(small)];
    for_each_broadcast(small, big, |b, s| out[s] += src[b]);
    out
}

impl<T: Scalar> Tensor<T> {
    pub fn sum_all(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(&[self], &[], vec![s], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Expands axes of size one to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Tensor<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let src = self.data();
        let mut data = vec![T::zero(); numel(shape)];
        for_each_broadcast(self.shape(), shape, |b, s| data[b] = src[s]);
        let (big, small) = (shape.to_vec(), self.shape().to_vec());
        Tensor::from_op(&[self], shape, data, move |g, _| {
            vec![Some(sum_into(g, &big, &small))]
        })
    }

    /// Sums over axes so the result has `shape` (each axis equal or one).
    pub fn sum_to(&self, shape: &[usize]) -> Tensor<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let data = sum_into(self.data(), self.shape(), shape);
        let (big, small) = (self.shape().to_vec(), shape.to_vec());
        Tensor::from_op(&[self], shape, data, move |g, _| {
            let mut out = vec![T::zero(); numel(&big)];
            for_each_broadcast(&small, &big, |b, s| out[b] = g[s]);
            vec![Some(out)]
        })
    }

    pub fn mean_to(&self, shape: &[usize]) -> Tensor<T> {
        let ratio = self.numel() as f64 / numel(shape).max(1) as f64;
        self.sum_to(shape).scale(1.0 / ratio)
    }

    /// Broadcasting multiply: `rhs` may have size-one axes.
    pub fn mul_b(&self, rhs: &Tensor<T>) -> Tensor<T> {
        self.mul(&rhs.broadcast_to(self.shape()))
    }

    /// Broadcasting add: `rhs` may have size-one axes.
    pub fn add_b(&self, rhs: &Tensor<T>) -> Tensor<T> {
        self.add(&rhs.broadcast_to(self.shape()))
    }

    /// Mean of squared differences.
    pub fn mse(&self, rhs: &Tensor<T>) -> Tensor<T> {
        self.sub(rhs).sqr().mean_all()
    }

    pub fn max_value(&self) -> T {
        self.data().iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data().iter().copied().fold(T::infinity(), T::min)
    }
}
