use super::cast;
use crate::{Scalar, Tensor};

fn check_same(a: &[usize], b: &[usize], op: &str) {
    assert_eq!(a, b, "{op}: shape mismatch {a:?} vs {b:?}");
}

impl<T: Scalar> Tensor<T> {
    fn unary<F, D>(&self, f: F, df: D) -> Tensor<T>
    where
        F: Fn(T) -> T,
        D: Fn(T, T) -> T + 'static,
    {
        let data: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let x = self.data_rc();
        Tensor::from_op(&[self], self.shape(), data, move |g, y| {
            let gx = g
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Tensor<T> {
        check_same(self.shape(), rhs.shape(), "add");
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_op(&[self, rhs], self.shape(), data, |g, _| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        })
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Tensor<T> {
        check_same(self.shape(), rhs.shape(), "sub");
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Tensor::from_op(&[self, rhs], self.shape(), data, |g, _| {
            vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())]
        })
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        check_same(self.shape(), rhs.shape(), "mul");
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a * b)
            .collect();
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let (ra, rb) = (self.requires_grad(), rhs.requires_grad());
        Tensor::from_op(&[self, rhs], self.shape(), data, move |g, _| {
            let ga = ra.then(|| g.iter().zip(b.iter()).map(|(&g, &b)| g * b).collect());
            let gb = rb.then(|| g.iter().zip(a.iter()).map(|(&g, &a)| g * a).collect());
            vec![ga, gb]
        })
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Tensor<T> {
        check_same(self.shape(), rhs.shape(), "div");
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a / b)
            .collect();
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let (ra, rb) = (self.requires_grad(), rhs.requires_grad());
        Tensor::from_op(&[self, rhs], self.shape(), data, move |g, _| {
            let ga = ra.then(|| g.iter().zip(b.iter()).map(|(&g, &b)| g / b).collect());
            let gb = rb.then(|| {
                g.iter()
                    .zip(a.iter().zip(b.iter()))
                    .map(|(&g, (&a, &b))| -g * a / (b * b))
                    .collect()
            });
            vec![ga, gb]
        })
    }

    /// Sum of several same-shaped tensors in one node.
    pub fn sum_n(terms: &[&Tensor<T>]) -> Tensor<T> {
        assert!(!terms.is_empty(), "sum_n of nothing");
        let shape = terms[0].shape();
        let mut data = terms[0].to_vec();
        for t in &terms[1..] {
            check_same(shape, t.shape(), "sum_n");
            data.iter_mut().zip(t.data()).for_each(|(a, &b)| *a += b);
        }
        let n = terms.len();
        Tensor::from_op(terms, shape, data, move |g, _| vec![Some(g.to_vec()); n])
    }

    pub fn scale(&self, s: f64) -> Tensor<T> {
        let s: T = cast(s);
        let data = self.data().iter().map(|&x| x * s).collect();
        Tensor::from_op(&[self], self.shape(), data, move |g, _| {
            vec![Some(g.iter().map(|&g| g * s).collect())]
        })
    }

    pub fn add_scalar(&self, s: f64) -> Tensor<T> {
        let s: T = cast(s);
        let data = self.data().iter().map(|&x| x + s).collect();
        Tensor::from_op(&[self], self.shape(), data, |g, _| vec![Some(g.to_vec())])
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-1.0)
    }

    pub fn sqr(&self) -> Tensor<T> {
        let two: T = cast(2.0);
        self.unary(|x| x * x, move |x, _| two * x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        let half: T = cast(0.5);
        self.unary(|x| x.sqrt(), move |_, y| half / y)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        let s: T = cast(slope);
        self.unary(
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(
            |x| {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            },
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Tensor<T> {
        self.unary(
            |x| x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            |x, _| {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            },
        )
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<T> {
        let (lo, hi): (T, T) = (cast(lo), cast(hi));
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| {
                if x >= lo && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Rounds `x * levels` to the nearest integer and divides back; the
    /// gradient is passed through unchanged (straight-through estimator).
    pub fn round_ste(&self, levels: f64) -> Tensor<T> {
        let l: T = cast(levels);
        let data = self.data().iter().map(|&x| (x * l).round() / l).collect();
        Tensor::from_op(&[self], self.shape(), data, |g, _| vec![Some(g.to_vec())])
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    fn fd_check(f: impl Fn(&Tensor<f64>) -> Tensor<f64>, xs: &[f64]) {
        let x = Tensor::var(xs.to_vec(), &[xs.len()]);
        let g = f(&x).sum_all().backward();
        let g = g.get(&x).unwrap();
        let h = 1e-6;
        for i in 0..xs.len() {
            let mut p = xs.to_vec();
            p[i] += h;
            let mut m = xs.to_vec();
            m[i] -= h;
            let fp = f(&Tensor::from_vec(p, &[xs.len()])).sum_all().item();
            let fm = f(&Tensor::from_vec(m, &[xs.len()])).sum_all().item();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "i={i} fd={fd} ad={}",
                g[i]
            );
        }
    }

    const XS: [f64; 6] = [-2.3, -0.7, -0.1, 0.2, 0.9, 3.1];

    #[test]
    fn unary_gradients_match_finite_differences() {
        fd_check(|x| x.sigmoid(), &XS);
        fd_check(|x| x.tanh(), &XS);
        fd_check(|x| x.softplus(), &XS);
        fd_check(|x| x.leaky_relu(0.2), &XS);
        fd_check(|x| x.exp(), &XS);
        fd_check(|x| x.sqr(), &XS);
        fd_check(|x| x.abs(), &XS);
        fd_check(|x| x.clamp(-1.0, 1.0), &XS);
        fd_check(|x| x.sqr().add_scalar(1.0).sqrt().ln(), &XS);
    }

    #[test]
    fn binary_gradients_match_finite_differences() {
        let c = Tensor::from_vec(vec![0.5, -1.5, 2.0, 0.25, 3.0, -0.75], &[6]);
        fd_check(|x| x.mul(&c), &XS);
        fd_check(|x| x.div(&c.sqr().add_scalar(0.5)), &XS);
        fd_check(|x| c.div(&x.sqr().add_scalar(0.5)), &XS);
        fd_check(|x| x.sub(&c).mul(x), &XS);
        fd_check(|x| Tensor::sum_n(&[x, &c, &x.scale(3.0)]), &XS);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        let x = Tensor::<f32>::from_vec(vec![-200.0, 200.0], &[2]);
        let y = x.softplus();
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], 200.0);
    }

    #[test]
    fn round_ste_passes_gradient_through() {
        let x = Tensor::<f64>::var(vec![0.1, 0.5 / 255.0, 0.7], &[3]);
        let y = x.round_ste(255.0);
        assert_eq!(y.data()[1], 1.0 / 255.0);
        let g = y.sum_all().backward();
        assert_eq!(g.get(&x).unwrap(), &[1.0, 1.0, 1.0]);
    }
}
