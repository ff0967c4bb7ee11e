use crate::{Gradients, ParamStore, Scalar};

/// Hyper-parameters of the Adam optimizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, t)| vec![T::zero(); t.numel()])
                .collect()
        };
        Adam {
            config,
            state: AdamState {
                step: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    /// One update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        let collected = params.collect_grads(grads);
        self.step_with(params, collected);
    }

    pub fn step_with(&mut self, params: &mut ParamStore<T>, grads: Vec<Option<Vec<T>>>) {
        assert_eq!(
            grads.len(),
            params.len(),
            "gradient list does not match parameters"
        );
        self.state.step += 1;
        let c = self.config;
        let t = self.state.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let step_size = T::from_f64_lossy(c.lr / bc1);
        let inv_bc2 = T::from_f64_lossy(1.0 / bc2);
        let eps = T::from_f64_lossy(c.eps);
        let ids: Vec<_> = params.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let m = &mut self.state.m[id.0];
            let v = &mut self.state.v[id.0];
            let mut p = params.get(id).to_vec();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
            params.set(id, p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut ps = ParamStore::<f64>::new();
        let id = ps.add("x", vec![3.0, -2.0], &[2]);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &ps,
        );
        for _ in 0..500 {
            let loss = ps.get(id).add_scalar(-1.0).sqr().sum_all();
            let g = loss.backward();
            opt.step(&mut ps, &g);
        }
        for &v in ps.get(id).data() {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = ParamStore::<f32>::new();
        let id = ps.add("x", vec![0.5, 0.25], &[2]);
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        opt.step_with(&mut ps, vec![Some(vec![0.0, 0.0])]);
        assert_eq!(ps.get(id).data(), &[0.5, 0.25]);
        opt.step_with(&mut ps, vec![None]);
        assert_eq!(ps.get(id).data(), &[0.5, 0.25]);
    }
}
