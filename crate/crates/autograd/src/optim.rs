use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        let m: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        let c = self.config;
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= c.lr * c.weight_decay * *w;
                *w -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut ps = ParamSet::new();
        ps.register("w", Tensor::from_vec(vec![1.0, -1.0], &[2]));
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.1,
                weight_decay: 0.0,
                ..Default::default()
            },
            &ps,
        );
        opt.step(&mut ps, &[Tensor::from_vec(vec![3.0, -0.5], &[2])]);
        let w = ps.get(crate::ParamId(0)).data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut ps = ParamSet::new();
        let id = ps.register("w", Tensor::from_vec(vec![4.0, -3.0], &[2]));
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.05,
                ..Default::default()
            },
            &ps,
        );
        for _ in 0..2000 {
            let g = Graph::new();
            let b = ps.bind(&g);
            let loss = b.get(id).square().sum_all();
            let mut grads = g.backward(loss);
            let gr = b.gradients(&mut grads);
            opt.step(&mut ps, &gr);
        }
        assert!(ps.get(id).max_abs() < 1e-2);
    }
}
