//! Adam with decoupled weight decay.

use super::matrix::DenseMatrix;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of every parameter tensor from its gradient, in matching order.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DenseMatrix>,
        grads: impl IntoIterator<Item = &'a DenseMatrix>,
    ) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (idx, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            if idx == self.m.len() {
                self.m.push(vec![0.0; g.data().len()]);
                self.v.push(vec![0.0; g.data().len()]);
            }
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let update = (*mv / c1) / ((*vv / c2).sqrt() + self.eps);
                *w -= self.lr * self.weight_decay * *w + self.lr * update;
            }
        }
    }
}
