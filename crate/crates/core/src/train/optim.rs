use crate::model::{Scalar, Tensors};

/// Adam without weight decay or schedule.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` from `grads`; both sets must share a layout.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G)
    where
        P: Tensors<S> + ?Sized,
        G: Tensors<S> + ?Sized,
    {
        let n = params.num_elements();
        if self.m.len() != n {
            self.m = vec![S::zero(); n];
            self.v = vec![S::zero(); n];
        }
        self.step += 1;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let c1 = S::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = S::of(1.0 - self.beta2.powi(self.step as i32));
        let lr = S::of(self.lr);
        let eps = S::of(self.eps);
        let grads = grads.tensors();
        let mut i = 0;
        for ((_, mut p), (_, g)) in params.tensors_mut().into_iter().zip(grads.iter()) {
            assert_eq!(p.shape(), g.shape(), "gradient layout mismatch");
            for (w, &g) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = b1 * *m + (S::one() - b1) * g;
                *v = b2 * *v + (S::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
                i += 1;
            }
        }
    }
}
