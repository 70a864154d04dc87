use crate::scalar::Scalar;

pub const WARMUP_STEPS: u64 = 2000;

/// Inverse-square-root schedule with linear warmup.
pub fn lr_schedule(step: u64, d_model: usize, warmup: u64) -> f64 {
    let s = step.max(1) as f64;
    (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5))
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup: u64,
    pub d_model: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(size: usize, d_model: usize) -> Self {
        OptimizerState {
            first: vec![T::zero(); size],
            second: vec![T::zero(); size],
            step: 0,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-6,
            warmup: WARMUP_STEPS,
            d_model,
        }
    }

    /// Applies one bias-corrected Adam update and returns the learning rate used.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> f64 {
        self.step += 1;
        let lr = lr_schedule(self.step, self.d_model, self.warmup);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let (lr_t, eps) = (T::of(lr), T::of(self.eps));
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p = *p - lr_t * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        lr
    }
}
