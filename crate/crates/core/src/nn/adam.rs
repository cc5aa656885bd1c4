use super::{c, Grads, ParamStore};
use crate::Scalar;
use ndarray::{Array2, Zip};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup from 0 to `peak_lr` over this many steps.
    pub warmup_steps: u64,
    /// Linear decay reaches 0 at this step.
    pub total_steps: u64,
    /// Gradients are rescaled to at most this global L2 norm; 0 disables.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            peak_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 100,
            total_steps: 10_000,
            clip_norm: 1.0,
        }
    }
}

impl AdamConfig {
    /// Learning rate for 1-based `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let s = step as f64;
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.peak_lr * s / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let left = self.total_steps.saturating_sub(step) as f64;
        self.peak_lr * (left / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Array2::zeros(p.raw_dim()))
                .collect()
        };
        Adam {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update and returns the learning rate used.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &mut Grads<T>) -> f64 {
        self.step += 1;
        if self.cfg.clip_norm > 0.0 {
            let norm = grads.global_norm();
            let limit = c::<T>(self.cfg.clip_norm);
            if norm > limit {
                grads.scale(limit / norm);
            }
        }
        let lr = self.cfg.lr_at(self.step);
        let (b1, b2) = (c::<T>(self.cfg.beta1), c::<T>(self.cfg.beta2));
        let bc1 = c::<T>(1.0 - self.cfg.beta1.powi(self.step as i32));
        let bc2 = c::<T>(1.0 - self.cfg.beta2.powi(self.step as i32));
        let (lr_t, eps) = (c::<T>(lr), c::<T>(self.cfg.eps));
        let one = T::one();
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p = *p - lr_t * mh / (vh.sqrt() + eps);
            });
        }
        lr
    }
}
