//! AdamW with decoupled weight decay and a one-cycle learning-rate
//! schedule (linear warmup to the peak, cosine decay to peak/10).

use super::tape::ParamStore;
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = store
            .params
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect();
        AdamW {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update with an explicit learning rate (the schedule decides
    /// it); decay is decoupled from the adaptive step.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..store.params.len() {
            self.m[i] = &self.m[i] * b1 + &(&grads[i] * (1.0 - b1));
            self.v[i] = &self.v[i] * b2 + &(&grads[i] * &grads[i] * (1.0 - b2));
            let m_hat = &self.m[i] / bc1;
            let v_hat = &self.v[i] / bc2;
            let update = &m_hat / &(v_hat.mapv(f64::sqrt) + self.cfg.eps);
            store.params[i] = &store.params[i] * (1.0 - lr * self.cfg.weight_decay)
                - &(&update * lr);
        }
    }
}

/// One-cycle schedule over a fixed number of steps: linear warmup from
/// `peak / decay` to `peak` over the warmup fraction, then cosine decay
/// back down to `peak / decay`.
#[derive(Debug, Clone)]
pub struct OneCycle {
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub decay_factor: f64,
}

impl OneCycle {
    pub fn new(peak_lr: f64, total_steps: usize) -> Self {
        OneCycle {
            peak_lr,
            total_steps: total_steps.max(1),
            warmup_frac: 0.1,
            decay_factor: 10.0,
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let floor = self.peak_lr / self.decay_factor;
        let warm = (self.total_steps as f64 * self.warmup_frac).max(1.0);
        let s = step as f64;
        if s < warm {
            floor + (self.peak_lr - floor) * (s / warm)
        } else {
            let span = (self.total_steps as f64 - warm).max(1.0);
            let p = ((s - warm) / span).min(1.0);
            floor + (self.peak_lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
        }
    }
}
