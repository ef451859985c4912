use crate::error::{Error, Result};

use super::Param;

#[derive(Clone, Debug, PartialEq)]
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

/// Bias-corrected Adam. Moment buffers are allocated on the first step and
/// stay aligned with the parameter order passed to [`Adam::step`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update from the gradients stored in each parameter's
    /// grad slot. A missing grad slot counts as a zero gradient.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::dim(format!(
                "optimiser tracks {} parameters, step got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.value.numel() != m.len() {
                return Err(Error::dim(format!(
                    "parameter {} has {} elements, moments have {}",
                    p.name,
                    p.value.numel(),
                    m.len()
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.value.grad.take();
            let data = p.value.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.value.grad = grad;
        }
        Ok(())
    }
}

/// Step decay: the base rate is multiplied by `factor` once for every
/// milestone epoch already reached. Epochs are zero-based, so milestone 50
/// means "from the 51st epoch on".
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn new(base: f64, milestones: Vec<usize>, factor: f64) -> Self {
        LrSchedule {
            base,
            milestones,
            factor,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.factor.powi(passed as i32)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::new(1e-4, vec![50, 75], 0.1)
    }
}
