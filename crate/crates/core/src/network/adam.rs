use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. State is allocated on the first step,
/// one moment pair per tensor.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            ..Default::default()
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "tensor count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut w = vec![1.5, -2.0];
        for _ in 0..5 {
            adam.step(&mut [w.as_mut_slice()], &[&[0.0, 0.0]]);
        }
        assert_eq!(w, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 after bias correction, so the step is
        // lr / (1 + eps).
        let mut adam = Adam::new(AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        });
        let mut w = vec![0.0];
        adam.step(&mut [w.as_mut_slice()], &[&[1.0]]);
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        // constant gradient keeps the step size at lr
        adam.step(&mut [w.as_mut_slice()], &[&[1.0]]);
        assert!((w[0] - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn identical_runs_match() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::default());
            let mut w = vec![0.3, 0.7];
            for i in 0..20 {
                let g = [w[0] - 1.0 + i as f64 * 0.01, w[1] * 2.0];
                adam.step(&mut [w.as_mut_slice()], &[&g]);
            }
            w
        };
        assert_eq!(run(), run());
    }
}
