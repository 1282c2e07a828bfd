use super::FitConfig;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, config: &FitConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Multiplies the learning rate by `factor`, keeping the moment estimates.
    pub fn decay(&mut self, factor: f64) {
        self.lr *= factor;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((x, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction, step one is lr * g / (|g| + eps).
        let config = FitConfig::default();
        let mut adam = Adam::new(2, &config);
        let mut x = [1.0, -2.0];
        adam.step(&mut x, &[3.0, -0.5]);
        assert!((x[0] - (1.0 - 0.01 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
        assert!((x[1] - (-2.0 + 0.01 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let config = FitConfig::default();
        let mut adam = Adam::new(2, &config);
        let mut x = [3.0, -1.0];
        for _ in 0..5000 {
            let g = [2.0 * (x[0] - 0.5), 20.0 * (x[1] + 0.25)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 0.5).abs() < 1e-3 && (x[1] + 0.25).abs() < 1e-3);
    }
}
