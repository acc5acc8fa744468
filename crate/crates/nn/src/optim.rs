//! Adam with bias correction, fused with gradient clearing.

use crate::param::Param;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Rebuilds an optimizer from saved moments.
    pub fn from_state(config: AdamConfig, step: u64, first: Vec<Vec<f32>>, second: Vec<Vec<f32>>) -> Self {
        Self {
            config,
            step,
            first,
            second,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.second
    }

    /// Applies one update from the accumulated gradients, then clears them.
    ///
    /// `params` must be passed in the order used at construction.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        assert_eq!(params.len(), self.first.len(), "parameter list changed since construction");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - (beta1 as f64).powi(t);
        let bc2 = 1.0 - (beta2 as f64).powi(t);
        let step_size = (lr as f64 / bc1) as f32;
        let inv_sqrt_bc2 = (1.0 / bc2.sqrt()) as f32;
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            assert_eq!(p.len(), m.len(), "parameter {} resized", p.name);
            let (b1c, b2c) = (1.0 - beta1, 1.0 - beta2);
            for (((w, g), mi), vi) in p.value.iter_mut().zip(p.grad.iter_mut()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gv = *g;
                let mn = beta1 * *mi + b1c * gv;
                let vn = beta2 * *vi + b2c * gv * gv;
                *mi = mn;
                *vi = vn;
                *w -= step_size * mn / (vn.sqrt() * inv_sqrt_bc2 + eps);
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        // With bias correction the first Adam step is lr * g / (|g| + eps).
        let mut p = Param::zeros("w", &[3]);
        p.grad = vec![2.0, -0.5, 0.0];
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        opt.step(vec![&mut p]);
        assert!((p.value[0] + 2e-4).abs() < 1e-9);
        assert!((p.value[1] - 2e-4).abs() < 1e-9);
        assert_eq!(p.value[2], 0.0);
        assert!(p.grad.iter().all(|&g| g == 0.0));
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::full("w", &[1], 3.0);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            &[&p],
        );
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.0);
            opt.step(vec![&mut p]);
        }
        assert!((p.value[0] - 1.0).abs() < 1e-2, "{}", p.value[0]);
    }
}
