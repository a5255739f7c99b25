use alloc::vec::Vec;

/// Adam with bias correction. One moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize], learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_on_quadratic_matches_hand_calculation() {
        // f(x) = (x - 3)^2 at x = 0: g = -6, m_hat = -6, v_hat = 36,
        // x1 = 0 + lr * 6 / (6 + eps).
        let lr = 0.1;
        let mut adam = Adam::new(&[1], lr, 0.9, 0.999, 1e-8);
        let mut x = [0.0];
        adam.step(vec![&mut x[..]], &[vec![-6.0]]);
        assert!((x[0] - lr * 6.0 / (6.0 + 1e-8)).abs() < 1e-15);
        // Second step, g = 2 * (x1 - 3).
        let x1 = x[0];
        let g2 = 2.0 * (x1 - 3.0);
        adam.step(vec![&mut x[..]], &[vec![g2]]);
        let m = 0.9 * (0.1 * -6.0) + 0.1 * g2;
        let v = 0.999 * (0.001 * 36.0) + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64 * 0.999);
        let expected = x1 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((x[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut adam = Adam::new(&[3], 0.0, 0.9, 0.999, 1e-8);
        let mut p = [1.0, -2.0, 3.5];
        adam.step(vec![&mut p[..]], &[vec![0.3, -0.1, 9.0]]);
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }
}
