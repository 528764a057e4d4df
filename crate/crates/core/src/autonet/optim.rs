use serde::{Deserialize, Serialize};

use super::tensor::{Parameter, Real};

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step<T: Real>(&self, p: &mut Parameter<T>) {
        p.step_count += 1;
        let t = p.step_count as i32;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let c1 = T::from_f64(1.0 - self.beta1);
        let c2 = T::from_f64(1.0 - self.beta2);
        let bias1 = T::from_f64(1.0 - self.beta1.powi(t));
        let bias2 = T::from_f64(1.0 - self.beta2.powi(t));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        let g = p.grad.data();
        let m = p.m.data_mut();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + c1 * gi;
        }
        let v = p.v.data_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + c2 * gi * gi;
        }
        let (m, v) = (p.m.data(), p.v.data());
        for ((w, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::Tensor;

    fn scalar(w: f64, g: f64) -> Parameter<f64> {
        let mut p = Parameter::new(Tensor::from_vec(&[1], vec![w]).unwrap());
        p.grad = Tensor::from_vec(&[1], vec![g]).unwrap();
        p
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(1.0, 1.0);
        Adam::new(0.1).step(&mut p);
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn zero_gradient_keeps_weight() {
        let mut p = scalar(0.7, 0.0);
        Adam::new(0.1).step(&mut p);
        assert_eq!(p.value.data()[0], 0.7);
    }

    #[test]
    fn identical_state_identical_update() {
        let mut a = scalar(0.3, -0.2);
        let mut b = a.clone();
        let opt = Adam::new(0.01);
        for _ in 0..5 {
            opt.step(&mut a);
            opt.step(&mut b);
        }
        assert_eq!(a, b);
    }
}
