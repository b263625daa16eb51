use std::f64::consts::PI;

use crate::autodiff::Parameter;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// `lr_min + ½(lr0 − lr_min)(1 + cos(π·t/T))`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * t).cos())
}

/// Bias-corrected Adam moments, one buffer pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self::for_parameters(params.as_slice())
    }

    /// Zeroed moments for a plain parameter list.
    pub fn for_parameters(params: &[Parameter]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    /// Applies one update from the gradients accumulated on `params`.
    pub fn step(&mut self, params: &mut ModelParams, lr: f64) -> Result<()> {
        self.update(params.iter_mut(), lr)
    }

    pub fn step_parameters(&mut self, params: &mut [Parameter], lr: f64) -> Result<()> {
        self.update(params.iter_mut(), lr)
    }

    fn update<'a>(&mut self, params: impl ExactSizeIterator<Item = &'a mut Parameter>, lr: f64) -> Result<()> {
        let mut params: Vec<&mut Parameter> = params.collect();
        if self.m.len() != params.len() || params.iter().zip(&self.m).any(|(p, m)| p.len() != m.len()) {
            return Err(Error::invalid("adam: moment buffers do not match the parameters"));
        }
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (values, grads) = p.split_mut();
            for (((x, &g), m), v) in values.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{Arch, Task};

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 0.0), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5 < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for t in 0..=100 {
            let lr = cosine_lr(t, 100, 1e-3, 0.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn tiny() -> ModelParams {
        ModelParams::init(Arch::tiny(Task::Classification, 3, 16), 3).unwrap()
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = tiny();
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        for _ in 0..5 {
            adam.step(&mut p, 1e-2).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut p = tiny();
        let before = p.clone();
        for q in p.iter_mut() {
            let g = vec![0.37; q.len()];
            q.accumulate_grad(&g);
        }
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, 1e-3).unwrap();
        for (a, b) in p.iter().zip(before.iter()) {
            for (x, y) in a.value().data().iter().zip(b.value().data()) {
                assert!(((y - x) - 1e-3).abs() < 1e-10);
            }
        }
    }

    /// Minimises ‖x‖² from a unit-norm start, with the optimizer as its own oracle.
    fn bowl(steps: usize) -> Vec<f64> {
        let mut p = vec![Parameter::new("x", Tensor::vector(vec![0.6, -0.8]))];
        let mut adam = AdamState::for_parameters(&p);
        let mut norms = Vec::new();
        for _ in 0..steps {
            p[0].zero_grad();
            let g: Vec<f64> = p[0].value().data().iter().map(|x| 2.0 * x).collect();
            p[0].accumulate_grad(&g);
            adam.step_parameters(&mut p, 1e-2).unwrap();
            norms.push(p[0].value().data().iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        norms
    }

    #[test]
    fn quadratic_bowl_converges() {
        let norms = bowl(500);
        assert!(norms[499] < 1e-3, "{}", norms[499]);
        // monotone while far from the optimum
        assert!(norms.windows(2).take(50).all(|w| w[1] < w[0]));
    }
}
