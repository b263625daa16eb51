use super::Tensor;

/// A named trainable value together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.value.data_mut()
    }

    /// Mutable access to value and gradient at once (optimizer updates).
    pub fn split_mut(&mut self) -> (&mut [f64], &[f64]) {
        (self.value.data_mut(), self.grad.data())
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (d, &s) in self.grad.data_mut().iter_mut().zip(g) {
            *d += s;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_tracks_value_shape_and_zeroes() {
        let mut p = Parameter::new("w", Tensor::zeros(vec![2, 3]));
        assert_eq!(p.grad().shape(), p.value().shape());
        p.accumulate_grad(&[1.0; 6]);
        p.accumulate_grad(&[0.5; 6]);
        assert!(p.grad().data().iter().all(|&g| g == 1.5));
        p.zero_grad();
        assert!(p.grad().data().iter().all(|&g| g == 0.0));
    }
}
