use super::Matrix;
use crate::scalar::Scalar;

/// A named parameter tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    pub first_moment: Matrix<T>,
    pub second_moment: Matrix<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Ordered collection of named parameters.
///
/// The order is the declaration order used by checkpoints.
pub trait ParamStore<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params().into_iter().find(|p| p.name == name)
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    fn grads_finite(&self) -> bool {
        self.params().iter().all(|p| p.grad.all_finite())
    }

    fn values_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.all_finite())
    }

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}
