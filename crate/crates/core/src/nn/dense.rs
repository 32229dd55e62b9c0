use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::params::Parameterized;
use crate::error::{ReicError, Result};

/// Fully connected layer `y = W x + b` with in-place gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

impl DenseLayer {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound));
        Self::from_parts(weight, Array1::zeros(out_dim))
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::from_parts(Array2::zeros((out_dim, in_dim)), Array1::zeros(out_dim))
    }

    pub fn from_parts(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weight.nrows(), bias.len(), "bias length must equal output dim");
        DenseLayer {
            grad_weight: Array2::zeros(weight.raw_dim()),
            grad_bias: Array1::zeros(bias.raw_dim()),
            weight,
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.in_dim() {
            return Err(ReicError::shape("dense input", self.in_dim(), x.len()));
        }
        Ok(self.weight.dot(&x) + &self.bias)
    }

    /// Applies the layer to every row of `x`.
    pub fn forward_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(ReicError::shape("dense input", self.in_dim(), x.ncols()));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Accumulates parameter gradients for one input and returns dL/dx.
    pub fn backward(&mut self, x: ArrayView1<f64>, grad_out: ArrayView1<f64>) -> Array1<f64> {
        for (mut row, &g) in self.grad_weight.outer_iter_mut().zip(grad_out.iter()) {
            if g != 0.0 {
                row.scaled_add(g, &x);
            }
        }
        self.grad_bias += &grad_out;
        self.weight.t().dot(&grad_out)
    }

    /// Row-batched [`DenseLayer::backward`].
    pub fn backward_rows(&mut self, x: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> Array2<f64> {
        self.grad_weight += &grad_out.t().dot(&x);
        self.grad_bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight)
    }
}

impl Parameterized for DenseLayer {
    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        f(
            self.weight.as_slice().expect("standard layout"),
            self.grad_weight.as_slice().expect("standard layout"),
        );
        f(
            self.bias.as_slice().expect("standard layout"),
            self.grad_bias.as_slice().expect("standard layout"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(
            self.weight.as_slice_mut().expect("standard layout"),
            self.grad_weight.as_slice_mut().expect("standard layout"),
        );
        f(
            self.bias.as_slice_mut().expect("standard layout"),
            self.grad_bias.as_slice_mut().expect("standard layout"),
        );
    }
}
