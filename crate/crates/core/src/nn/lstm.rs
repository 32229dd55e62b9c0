use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::params::Parameterized;
use crate::error::{ReicError, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Single-layer long short-term memory cell.
///
/// The four gate blocks are stacked row-wise in the order
/// input, forget, output, candidate; each block is `hidden × (input + hidden)`
/// and consumes the concatenation `[x, h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden_dim),
            c: Array1::zeros(hidden_dim),
        }
    }
}

/// Activations saved by [`LstmCell::step`] for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    xh: Array1<f64>,
    c_prev: Array1<f64>,
    input: Array1<f64>,
    forget: Array1<f64>,
    output: Array1<f64>,
    candidate: Array1<f64>,
    tanh_c: Array1<f64>,
}

impl LstmCell {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases except
    /// the forget gate, which starts at +1.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let fan_in = input_dim + hidden_dim;
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((4 * hidden_dim, fan_in), |_| rng.random_range(-bound..bound));
        let mut bias = Array1::zeros(4 * hidden_dim);
        bias.slice_mut(s![hidden_dim..2 * hidden_dim]).fill(1.0);
        Self::from_parts(input_dim, hidden_dim, weight, bias)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self::from_parts(
            input_dim,
            hidden_dim,
            Array2::zeros((4 * hidden_dim, input_dim + hidden_dim)),
            Array1::zeros(4 * hidden_dim),
        )
    }

    pub fn from_parts(input_dim: usize, hidden_dim: usize, weight: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weight.dim(), (4 * hidden_dim, input_dim + hidden_dim));
        assert_eq!(bias.len(), 4 * hidden_dim);
        LstmCell {
            input_dim,
            hidden_dim,
            grad_weight: Array2::zeros(weight.raw_dim()),
            grad_bias: Array1::zeros(bias.raw_dim()),
            weight,
            bias,
        }
    }

    pub fn step(&self, x: ArrayView1<f64>, state: &LstmState) -> Result<(LstmState, LstmCache)> {
        if x.len() != self.input_dim {
            return Err(ReicError::shape("recurrent input", self.input_dim, x.len()));
        }
        if state.h.len() != self.hidden_dim || state.c.len() != self.hidden_dim {
            return Err(ReicError::shape("recurrent state", self.hidden_dim, state.h.len()));
        }
        let hd = self.hidden_dim;
        let xh = concatenate(Axis(0), &[x, state.h.view()]).expect("1-d concat");
        let pre = self.weight.dot(&xh) + &self.bias;

        let input = pre.slice(s![..hd]).mapv(sigmoid);
        let forget = pre.slice(s![hd..2 * hd]).mapv(sigmoid);
        let output = pre.slice(s![2 * hd..3 * hd]).mapv(sigmoid);
        let candidate = pre.slice(s![3 * hd..]).mapv(f64::tanh);

        let c = &forget * &state.c + &input * &candidate;
        let tanh_c = c.mapv(f64::tanh);
        let h = &output * &tanh_c;

        let cache = LstmCache {
            xh,
            c_prev: state.c.clone(),
            input,
            forget,
            output,
            candidate,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Accumulates parameter gradients for one step and returns
    /// `(dL/dx, dL/dh_prev, dL/dc_prev)`.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        grad_h: ArrayView1<f64>,
        grad_c: ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
        let hd = self.hidden_dim;
        let d_output = &grad_h * &cache.tanh_c;
        let dc = &grad_c + &(&grad_h * &cache.output * cache.tanh_c.mapv(|t| 1.0 - t * t));
        let d_forget = &dc * &cache.c_prev;
        let d_input = &dc * &cache.candidate;
        let d_candidate = &dc * &cache.input;
        let dc_prev = &dc * &cache.forget;

        let mut dpre = Array1::zeros(4 * hd);
        dpre.slice_mut(s![..hd])
            .assign(&(&d_input * &cache.input.mapv(|g| g * (1.0 - g))));
        dpre.slice_mut(s![hd..2 * hd])
            .assign(&(&d_forget * &cache.forget.mapv(|g| g * (1.0 - g))));
        dpre.slice_mut(s![2 * hd..3 * hd])
            .assign(&(&d_output * &cache.output.mapv(|g| g * (1.0 - g))));
        dpre.slice_mut(s![3 * hd..])
            .assign(&(&d_candidate * &cache.candidate.mapv(|g| 1.0 - g * g)));

        for (mut row, &g) in self.grad_weight.outer_iter_mut().zip(dpre.iter()) {
            if g != 0.0 {
                row.scaled_add(g, &cache.xh);
            }
        }
        self.grad_bias += &dpre;

        let dxh = self.weight.t().dot(&dpre);
        let dx = dxh.slice(s![..self.input_dim]).to_owned();
        let dh_prev = dxh.slice(s![self.input_dim..]).to_owned();
        (dx, dh_prev, dc_prev)
    }
}

impl Parameterized for LstmCell {
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
