//! The five layer primitives and their reverse-mode gradients.
//!
//! Everything operates on `D x T` matrices (channels by snippets). Forward
//! and backward are pure functions; accumulation orders are fixed so results
//! are bit-reproducible, and a kernel-size-1 temporal convolution reproduces
//! a fully-connected layer exactly (same operations in the same order).

use serde::{Deserialize, Serialize};

use crate::error::NumError;
use crate::numcore::rng::{seeded_init, InitScheme};
use crate::numcore::tensor::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    FullyConnected,
    TemporalConv,
}

impl LayerKind {
    /// Stable one-byte tag used by the checkpoint container.
    pub fn code(&self) -> u8 {
        match self {
            LayerKind::FullyConnected => 0,
            LayerKind::TemporalConv => 1,
        }
    }
}

/// Parameters of one layer. `weights` is `C_out x C_in` for a fully-connected
/// layer and `C_out x (C_in * kernel_size)` for a temporal convolution, with
/// the kernel tap index fastest: column `i * kernel_size + dt` holds the tap
/// `dt` for input channel `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub kind: LayerKind,
    pub weights: Tensor2D,
    pub bias: Vec<f64>,
    pub kernel_size: usize,
}

impl LayerParams {
    pub fn fully_connected(c_in: usize, c_out: usize, seed: u64) -> Self {
        LayerParams {
            kind: LayerKind::FullyConnected,
            weights: seeded_init(c_out, c_in, seed, InitScheme::UniformFanIn),
            bias: vec![0.0; c_out],
            kernel_size: 1,
        }
    }

    pub fn temporal_conv(
        c_in: usize,
        c_out: usize,
        kernel_size: usize,
        seed: u64,
    ) -> Result<Self, NumError> {
        if kernel_size % 2 == 0 {
            return Err(NumError::config(
                "temporal_conv",
                format!("kernel_size must be odd for same-length padding, got {kernel_size}"),
            ));
        }
        Ok(LayerParams {
            kind: LayerKind::TemporalConv,
            weights: seeded_init(c_out, c_in * kernel_size, seed, InitScheme::UniformFanIn),
            bias: vec![0.0; c_out],
            kernel_size,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.weights.cols(),
            LayerKind::TemporalConv => self.weights.cols() / self.kernel_size,
        }
    }

    /// Dispatches to the forward pass matching `kind`.
    pub fn forward(&self, input: &Tensor2D) -> Result<Tensor2D, NumError> {
        match self.kind {
            LayerKind::FullyConnected => fully_connected(input, self),
            LayerKind::TemporalConv => temporal_conv(input, self),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Gradients with the same shapes as the layer they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor2D,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(params: &LayerParams) -> Self {
        LayerGrads {
            weights: Tensor2D::zeros(params.weights.rows(), params.weights.cols()),
            bias: vec![0.0; params.bias.len()],
        }
    }
}

/// `out(:,t) = W * input(:,t) + b` for every column, no activation.
pub fn fully_connected(input: &Tensor2D, params: &LayerParams) -> Result<Tensor2D, NumError> {
    if params.kind != LayerKind::FullyConnected {
        return Err(NumError::config("fully_connected", "params.kind is not fully-connected"));
    }
    if params.weights.cols() != input.rows() {
        return Err(NumError::dimension(
            "fully_connected",
            format!(
                "weight cols {} != input rows {}",
                params.weights.cols(),
                input.rows()
            ),
        ));
    }
    let (c_out, c_in, t_len) = (params.out_channels(), input.rows(), input.cols());
    let mut out = Tensor2D::zeros(c_out, t_len);
    for c in 0..c_out {
        for d in 0..c_in {
            let w = params.weights.get(c, d);
            let x_row = input.row(d);
            let out_row = out.row_mut(c);
            for t in 0..t_len {
                out_row[t] += w * x_row[t];
            }
        }
        let b = params.bias[c];
        for v in out.row_mut(c) {
            *v += b;
        }
    }
    Ok(out)
}

/// Backward pass of [`fully_connected`]. Returns parameter gradients and,
/// when `want_input_grad`, the gradient w.r.t. the input.
pub fn fully_connected_backward(
    input: &Tensor2D,
    params: &LayerParams,
    grad_out: &Tensor2D,
    want_input_grad: bool,
) -> (LayerGrads, Option<Tensor2D>) {
    let (c_out, c_in, t_len) = (params.out_channels(), input.rows(), input.cols());
    debug_assert_eq!(grad_out.rows(), c_out);
    debug_assert_eq!(grad_out.cols(), t_len);
    let mut grads = LayerGrads::zeros_like(params);
    for c in 0..c_out {
        let g_row = grad_out.row(c);
        for d in 0..c_in {
            let x_row = input.row(d);
            let mut acc = 0.0;
            for t in 0..t_len {
                acc += g_row[t] * x_row[t];
            }
            grads.weights.set(c, d, acc);
        }
        grads.bias[c] = g_row.iter().sum();
    }
    let input_grad = want_input_grad.then(|| {
        let mut gx = Tensor2D::zeros(c_in, t_len);
        for c in 0..c_out {
            let g_row = grad_out.row(c);
            for d in 0..c_in {
                let w = params.weights.get(c, d);
                let gx_row = gx.row_mut(d);
                for t in 0..t_len {
                    gx_row[t] += w * g_row[t];
                }
            }
        }
        gx
    });
    (grads, input_grad)
}

/// Temporal convolution with zero padding of `(kernel_size - 1) / 2` on each
/// side, preserving the sequence length.
pub fn temporal_conv(input: &Tensor2D, params: &LayerParams) -> Result<Tensor2D, NumError> {
    if params.kind != LayerKind::TemporalConv {
        return Err(NumError::config("temporal_conv", "params.kind is not temporal-conv"));
    }
    if params.kernel_size % 2 == 0 {
        return Err(NumError::config(
            "temporal_conv",
            format!("kernel_size must be odd, got {}", params.kernel_size),
        ));
    }
    let k = params.kernel_size;
    if params.weights.cols() != input.rows() * k {
        return Err(NumError::dimension(
            "temporal_conv",
            format!(
                "weight cols {} != input rows {} * kernel {}",
                params.weights.cols(),
                input.rows(),
                k
            ),
        ));
    }
    let pad = (k - 1) / 2;
    let (c_out, c_in, t_len) = (params.out_channels(), input.rows(), input.cols());
    let mut out = Tensor2D::zeros(c_out, t_len);
    for c in 0..c_out {
        for i in 0..c_in {
            let x_row = input.row(i);
            for dt in 0..k {
                let w = params.weights.get(c, i * k + dt);
                let shift = dt as isize - pad as isize;
                let (t_lo, t_hi) = shifted_range(t_len, shift);
                let out_row = out.row_mut(c);
                for t in t_lo..t_hi {
                    out_row[t] += w * x_row[(t as isize + shift) as usize];
                }
            }
        }
        let b = params.bias[c];
        for v in out.row_mut(c) {
            *v += b;
        }
    }
    Ok(out)
}

/// Output positions `t` for which `t + shift` is a valid input index.
#[inline]
fn shifted_range(t_len: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (t_len as isize - shift.max(0)).max(0) as usize;
    (lo.min(t_len), hi.min(t_len))
}

/// Backward pass of [`temporal_conv`].
pub fn conv_backward(
    input: &Tensor2D,
    params: &LayerParams,
    grad_out: &Tensor2D,
    want_input_grad: bool,
) -> (LayerGrads, Option<Tensor2D>) {
    let k = params.kernel_size;
    let pad = (k - 1) / 2;
    let (c_out, c_in, t_len) = (params.out_channels(), input.rows(), input.cols());
    debug_assert_eq!(grad_out.rows(), c_out);
    debug_assert_eq!(grad_out.cols(), t_len);
    let mut grads = LayerGrads::zeros_like(params);
    for c in 0..c_out {
        let g_row = grad_out.row(c);
        for i in 0..c_in {
            let x_row = input.row(i);
            for dt in 0..k {
                let shift = dt as isize - pad as isize;
                let (t_lo, t_hi) = shifted_range(t_len, shift);
                let mut acc = 0.0;
                for t in t_lo..t_hi {
                    acc += g_row[t] * x_row[(t as isize + shift) as usize];
                }
                grads.weights.set(c, i * k + dt, acc);
            }
        }
        grads.bias[c] = g_row.iter().sum();
    }
    let input_grad = want_input_grad.then(|| {
        let mut gx = Tensor2D::zeros(c_in, t_len);
        for c in 0..c_out {
            let g_row = grad_out.row(c);
            for i in 0..c_in {
                for dt in 0..k {
                    let w = params.weights.get(c, i * k + dt);
                    let shift = dt as isize - pad as isize;
                    // out(c, t) consumed in(i, t + shift); transpose the map.
                    let (t_lo, t_hi) = shifted_range(t_len, shift);
                    let gx_row = gx.row_mut(i);
                    for t in t_lo..t_hi {
                        gx_row[(t as isize + shift) as usize] += w * g_row[t];
                    }
                }
            }
        }
        gx
    });
    (grads, input_grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Relu,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise activation; output shape equals input shape.
pub fn activate(input: &Tensor2D, kind: Activation) -> Tensor2D {
    let mut out = input.clone();
    match kind {
        Activation::Sigmoid => {
            for v in out.data_mut() {
                *v = sigmoid(*v);
            }
        }
        Activation::Relu => {
            for v in out.data_mut() {
                *v = v.max(0.0);
            }
        }
    }
    out
}

/// Backward through a sigmoid given the forward *output*.
pub fn sigmoid_backward(output: &Tensor2D, grad_out: &Tensor2D) -> Tensor2D {
    let mut gx = grad_out.clone();
    for (g, &y) in gx.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (1.0 - y);
    }
    gx
}

/// Backward through a ReLU given the forward *input*.
pub fn relu_backward(input: &Tensor2D, grad_out: &Tensor2D) -> Tensor2D {
    let mut gx = grad_out.clone();
    for (g, &x) in gx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}
