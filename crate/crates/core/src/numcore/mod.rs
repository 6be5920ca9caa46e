//! Minimal dense numeric core: tensor type, layer primitives with
//! reverse-mode gradients, softmax cross-entropy, a gradient checker, an
//! adaptive-moment optimizer and seeded initialization.

pub mod ce;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use ce::{softmax, softmax_cross_entropy};
pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use layers::{
    activate, conv_backward, fully_connected, fully_connected_backward, relu_backward, sigmoid,
    sigmoid_backward, temporal_conv, Activation, LayerGrads, LayerKind, LayerParams,
};
pub use optim::{optimizer_step, OptimizerState};
pub use rng::{derive_seed, seeded_init, InitScheme, SplitMix64};
pub use tensor::Tensor2D;
