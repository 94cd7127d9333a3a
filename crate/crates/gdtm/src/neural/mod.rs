//! From-scratch differentiable pieces: the small MLP, Smooth-L1 loss, Adam,
//! and the single-head graph attention layer. Everything exposes analytic
//! gradients that the test suite checks against central finite differences.

mod adam;
mod gat;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gat::{GatGradients, GatLayer, GatTrace};
pub use loss::smooth_l1;
pub use mlp::{Activation, ForwardTrace, MlpGradients, MlpModel};
