//! Dense feed-forward classifier: parameters, forward pass and exact
//! gradients of the cross-entropy and Jensen-Shannon objectives.

mod loss;
mod mlp;
mod params;

pub use loss::{cross_entropy, jsd, softmax, PROB_FLOOR};
pub use mlp::{
    backward, backward_ce, backward_jsd_pair, forward, forward_trace, logits_jvp, loss_and_grad_ce,
    predict_proba, ForwardTrace, LAYERNORM_EPS,
};
pub use params::{Activation, Layer, LayerNorm, MlpConfig, ModelParams};

pub(crate) use loss::{check_labels, jsd_row};
pub(crate) use mlp::{jsd_logit_grads, softmax_rows};
