//! Dense tensor math with reverse-mode differentiation and the policy
//! building blocks (linear, stacked LSTM, soft attention, categorical heads).

pub mod adam;
pub mod init;
pub mod policy;
pub mod qnet;
pub mod tape;

pub use adam::Adam;
pub use policy::{
    action_nodes, argmax, greedy_heads, kl_nodes, sample_heads, DropoutMasks, ForwardOut,
    PolicyArch, PolicyNet, RecurrentNodes, RecurrentValues,
};
pub use qnet::{QNet, QNetArch};
pub use tape::{BlockId, Grads, NodeId, ParamBlock, ParamStore, Tape};
