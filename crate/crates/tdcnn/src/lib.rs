//! Dense sequence prediction engine for windowed CNN classifiers.
//!
//! A CNN acoustic model trained to classify a fixed context window can be
//! rewritten into a fully convolutional network that processes a whole
//! utterance in one pass: pooling layers lose their time stride, downstream
//! convolutions gain a compensating time dilation, and fully connected
//! layers become convolutions. The rewritten network produces one output
//! per valid frame position and computes exactly what sliding the original
//! window over the utterance would compute, at a fraction of the cost.
//!
//! The crate provides the tensor and layer primitives, the network graph
//! with shape inference and receptive-field arithmetic, the densify rewrite
//! itself, an independent sliding-window oracle with an equivalence
//! harness, an analytic multiply-accumulate cost model, the stacked
//! bottleneck network construction, and a CLI tying them together.

pub mod error;
pub mod rng;
pub mod tensor;
pub mod layers;
pub mod graph;
pub mod densify;
pub mod oracle;
pub mod netgen;
pub mod flops;
pub mod cli;
pub mod sbn;

pub use error::{Error, Result};
pub use graph::NetworkSpec;
pub use tensor::Tensor3;
