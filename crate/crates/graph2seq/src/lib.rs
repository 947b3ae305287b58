//! Graph-to-sequence semantic parsing.
//!
//! Questions are represented as *syntactic graphs* combining word
//! order, dependency and constituency structure; a bidirectional
//! K-hop graph encoder with max-pooling aggregators produces node and
//! graph embeddings, and an attention-equipped LSTM decoder emits
//! logical-form token sequences. The crate also ships the training,
//! exact-match evaluation, ablation and SWAP-noise robustness
//! harnesses plus a small toy grammar so everything runs end to end
//! without external data.
//!
//! See the `examples/` directory for one runnable program per major
//! capability, and the `graph2seq` binary for the file-based CLI.

pub mod adversarial;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod model;
pub mod tensor;
pub mod toy;

pub use corpus::{Example, Vocab};
pub use graph::{build_syntactic_graph, FeatureFlags, SyntacticGraph};
pub use model::Model;
