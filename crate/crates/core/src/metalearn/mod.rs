//! Embedders, linear heads and the three adaptation engines: a non-episodic
//! baseline, fo-MAML (zero-initialised head) and proto-fo-MAML (prototype
//! head). Everything runs in `f64` with hand-written gradients.

mod adapt;
mod checkpoint;
mod embedder;
mod features;
mod head;
mod optim;

pub use adapt::{
    evaluate_episode, first_order_gradient, fomaml_meta_gradient, fomaml_meta_step, init_head, inner_adapt,
    loss_and_grads, meta_train, score, train_baseline, AdaptConfig, BaselineOutcome, EpisodeScore, Grads, HeadInit,
    MetaStats, Mode,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader};
pub use embedder::{EmbedderKind, EmbedderParams};
pub use features::{EpisodeData, FeatureStore};
pub use head::{argmax_rows, proto_head_init, prototypes, softmax_xent, LinearHead};
pub use optim::Adam;
