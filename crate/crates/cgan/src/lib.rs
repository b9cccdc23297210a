//! Small conditional GAN mapping event stacks to intensity images: a
//! skip-connected generator, a patch discriminator, adversarial plus L1
//! losses with hand-written gradients, and a deterministic training loop.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use loss::{loss_egan, loss_l1, total_objective, LossBreakdown};
pub use nets::{Discriminator, Generator};
pub use tensor::{CganError, Tensor4};
pub use train::{infer, train_toy, TrainHalt, TrainOutcome};
