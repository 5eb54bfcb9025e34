//! Neural-network side of the enhancement pipeline: a small CPU tensor
//! engine, the generator and discriminator, losses, adversarial training and
//! sliding-window inference.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod inference;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{NnError, Result};
pub use layers::Mode;
pub use network::{Discriminator, Generator, NetworkSpec};
pub use tensor::Tensor;
