pub mod distortion;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod io;
pub mod minutia;
pub mod orientation;
pub mod rng;
pub mod skeleton;
pub mod synthesis;
pub mod tvdecomp;
pub mod weightmap;

pub use error::{Error, Result};
