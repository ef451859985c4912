pub mod autodiff;
mod binio;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
