pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod conv;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod pnm;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod texture;
pub mod train;

pub use error::{Error, Result};
