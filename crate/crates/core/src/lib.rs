pub mod autograd;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod imagedata;
pub mod keys;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod synth;
pub mod tensor;
pub mod training;

pub use config::Config;
pub use error::{Error, Result};
