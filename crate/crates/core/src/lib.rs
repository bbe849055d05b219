pub mod archive;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod fgd;
pub mod model;
pub mod noisebench;
pub mod pose;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
