pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod reward;
pub mod seeds;
pub mod sf_head;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
