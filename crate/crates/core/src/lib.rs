pub mod config;
pub mod corpus;
pub mod dataset;
pub mod datasplit;
pub mod decoders;
pub mod encoder;
pub mod error;
pub mod evalgen;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod textprep;
pub mod trainer;

pub use error::{Error, Result};
