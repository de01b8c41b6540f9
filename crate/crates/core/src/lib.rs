//! Convolution algorithm lab: host implementations of five GPU convolution
//! strategies, their lowering to an abstract kernel IR, a simulated GPU to
//! run them on, and a tuner over their configuration spaces.

pub mod algos;
pub mod config;
pub mod error;
pub mod ir;
pub mod layers;
pub mod oracle;
pub mod par;
pub mod report;
pub mod shape;
pub mod sim;
pub mod tensor;
pub mod tune;
pub mod verify;

pub use config::{AlgoConfig, Algorithm};
pub use error::{Error, Result};
pub use shape::ConvShape;
pub use tensor::{Layout, Tensor};
