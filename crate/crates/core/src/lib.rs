pub mod benchmarks;
pub mod equivalence;
pub mod error;
pub mod experiments;
pub mod kkt;
pub mod lp;
pub mod market;
pub mod network;
pub mod scenario;
pub mod settlement;

pub use error::{Error, Result};
