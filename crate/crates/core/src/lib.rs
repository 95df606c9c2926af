pub mod bench;
pub mod config;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod lqg;
pub mod plant;
pub mod sim;
pub mod store;
pub mod synthesis;
pub mod tables;

pub use error::{Error, Result};
