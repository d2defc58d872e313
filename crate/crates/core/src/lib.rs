pub mod cli;
pub mod error;
pub mod extractor;
pub mod gmm;
pub mod io;
pub mod optimizer;
pub mod synthdet;
pub mod types;

pub use error::{Error, Result};
