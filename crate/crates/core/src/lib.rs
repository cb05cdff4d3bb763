pub mod density;
pub mod domain;
pub mod evaluation;
pub mod error;
pub mod kdtree;
pub mod objectives;
pub mod partition;
pub mod runner;
pub mod samplers;
pub mod selection;

pub use error::{Error, Result};
