pub mod align;
pub mod cli;
pub mod classify;
pub mod datasets;
pub mod error;
pub mod fpca;
pub mod funcrep;
pub mod genmodel;
pub mod srsf;
pub mod warpspace;

pub use error::{Error, Result};
