pub mod cohort;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod screening;
pub mod structurizer;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
