pub mod error;
pub mod exec;
pub mod geometry;
pub mod gp;
pub mod io;
pub mod linalg;
pub mod seed;

pub use error::{Error, Result};
pub mod bound;
pub mod domain;
pub mod passivation;
pub mod dynamics;
pub mod verification;
pub mod config;
pub mod pipeline;
