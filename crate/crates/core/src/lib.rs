pub mod displacement;
pub mod dot;
pub mod dsl;
pub mod error;
pub mod fixtures;
pub mod graph_core;
pub mod loops;
pub mod lp;
pub mod opt_flow;
pub mod random;
pub mod straight_maps;
pub mod scalar;

pub use error::{Error, Result};
