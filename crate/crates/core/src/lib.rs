//! Simulation and analytics for the Buckley–Osthus preferential-attachment graph
//! and its second-degree statistics.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod model;
pub mod stats;
mod union_find;

pub use error::{Error, Result};
pub use graph::MultiGraph;
pub use model::{build_sequence, materialize, ModelParams, XiSequence};
pub use stats::{count_tables, second_degrees, CountTables, VertexStats};
