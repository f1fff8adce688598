//! Lower-bounded facility location toolkit.
//!
//! The solving pipeline runs a bicriteria UFL reduction, aggregates clients
//! into a structured instance, reduces that to capacity-discounted UFL,
//! solves it by local search and maps the result back. Exact brute-force
//! oracles and gap-instance generators support verification at desk scale.

pub mod bicriteria;
pub mod cdufl;
pub mod error;
pub mod flow;
pub mod gallery;
pub mod local_search;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod reduction;

pub use error::{LbflError, Result};
