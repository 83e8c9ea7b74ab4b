//! Solvers, generators and certifiers for the robust (min-max) s-t path
//! problem: one digraph, k cost functions, find the path whose worst-case
//! cost is smallest.

pub mod gen;
pub mod hardness;
pub mod instance;
pub mod lp;
pub mod metatree;
pub mod ratio;
pub mod round;
pub mod solver;
pub mod sp;
pub mod textfmt;
pub mod treewidth;

pub use instance::{Instance, StPath};
pub use ratio::Rat;
