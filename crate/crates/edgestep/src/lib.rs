//! Growth model for random graphs where each step either brings a new vertex
//! (probability `f(t)`, the *edge-step function*) or a new edge between
//! existing vertices, with all endpoints chosen proportionally to degree.
//!
//! The crate has three layers:
//!
//! * [`process`]: the simulator itself. Endpoint-list sampling makes every
//!   step O(1), so single runs to `t = 10^7` take on the order of a second.
//! * [`theory`]: deterministic ground truth: the exact recursion for
//!   `E N_t(d)` (expected number of degree-`d` vertices), the limiting degree
//!   law `p_gamma(d)`, and concentration bounds.
//! * [`stats`]: replica ensembles, empirical estimators, and the
//!   empirical-vs-theory comparison report.
//!
//! [`edge_step`] holds the catalog of edge-step functions `f(t) = l(t) t^-gamma`
//! and [`karamata`] the numerics for their slowly varying parts `l`.

pub mod edge_step;
pub mod karamata;
pub mod process;
pub mod stats;
pub mod theory;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
