//! Simulation library for optimal output consensus of heterogeneous linear
//! multi-agent systems under a distributed proportional-integral control law.
//!
//! Agents with individual LTI dynamics cooperatively drive their outputs to
//! the minimizer of the sum of private convex costs, exchanging outputs over
//! an undirected weighted graph. Three communication schemes are supported:
//! continuous coupling, periodic sampling with a zero-order hold, and
//! event-triggered broadcasts with a hard minimum dwell time.

pub mod analysis;
pub mod control;
pub mod costs;
pub mod error;
pub mod graph;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod trace_io;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
