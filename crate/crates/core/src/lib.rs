//! Exact analytics and Monte Carlo simulation of the sequential multiplayer
//! contextuality game on odd N-cycle scenarios.
//!
//! Each player in turn measures the same qutrit, picking one of the N
//! measurements of the agreed protocol uniformly at random, and tries to
//! witness a violation of the `alpha` or `beta` noncontextuality inequality.
//! Per-player values are available from three independent routes: the
//! protocol-1 Markov matrix, the protocol-2/3 affine recurrences, and direct
//! iteration of the averaged measurement channel.

pub mod analytic;
pub mod error;
pub mod fmt;
pub mod montecarlo;
pub mod protocols;
pub mod quantum;
pub mod scenario;

pub use error::{Error, Result};
pub use protocols::{InequalityId, ProtocolId};
pub use scenario::{build_scenario, Scenario};
