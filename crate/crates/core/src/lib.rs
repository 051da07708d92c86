//! Resource allocation for rate-splitting D2D clusters relayed by edge radio
//! heads: 2D-PCA device clustering, best-response power control, Hungarian
//! eRRH/RRB assignment and interference pricing, plus benchmark schemes and
//! a Monte Carlo harness.

pub mod assignment;
pub mod baselines;
pub mod clustering;
pub mod config;
pub mod error;
pub mod game;
pub mod harness;
pub mod hungarian;
pub mod linalg;
pub mod pricing;
pub mod rate;
pub mod rsmd;
pub mod schemes;
pub mod topology;

pub use config::NetworkConfig;
pub use error::{Error, Result};
pub use rate::{ClusterChannels, HopPowers};
pub use rsmd::{run_rsmd, run_scheme, AllocationOutcome, NetworkDrop, RunOptions};
pub use schemes::SchemeKind;
pub use topology::{ChannelRealization, NetworkTopology};
