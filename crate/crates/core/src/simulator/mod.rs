//! Ground-truth walks, burst/intermittent probe emission and per-sniffer
//! RSS observation, plus the Monte Carlo harness.

mod channel;
mod monte_carlo;
mod probes;
mod trajectory;

pub use channel::{observe, DetectionModel, MultipathProfile, SimChannelConfig};
pub use monte_carlo::{run_monte_carlo, simulate_run, MonteCarloReport, SimRun};
pub use probes::{gen_probes, BurstSize, GapDistribution, ProbeProcessConfig};
pub use trajectory::{gen_trajectory, Trajectory, TrajectoryModel};
