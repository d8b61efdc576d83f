//! Energy minimization for a wireless-powered mobile-edge-computing cell assisted
//! by an intelligent reflecting surface.
//!
//! A block of length `T` is split into an energy-transfer phase (fraction `tau`)
//! in which the access point broadcasts power over `M` sub-bands, and a
//! computing phase in which devices split their tasks between local CPUs and
//! OFDMA offloading. The surface shapes the channel in both phases.
//!
//! Layers, bottom up:
//! * [`channel`]: geometry, multipath taps, frequency responses.
//! * [`solver`]: dense LP/SOCP interior-point solver.
//! * [`wet`]: power allocation and surface design for energy transfer.
//! * [`offload`]: sub-band/power allocation, surface design and CPU speeds for
//!   the computing phase.
//! * [`orchestrator`]: the outer alternation, total energy and `tau` search.
//! * [`experiment`]: configs, benchmark schemes, sweeps and CSV reports.

pub mod audit;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod offload;
pub mod orchestrator;
pub mod params;
pub mod sca;
pub mod solver;
pub mod wet;

pub use channel::{ChannelSet, Geometry, IrsVector};
pub use error::{Error, Result};
pub use offload::ComputeSolution;
pub use orchestrator::JointSolution;
pub use params::{DeviceTask, SystemParams};
pub use wet::WetSolution;
