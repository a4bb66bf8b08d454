//! Triple-hop all-optical amplify-and-forward free-space optical link model.
//!
//! The crate follows one photon budget from source to detector:
//!
//! - [`params`]: system parameters and per-symbol photon budgets
//! - [`channel`]: per-hop path loss, Rytov variance and log-normal fading
//! - [`relay`]: Laguerre count statistics through two full-CSI EDFA relays,
//!   destination variance and electrical SNR
//! - [`capacity`]: Monte-Carlo ergodic capacity, placement sweeps and
//!   variance-mode comparisons under common random numbers

pub mod capacity;
pub mod channel;
pub mod error;
pub mod params;
pub mod relay;

pub use capacity::{
    compare_modes, ergodic_capacity, ergodic_capacity_with, instantaneous_capacity, sweep, CapacityEstimate,
    CommonDraws, Estimator, LogBase, ModeComparison, Placement, PlacementPoint, SweepResult,
};
pub use channel::{build_hop, sample_fading, FadingRealization, HopChannel, TripleHop};
pub use error::{Error, Result};
pub use params::{dbm_to_watts, load_params, photons_per_symbol, LinkConfig, SystemParams};
pub use relay::{destination_stats, DestinationStats, LaguerreParams, VarianceMode};
