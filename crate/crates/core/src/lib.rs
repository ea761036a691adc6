//! Link-level simulator for multiuser millimeter-wave MIMO with hybrid
//! analog/digital beamforming.
//!
//! The base station probes the downlink with random antipodal vectors, every
//! mobile tracks its dominant channel directions with PASTd, and the mobiles
//! then send beamformed pilots so the base station can estimate the matching
//! right singular directions by pilot matching (PM) or zero-forcing (ZF).
//! Uplink and downlink achievable rates follow from a multiuser log-det
//! formula and are aggregated over seeded Monte-Carlo campaigns.

pub mod array;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod output;
pub mod pastd;
pub mod rates;

pub use array::{build_analog_combiner, build_angle_grid, ula_response, AnalogCombiner, CombinerMode, UlaSpec};
pub use channel::{channel_svd, composite_channel, generate_channel, path_loss_linear, ChannelRealization, ChannelSvd, ClusterModelParams};
pub use error::{Error, Result};
pub use estimation::{Estimator, PilotBook, ProbingConfig};
pub use harness::{run_campaign, run_trial, BfMode, CampaignStats, Link, ScenarioConfig, TrialResult};
pub use pastd::PastdState;
