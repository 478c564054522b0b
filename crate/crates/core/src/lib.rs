//! Simulation of smart-meter telemetry over a congested switched network,
//! with anomaly detection on delivery statistics and adaptive resolution.

pub mod adapt;
pub mod detect;
pub mod meter;
pub mod metrics;
pub mod netsim;
pub mod packetizer;
pub mod scenario;
pub mod time;
pub mod waveform;
