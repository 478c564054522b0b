//! Background traffic generators.
//!
//! Rates count frame payload bits, the way a traffic generator such as
//! iperf reports them; every frame also pays the link's per-frame overhead
//! on the wire.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    ConstantRate {
        /// Payload bits per second.
        rate: u64,
    },
    OnOff {
        rate: u64,
        /// Seconds of sending per cycle.
        on: f64,
        /// Seconds of silence per cycle.
        off: f64,
    },
}

impl Pattern {
    pub fn rate(&self) -> u64 {
        match *self {
            Pattern::ConstantRate { rate } | Pattern::OnOff { rate, .. } => rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTrafficSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub pattern: Pattern,
    /// Payload bytes per frame.
    pub frame_size: u32,
    pub start: SimTime,
    pub stop: SimTime,
    /// Run over the congestion-controlled transport instead of open loop.
    pub responsive: bool,
}

/// Emission times of one open-loop generator.
#[derive(Debug, Clone)]
pub struct CrossSchedule {
    origin: SimTime,
    stop: SimTime,
    frame_bits: u128,
    rate: u128,
    /// (on, cycle) lengths; `None` for constant rate.
    cycle: Option<(SimTime, SimTime)>,
    cycle_index: u64,
    k: u64,
}

impl CrossSchedule {
    /// `rng` draws the random start phase in `[0, gap)`.
    pub fn new<R: Rng>(spec: &CrossTrafficSpec, stop: SimTime, rng: &mut R) -> Self {
        let frame_bits = spec.frame_size as u128 * 8;
        let rate = spec.pattern.rate().max(1) as u128;
        let gap = (frame_bits * 1_000_000_000 / rate).max(1) as u64;
        let phase = SimTime(rng.random_range(0..gap));
        let cycle = match spec.pattern {
            Pattern::ConstantRate { .. } => None,
            Pattern::OnOff { on, off, .. } => {
                let on = SimTime::from_secs_f64(on);
                Some((on, on + SimTime::from_secs_f64(off)))
            }
        };
        Self {
            origin: spec.start + phase,
            stop,
            frame_bits,
            rate,
            cycle,
            cycle_index: 0,
            k: 0,
        }
    }

    fn offset(&self, k: u64) -> SimTime {
        SimTime((k as u128 * self.frame_bits * 1_000_000_000 / self.rate) as u64)
    }

    /// Next emission time, or `None` once past `stop`.
    pub fn next(&mut self) -> Option<SimTime> {
        let t = match self.cycle {
            None => self.origin + self.offset(self.k),
            Some((on, cycle)) => {
                if cycle == SimTime::ZERO || on == SimTime::ZERO {
                    return None;
                }
                let mut off = self.offset(self.k);
                if off >= on {
                    self.cycle_index += 1;
                    self.k = 0;
                    off = SimTime::ZERO;
                }
                self.origin + SimTime(cycle.0 * self.cycle_index) + off
            }
        };
        self.k += 1;
        (t < self.stop).then_some(t)
    }
}
