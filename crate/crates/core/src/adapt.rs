//! Resolution controller driven by detector verdicts or a capacity estimate.
//!
//! Decisions are made once per feedback window and take effect at the next
//! logging interval boundary. The level moves at most one power-of-two step
//! per window.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detect::{FeatureVector, Level, Verdict};
use crate::packetizer::packet_len;
use crate::waveform::ResolutionLevel;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AdaptError {
    #[error("invalid controller policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    VerdictDriven,
    CapacityDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerPolicy {
    pub mode: Mode,
    /// Doublings of the decimation factor per Red verdict.
    pub step_down_levels: u32,
    /// Consecutive Normal windows before probing a finer level.
    pub hold_windows: u32,
    pub min_level: ResolutionLevel,
    pub max_level: ResolutionLevel,
    /// Target end-to-end delay, seconds.
    pub delay_budget: f64,
    /// Fraction of the estimated capacity a flow may use.
    pub margin: f64,
    /// Also switch the logging interval: 0.01 s at full resolution, 0.1 s
    /// when decimated.
    pub switch_interval: bool,
}

impl Default for ControllerPolicy {
    fn default() -> Self {
        Self {
            mode: Mode::VerdictDriven,
            step_down_levels: 1,
            hold_windows: 10,
            min_level: ResolutionLevel::FULL,
            max_level: ResolutionLevel::COARSEST,
            delay_budget: 0.05,
            margin: 0.8,
            switch_interval: false,
        }
    }
}

impl ControllerPolicy {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if self.min_level > self.max_level {
            return Err(AdaptError::Policy("min_level above max_level".into()));
        }
        if self.hold_windows == 0 {
            return Err(AdaptError::Policy("hold_windows must be at least 1".into()));
        }
        if self.step_down_levels == 0 {
            return Err(AdaptError::Policy("step_down_levels must be at least 1".into()));
        }
        if !(self.delay_budget > 0.0) {
            return Err(AdaptError::Policy("delay_budget must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(AdaptError::Policy("margin outside (0, 1]".into()));
        }
        Ok(())
    }

    fn clamp(&self, l: ResolutionLevel) -> ResolutionLevel {
        l.max(self.min_level).min(self.max_level)
    }
}

/// Available rate for the flow, bits per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    pub rate: f64,
}

impl CapacityEstimate {
    /// Delivery rate of the window (bits over summed delay), shrunk in
    /// proportion when the mean delay exceeds the budget.
    pub fn from_window(bits: f64, total_delay: f64, stats: &FeatureVector, budget: f64) -> Option<Self> {
        if total_delay <= 0.0 {
            return None;
        }
        let mut rate = bits / total_delay;
        if stats.mean_delay > budget {
            rate *= budget / stats.mean_delay;
        }
        Some(Self { rate: rate.max(0.0) })
    }
}

/// Bits per second of a flow sending `raw_samples` per interval at `level`.
pub fn packet_rate(raw_samples: usize, level: ResolutionLevel, interval: f64) -> f64 {
    let n = raw_samples.div_ceil(level.decimation() as usize);
    packet_len(n) as f64 * 8.0 / interval
}

/// Finest level within the policy bounds whose rate fits under
/// `margin × estimate`; the coarsest bound when none does.
pub fn capacity_mode_select(
    policy: &ControllerPolicy,
    estimate: CapacityEstimate,
    raw_samples: usize,
    interval: f64,
) -> ResolutionLevel {
    let budget = policy.margin * estimate.rate;
    ResolutionLevel::ALL
        .into_iter()
        .filter(|l| *l >= policy.min_level && *l <= policy.max_level)
        .find(|&l| packet_rate(raw_samples, l, interval) <= budget)
        .unwrap_or(policy.max_level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    Red,
    Orange,
    Normal,
    ProbeUp,
    Capacity,
    NoEstimate,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Red => "red_step_down",
            Reason::Orange => "orange_hold",
            Reason::Normal => "normal_hold",
            Reason::ProbeUp => "probe_up",
            Reason::Capacity => "capacity",
            Reason::NoEstimate => "no_estimate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub window_index: u32,
    pub verdict: Level,
    pub old_level: ResolutionLevel,
    pub new_level: ResolutionLevel,
    pub reason: Reason,
}

#[derive(Debug, Clone)]
pub struct Controller {
    policy: ControllerPolicy,
    level: ResolutionLevel,
    normal_run: u32,
    windows: u32,
}

impl Controller {
    pub fn new(policy: ControllerPolicy, initial: ResolutionLevel) -> Self {
        let level = policy.clamp(initial);
        Self {
            policy,
            level,
            normal_run: 0,
            windows: 0,
        }
    }

    pub fn level(&self) -> ResolutionLevel {
        self.level
    }

    pub fn policy(&self) -> &ControllerPolicy {
        &self.policy
    }

    /// Verdict-driven step for one window.
    pub fn on_window(&mut self, verdict: &Verdict) -> Decision {
        let old = self.level;
        let reason = match verdict.level {
            Level::Red => {
                self.normal_run = 0;
                let mut l = self.level;
                for _ in 0..self.policy.step_down_levels {
                    l = l.coarser();
                }
                self.level = self.policy.clamp(l);
                Reason::Red
            }
            Level::Orange => {
                self.normal_run = 0;
                Reason::Orange
            }
            Level::Normal => {
                self.normal_run += 1;
                if self.normal_run >= self.policy.hold_windows {
                    self.normal_run = 0;
                    self.level = self.policy.clamp(self.level.finer());
                    Reason::ProbeUp
                } else {
                    Reason::Normal
                }
            }
        };
        self.decision(verdict.level, old, reason)
    }

    /// Capacity-driven step: move one level toward the selected target.
    pub fn on_capacity(
        &mut self,
        verdict: Level,
        estimate: Option<CapacityEstimate>,
        raw_samples: usize,
        interval: f64,
    ) -> Decision {
        let old = self.level;
        let reason = match estimate {
            None => Reason::NoEstimate,
            Some(e) => {
                let target = capacity_mode_select(&self.policy, e, raw_samples, interval);
                if target > self.level {
                    self.level = self.level.coarser();
                } else if target < self.level {
                    self.level = self.level.finer();
                }
                self.level = self.policy.clamp(self.level);
                Reason::Capacity
            }
        };
        self.decision(verdict, old, reason)
    }

    fn decision(&mut self, verdict: Level, old: ResolutionLevel, reason: Reason) -> Decision {
        let d = Decision {
            window_index: self.windows,
            verdict,
            old_level: old,
            new_level: self.level,
            reason,
        };
        self.windows += 1;
        d
    }
}

pub const DECISION_HEADER: [&str; 5] = ["window_index", "verdict", "old_level", "new_level", "reason"];

pub fn write_decisions_csv<W: Write>(rows: &[Decision], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DECISION_HEADER)?;
    for d in rows {
        out.write_record([
            d.window_index.to_string(),
            d.verdict.to_string(),
            d.old_level.decimation().to_string(),
            d.new_level.decimation().to_string(),
            d.reason.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
