//! Online congestion detection over windows of delivery feedback.
//!
//! Three detectors share the [`Detector`] interface: an EWMA control chart
//! on mean delay, a PCA residual (SPE) test and KOAD, a kernel projection
//! error test with two thresholds.

mod ewma;
mod koad;
mod pca;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::netsim::Feedback;
use crate::time::SimTime;
pub use ewma::{EwmaConfig, EwmaDetector};
pub use koad::{KoadConfig, KoadDetector};
pub use pca::{pca_fit, PcaConfig, PcaDetector, PcaState};

pub const FEATURE_DIM: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectError {
    #[error("need at least {needed} training windows, got {got}")]
    TooFewWindows { needed: usize, got: usize },
    #[error("non-finite feature value in window {0}")]
    NonFinite(usize),
    #[error("invalid detector parameter: {0}")]
    Config(String),
}

/// Aggregate of one feedback window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Seconds.
    pub mean_delay: f64,
    /// Standard deviation of delay, seconds.
    pub jitter: f64,
    /// Fraction of messages that were rejected or needed retransmission.
    pub loss_fraction: f64,
    /// Delivered bits per second.
    pub throughput: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        [self.mean_delay, self.jitter, self.loss_fraction, self.throughput]
    }

    pub fn from_array(a: [f64; FEATURE_DIM]) -> Self {
        Self {
            mean_delay: a[0],
            jitter: a[1],
            loss_fraction: a[2],
            throughput: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Divides each feature by its scale.
    pub fn scaled(&self, scales: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut a = self.to_array();
        for (v, s) in a.iter_mut().zip(scales) {
            *v /= s;
        }
        a
    }
}

/// Typical magnitudes used to put features on a common footing: 10 ms of
/// delay, 10 ms of jitter, a quarter of messages lost, 1 Mbit/s.
pub const DEFAULT_SCALES: [f64; FEATURE_DIM] = [0.01, 0.01, 0.25, 1e6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Normal,
    Orange,
    Red,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Normal => "normal",
            Level::Orange => "orange",
            Level::Red => "red",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub level: Level,
    pub score: f64,
    /// Scores above this are at least Orange.
    pub orange: f64,
    /// Scores above this are Red.
    pub red: f64,
}

impl Verdict {
    /// Level implied by `score` against the two thresholds.
    pub fn classify(score: f64, orange: f64, red: f64) -> Self {
        let level = if score > red {
            Level::Red
        } else if score > orange {
            Level::Orange
        } else {
            Level::Normal
        };
        Self {
            level,
            score,
            orange,
            red,
        }
    }

    pub fn normal(score: f64, orange: f64, red: f64) -> Self {
        Self {
            level: Level::Normal,
            score,
            orange,
            red,
        }
    }
}

pub trait Detector {
    fn name(&self) -> &'static str;

    /// Scores `x` against the state learned so far, then learns from it.
    fn observe(&mut self, x: &FeatureVector) -> Verdict;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorConfig {
    Ewma(EwmaConfig),
    Pca(PcaConfig),
    Koad(KoadConfig),
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::Koad(KoadConfig::default())
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        match self {
            DetectorConfig::Ewma(c) => c.validate(),
            DetectorConfig::Pca(c) => c.validate(),
            DetectorConfig::Koad(c) => c.validate(),
        }
    }

    pub fn build(&self) -> Box<dyn Detector + Send> {
        match self {
            DetectorConfig::Ewma(c) => Box::new(EwmaDetector::new(c.clone())),
            DetectorConfig::Pca(c) => Box::new(PcaDetector::new(c.clone())),
            DetectorConfig::Koad(c) => Box::new(KoadDetector::new(c.clone())),
        }
    }
}

/// Groups per-message feedback into tumbling windows of `size` messages.
#[derive(Debug, Clone)]
pub struct FeatureWindow {
    size: usize,
    start: Option<SimTime>,
    delays: Vec<f64>,
    bytes: u64,
    lossy: usize,
    seen: usize,
    last_mean: f64,
}

impl FeatureWindow {
    pub fn new(size: usize) -> Self {
        Self {
            size: size.max(1),
            start: None,
            delays: Vec::new(),
            bytes: 0,
            lossy: 0,
            seen: 0,
            last_mean: 0.0,
        }
    }

    /// Adds one feedback event; returns the features when a window closes.
    pub fn push(&mut self, fb: &Feedback, now: SimTime) -> Option<FeatureVector> {
        match fb {
            Feedback::Delivered {
                record,
                retransmitted,
            } => {
                self.start.get_or_insert(record.send_time);
                self.delays.push(record.delay().as_secs_f64());
                self.bytes += record.size_bytes as u64;
                if *retransmitted {
                    self.lossy += 1;
                }
            }
            Feedback::Rejected { send_time, .. } => {
                self.start.get_or_insert(*send_time);
                self.lossy += 1;
            }
        }
        self.seen += 1;
        if self.seen < self.size {
            return None;
        }
        let start = self.start.take().unwrap_or(now);
        let span = now.saturating_sub(start).as_secs_f64();
        let (mean, jitter) = if self.delays.is_empty() {
            (self.last_mean, 0.0)
        } else {
            mean_std(&self.delays)
        };
        let fv = FeatureVector {
            mean_delay: mean,
            jitter,
            loss_fraction: self.lossy as f64 / self.seen as f64,
            throughput: if span > 0.0 {
                self.bytes as f64 * 8.0 / span
            } else {
                0.0
            },
        };
        self.last_mean = mean;
        self.delays.clear();
        self.bytes = 0;
        self.lossy = 0;
        self.seen = 0;
        self.start = Some(now);
        Some(fv)
    }
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row of the verdict log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictRecord {
    pub window_index: u32,
    pub time: SimTime,
    pub verdict: Verdict,
    pub features: FeatureVector,
}

pub const VERDICT_HEADER: [&str; 4] = ["window_index", "time_us", "score", "level"];

pub fn write_verdicts_csv<W: Write>(rows: &[VerdictRecord], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(VERDICT_HEADER)?;
    for r in rows {
        out.write_record([
            r.window_index.to_string(),
            r.time.to_string(),
            format!("{:.9}", r.verdict.score),
            r.verdict.level.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
