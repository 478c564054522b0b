//! CUBIC congestion window.
//!
//! After a loss at `epoch_start` with window `w_max`, the window follows
//! `W(t) = C·(t − K)³ + w_max` (in MSS units, `t` seconds since the epoch) with
//! `K = cbrt(w_max·(1 − beta)/C)`, so that `W(0) = beta·w_max` and `W(K) = w_max`.
//! No TCP-friendly region and no fast convergence.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicParams {
    pub c: f64,
    /// Fraction of the window retained after a loss.
    pub beta: f64,
    pub mss: u32,
    /// Initial window in segments.
    pub initial_window: u32,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            c: 0.4,
            beta: 0.7,
            mss: 1460,
            initial_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicState {
    /// Bytes.
    pub cwnd: f64,
    /// Bytes.
    pub w_max: f64,
    /// Bytes; infinite until the first loss.
    pub ssthresh: f64,
    /// Start of the current congestion-avoidance epoch, if a loss has occurred.
    pub epoch_start: Option<SimTime>,
    /// Seconds.
    pub k: f64,
    pub c: f64,
    pub beta: f64,
    pub mss: u32,
    /// Smoothed round-trip time, seconds.
    pub rtt_estimate: f64,
    /// Bytes sent and not yet acknowledged or declared lost.
    pub in_flight: u64,
}

impl CubicState {
    pub fn new(params: CubicParams) -> Self {
        Self {
            cwnd: (params.initial_window.max(1) * params.mss) as f64,
            w_max: 0.0,
            ssthresh: f64::INFINITY,
            epoch_start: None,
            k: 0.0,
            c: params.c,
            beta: params.beta,
            mss: params.mss,
            rtt_estimate: 0.0,
            in_flight: 0,
        }
    }

    fn mss_f(&self) -> f64 {
        self.mss as f64
    }

    /// K for a given `w_max` in bytes.
    pub fn k_for(&self, w_max: f64) -> f64 {
        (w_max / self.mss_f() * (1.0 - self.beta) / self.c).cbrt()
    }

    /// Unclamped cubic target in bytes, `elapsed` seconds into the epoch.
    pub fn cubic_target(&self, elapsed: f64) -> f64 {
        let d = elapsed - self.k;
        self.c * d * d * d * self.mss_f() + self.w_max
    }

    /// Window at absolute time `t`, never below one MSS.
    pub fn cubic_window(&self, t: SimTime) -> f64 {
        let elapsed = match self.epoch_start {
            Some(start) => t.saturating_sub(start).as_secs_f64(),
            None => return self.cwnd.max(self.mss_f()),
        };
        self.cubic_target(elapsed).max(self.mss_f())
    }

    pub fn on_ack(&mut self, acked: u64, now: SimTime) {
        if acked == 0 {
            return;
        }
        let acked = acked as f64;
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
            return;
        }
        let target = self.cubic_window(now);
        if target > self.cwnd {
            self.cwnd += (target - self.cwnd) * acked / self.cwnd;
        } else {
            // Concave plateau: creep forward by 1% of an MSS per window.
            self.cwnd += 0.01 * self.mss_f() * acked / self.cwnd;
        }
    }

    pub fn on_loss(&mut self, now: SimTime) {
        self.w_max = self.cwnd;
        self.cwnd = (self.cwnd * self.beta).max(self.mss_f());
        self.ssthresh = self.cwnd;
        self.epoch_start = Some(now);
        self.k = self.k_for(self.w_max);
    }

    /// Whether another `bytes`-sized segment may be sent now. An empty
    /// pipe always admits one segment.
    pub fn can_send(&self, bytes: u32) -> bool {
        self.in_flight == 0 || self.in_flight as f64 + bytes as f64 <= self.cwnd
    }

    pub fn update_rtt(&mut self, sample: f64) {
        if self.rtt_estimate == 0.0 {
            self.rtt_estimate = sample;
        } else {
            self.rtt_estimate += (sample - self.rtt_estimate) / 8.0;
        }
    }
}
