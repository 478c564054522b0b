//! The metering application: one phase channel of a generated waveform,
//! packetized every logging interval and sent over the simulated
//! transport, with detection and resolution control on the feedback path.

use crate::adapt::{CapacityEstimate, Controller, Decision, Mode};
use crate::detect::{Detector, FeatureWindow, Level, VerdictRecord};
use crate::netsim::{Feedback, Message, MessageSource};
use crate::packetizer::{encode, PacketError, SendSchedule};
use crate::time::SimTime;
use crate::waveform::{ResolutionLevel, Sample};

/// Logging intervals used when the controller also switches interval.
pub const FAST_INTERVAL: f64 = 0.01;
pub const SLOW_INTERVAL: f64 = 0.1;

pub struct MeterSource {
    samples: Vec<Sample>,
    base_period: f64,
    meter_id: u16,
    schedule: SendSchedule,
    pending: Option<SendSchedule>,
    seq: u32,
    cursor: usize,
    window: FeatureWindow,
    window_bits: f64,
    window_delay: f64,
    detector: Box<dyn Detector + Send>,
    controller: Option<Controller>,
    verdicts: Vec<VerdictRecord>,
    decisions: Vec<Decision>,
    /// Send time and resolution of every emitted packet.
    sent: Vec<(SimTime, ResolutionLevel)>,
    error: Option<PacketError>,
}

impl MeterSource {
    /// `samples` is the channel to transmit, starting at time zero.
    pub fn new(
        samples: Vec<Sample>,
        base_period: f64,
        meter_id: u16,
        schedule: SendSchedule,
        window_size: usize,
        detector: Box<dyn Detector + Send>,
        controller: Option<Controller>,
    ) -> Self {
        let schedule = match &controller {
            Some(c) => SendSchedule::new(schedule.logging_interval, c.level()),
            None => schedule,
        };
        Self {
            samples,
            base_period,
            meter_id,
            schedule,
            pending: None,
            seq: 0,
            cursor: 0,
            window: FeatureWindow::new(window_size),
            window_bits: 0.0,
            window_delay: 0.0,
            detector,
            controller,
            verdicts: Vec::new(),
            decisions: Vec::new(),
            sent: Vec::new(),
            error: None,
        }
    }

    pub fn verdicts(&self) -> &[VerdictRecord] {
        &self.verdicts
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn sent(&self) -> &[(SimTime, ResolutionLevel)] {
        &self.sent
    }

    pub fn schedule(&self) -> SendSchedule {
        self.schedule
    }

    /// First encoding failure, if any packet could not be built.
    pub fn error(&self) -> Option<&PacketError> {
        self.error.as_ref()
    }

    fn interval_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.schedule.logging_interval)
    }

    fn next_packet(&mut self) -> Result<Vec<u8>, PacketError> {
        let raw = self.schedule.raw_samples(self.base_period);
        let end = (self.cursor + raw).min(self.samples.len());
        let step = self.schedule.resolution.decimation() as usize;
        let chunk: Vec<Sample> = self.samples[self.cursor..end]
            .iter()
            .step_by(step)
            .copied()
            .collect();
        self.cursor = end;
        encode(&chunk, self.seq, self.meter_id, &self.schedule)
    }

    fn on_window_closed(&mut self, features: crate::detect::FeatureVector, now: SimTime) {
        let verdict = self.detector.observe(&features);
        let window_index = self.verdicts.len() as u32;
        self.verdicts.push(VerdictRecord {
            window_index,
            time: now,
            verdict,
            features,
        });
        let (bits, delay) = (self.window_bits, self.window_delay);
        self.window_bits = 0.0;
        self.window_delay = 0.0;
        let Some(ctl) = self.controller.as_mut() else {
            return;
        };
        let decision = match ctl.policy().mode {
            Mode::VerdictDriven => ctl.on_window(&verdict),
            Mode::CapacityDriven => {
                let budget = ctl.policy().delay_budget;
                let estimate = CapacityEstimate::from_window(bits, delay, &features, budget);
                let raw = self.schedule.raw_samples(self.base_period);
                let interval = self.schedule.logging_interval;
                ctl.on_capacity(verdict.level, estimate, raw, interval)
            }
        };
        let interval = if ctl.policy().switch_interval {
            if decision.new_level == ResolutionLevel::FULL {
                FAST_INTERVAL
            } else {
                SLOW_INTERVAL
            }
        } else {
            self.schedule.logging_interval
        };
        self.pending = Some(SendSchedule::new(interval, decision.new_level));
        self.decisions.push(decision);
    }
}

impl MessageSource for MeterSource {
    fn first_send(&mut self) -> Option<SimTime> {
        Some(self.interval_time())
    }

    fn emit(&mut self, now: SimTime) -> (Option<Message>, Option<SimTime>) {
        if let Some(s) = self.pending.take() {
            self.schedule = s;
        }
        let msg = match self.next_packet() {
            Ok(bytes) => Some(Message {
                seq: self.seq,
                size: bytes.len() as u32,
                decimation: self.schedule.resolution.decimation() as u16,
            }),
            Err(e) => {
                self.error.get_or_insert(e);
                None
            }
        };
        self.sent.push((now, self.schedule.resolution));
        self.seq += 1;
        (msg, Some(now + self.interval_time()))
    }

    fn on_feedback(&mut self, feedback: &Feedback, now: SimTime) {
        if let Feedback::Delivered { record, .. } = feedback {
            self.window_bits += record.size_bytes as f64 * 8.0;
            self.window_delay += record.delay().as_secs_f64();
        }
        if let Some(features) = self.window.push(feedback, now) {
            self.on_window_closed(features, now);
        }
    }
}

/// Time of the first Red verdict, if any.
pub fn first_red(verdicts: &[VerdictRecord]) -> Option<SimTime> {
    verdicts
        .iter()
        .find(|v| v.verdict.level == Level::Red)
        .map(|v| v.time)
}
