//! Synthetic three-phase meter waveforms.
//!
//! A [`WaveformConfig`] describes a balanced three-phase source (line-to-line
//! RMS voltage, fundamental frequency) feeding per-phase loads. [`generate`]
//! samples it at a fixed period into fixed-point [`Sample`]s, one channel per
//! phase, and [`decimate`] lowers the resolution of a channel.
//!
//! Noise is Gaussian and fully determined by the seed: a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`) drives `rand_distr::StandardNormal`,
//! drawing per sample index, per phase (A, B, C), first the voltage noise and
//! then the current noise.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Phase offsets of the A, B and C phase voltages, in radians.
pub const PHASE_OFFSETS: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WaveformError {
    #[error("invalid waveform configuration: {0}")]
    Config(String),
    #[error("duration must be positive and longer than one sampling period, got {0} s")]
    Duration(f64),
    #[error("decimation factor {0} is not one of 1, 2, 4, 8, 16, 32")]
    Decimation(u32),
}

/// Current drawn on one phase: peak amplitude and angle relative to that
/// phase's voltage (negative for a lagging load).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub current_amplitude: f64,
    pub phase_offset: f64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        // 10 A peak at 0.9 power factor, lagging.
        Self {
            current_amplitude: 10.0,
            phase_offset: -(0.9f64).acos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Line-to-line RMS voltage in volts.
    pub line_voltage_rms: f64,
    /// Fundamental frequency in hertz.
    pub frequency: f64,
    /// Seconds between consecutive samples of one channel.
    pub sampling_period: f64,
    pub load_profiles: [LoadProfile; 3],
    /// Noise standard deviation as a fraction of the signal amplitude.
    pub noise_stddev: f64,
    pub seed: u64,
    /// Meter identifier; the low two bits of a sample's id carry the phase.
    pub meter: u16,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            line_voltage_rms: 208.0,
            frequency: 60.0,
            sampling_period: 125e-6,
            load_profiles: [LoadProfile::default(); 3],
            noise_stddev: 0.0,
            seed: 0,
            meter: 1,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<(), WaveformError> {
        let bad = |m: &str| Err(WaveformError::Config(m.to_string()));
        if !(self.line_voltage_rms.is_finite() && self.line_voltage_rms > 0.0) {
            return bad("line_voltage_rms must be positive");
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad("frequency must be positive");
        }
        // Sample timestamps are whole microseconds and must strictly increase.
        if !(self.sampling_period.is_finite() && self.sampling_period >= 1e-6) {
            return bad("sampling_period must be at least 1 microsecond");
        }
        if !(self.noise_stddev.is_finite() && self.noise_stddev >= 0.0) {
            return bad("noise_stddev must be non-negative");
        }
        if self.meter > 0x3fff {
            return bad("meter id must fit in 14 bits");
        }
        for p in &self.load_profiles {
            if !(p.current_amplitude.is_finite() && p.current_amplitude >= 0.0) {
                return bad("current amplitude must be non-negative");
            }
            if !p.phase_offset.is_finite() {
                return bad("load phase offset must be finite");
            }
        }
        Ok(())
    }

    /// Peak phase (line-to-neutral) voltage in volts.
    pub fn peak_phase_voltage(&self) -> f64 {
        self.line_voltage_rms / 3f64.sqrt() * 2f64.sqrt()
    }

    /// Noise-free phase voltage at time `t` seconds.
    pub fn phase_voltage(&self, phase: usize, t: f64) -> f64 {
        self.peak_phase_voltage() * (2.0 * PI * self.frequency * t + PHASE_OFFSETS[phase]).sin()
    }

    /// Noise-free phase current at time `t` seconds.
    pub fn phase_current(&self, phase: usize, t: f64) -> f64 {
        let load = &self.load_profiles[phase];
        load.current_amplitude
            * (2.0 * PI * self.frequency * t + PHASE_OFFSETS[phase] + load.phase_offset).sin()
    }

    /// Number of samples per channel covering `duration` seconds.
    pub fn samples_in(&self, duration: f64) -> usize {
        // Tolerate representation error: 0.01 / 125e-6 must give 80.
        (duration / self.sampling_period + 1e-9).floor() as usize
    }
}

/// One fixed-point measurement of a single phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    /// Microseconds since stream start.
    pub t_offset: u32,
    pub voltage: i32,
    pub current: i32,
    pub meter_id: u16,
}

impl Sample {
    /// Phase index (0 = A, 1 = B, 2 = C) carried in the id's low bits.
    pub fn phase(&self) -> usize {
        (self.meter_id & 0b11) as usize
    }

    /// Instantaneous power in watts, v·i.
    pub fn power(&self) -> f64 {
        self.voltage as f64 * 1e-3 * self.current as f64 * 1e-3
    }
}

pub fn channel_id(meter: u16, phase: usize) -> u16 {
    (meter << 2) | (phase as u16 & 0b11)
}

/// A generated stream: one strictly time-ordered channel per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub phases: [Vec<Sample>; 3],
}

impl Waveform {
    pub fn channel(&self, phase: usize) -> &[Sample] {
        &self.phases[phase]
    }

    pub fn samples_per_channel(&self) -> usize {
        self.phases[0].len()
    }

    /// All phases interleaved A, B, C per sampling instant.
    pub fn multiplexed(&self) -> Vec<Sample> {
        let n = self.samples_per_channel();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for ch in &self.phases {
                out.push(ch[i]);
            }
        }
        out
    }

    /// Writes `t_offset_us,phase,voltage_mv,current_ma` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_offset_us", "phase", "voltage_mv", "current_ma"])?;
        for s in self.multiplexed() {
            w.write_record([
                s.t_offset.to_string(),
                ["A", "B", "C"][s.phase()].to_string(),
                s.voltage.to_string(),
                s.current.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `duration` seconds of the configured source.
pub fn generate(config: &WaveformConfig, duration: f64) -> Result<Waveform, WaveformError> {
    config.validate()?;
    if !(duration.is_finite() && duration > 0.0) || config.sampling_period >= duration {
        return Err(WaveformError::Duration(duration));
    }
    let n = config.samples_in(duration);
    if (n as f64) * config.sampling_period * 1e6 > u32::MAX as f64 {
        return Err(WaveformError::Duration(duration));
    }

    let v_peak = config.peak_phase_voltage();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut phases: [Vec<Sample>; 3] = Default::default();
    for ch in phases.iter_mut() {
        ch.reserve_exact(n);
    }

    for i in 0..n {
        let t = i as f64 * config.sampling_period;
        let t_offset = (t * 1e6).round() as u32;
        for (phase, ch) in phases.iter_mut().enumerate() {
            let i_peak = config.load_profiles[phase].current_amplitude;
            let mut v = config.phase_voltage(phase, t);
            let mut c = config.phase_current(phase, t);
            if config.noise_stddev > 0.0 {
                let nv: f64 = StandardNormal.sample(&mut rng);
                let nc: f64 = StandardNormal.sample(&mut rng);
                v += nv * config.noise_stddev * v_peak;
                c += nc * config.noise_stddev * i_peak;
            }
            ch.push(Sample {
                t_offset,
                voltage: (v * 1e3).round() as i32,
                current: (c * 1e3).round() as i32,
                meter_id: channel_id(config.meter, phase),
            });
        }
    }
    Ok(Waveform { phases })
}

/// Waveform resolution expressed as a power-of-two decimation factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ResolutionLevel(u16);

impl ResolutionLevel {
    pub const FULL: ResolutionLevel = ResolutionLevel(1);
    pub const COARSEST: ResolutionLevel = ResolutionLevel(32);
    pub const ALL: [ResolutionLevel; 6] = [
        ResolutionLevel(1),
        ResolutionLevel(2),
        ResolutionLevel(4),
        ResolutionLevel(8),
        ResolutionLevel(16),
        ResolutionLevel(32),
    ];

    pub fn new(decimation: u32) -> Result<Self, WaveformError> {
        if decimation.is_power_of_two() && decimation <= 32 {
            Ok(ResolutionLevel(decimation as u16))
        } else {
            Err(WaveformError::Decimation(decimation))
        }
    }

    pub fn decimation(self) -> u32 {
        self.0 as u32
    }

    /// Effective sampling period for a base period.
    pub fn effective_period(self, base_period: f64) -> f64 {
        base_period * self.0 as f64
    }

    /// Next coarser level (doubled decimation), saturating at 32.
    pub fn coarser(self) -> Self {
        ResolutionLevel((self.0 * 2).min(32))
    }

    /// Next finer level (halved decimation), saturating at 1.
    pub fn finer(self) -> Self {
        ResolutionLevel((self.0 / 2).max(1))
    }
}

impl Default for ResolutionLevel {
    fn default() -> Self {
        Self::FULL
    }
}

impl TryFrom<u32> for ResolutionLevel {
    type Error = WaveformError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ResolutionLevel> for u32 {
    fn from(l: ResolutionLevel) -> u32 {
        l.decimation()
    }
}

/// Keeps every `d`-th sample starting at index 0.
pub fn decimate(samples: &[Sample], level: ResolutionLevel) -> Vec<Sample> {
    samples
        .iter()
        .step_by(level.decimation() as usize)
        .copied()
        .collect()
}
