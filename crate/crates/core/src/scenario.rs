//! Scenario files and the experiment runner behind the command line.
//!
//! A scenario is a TOML document. Every optional key has a default that is
//! applied at parse time, so rendering a parsed scenario writes every value
//! out explicitly. See `scenarios/README.md` for the key reference.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{write_decisions_csv, Controller, ControllerPolicy, Decision};
use crate::detect::{write_verdicts_csv, DetectorConfig, VerdictRecord};
use crate::meter::MeterSource;
use crate::metrics::{fit_time_slope, summarize, write_records_csv, DelayRecord, Summary};
use crate::netsim::{
    self, build_dumbbell, CrossTrafficSpec, CubicParams, FlowSpec, LinkParams, Pattern, SimConfig,
    SimError, SimReport, Topology,
};
use crate::packetizer::SendSchedule;
use crate::time::SimTime;
use crate::waveform::{generate, ResolutionLevel, WaveformConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation: {0}")]
    Sim(SimError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl RunError {
    /// 1 for configuration problems, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => 2,
            RunError::Scenario(ScenarioError::Read { .. }) => 2,
            RunError::Sim(SimError::Trace(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

/// One direction's worth of link settings; applied to both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Bits per second.
    pub bandwidth: u64,
    /// Seconds.
    pub propagation_delay: f64,
    /// Bytes.
    pub queue_capacity: u64,
    pub mtu: u32,
    pub per_frame_overhead: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = LinkParams::default();
        Self {
            bandwidth: p.bandwidth,
            propagation_delay: p.propagation_delay.as_secs_f64(),
            queue_capacity: p.queue_capacity,
            mtu: p.mtu,
            per_frame_overhead: p.per_frame_overhead,
        }
    }
}

impl LinkConfig {
    pub fn params(&self) -> LinkParams {
        LinkParams {
            bandwidth: self.bandwidth,
            propagation_delay: SimTime::from_secs_f64(self.propagation_delay),
            queue_capacity: self.queue_capacity,
            mtu: self.mtu,
            per_frame_overhead: self.per_frame_overhead,
        }
    }

    fn validate(&self, field: &str) -> Result<(), ScenarioError> {
        if !(self.propagation_delay.is_finite() && self.propagation_delay >= 0.0) {
            return Err(invalid(format!("{field}.propagation_delay"), "must be non-negative"));
        }
        self.params()
            .validate()
            .map_err(|e| invalid(field, e.to_string()))
    }
}

/// Overrides for the two-switch default network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Host-to-switch links.
    pub access: LinkConfig,
    /// The link joining the two switches.
    pub inter_switch: LinkConfig,
}

impl NetworkConfig {
    pub fn topology(&self) -> Topology {
        build_dumbbell(self.access.params(), self.inter_switch.params())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub mss: u32,
    /// Segments.
    pub initial_window: u32,
    pub cubic_c: f64,
    pub cubic_beta: f64,
    /// Seconds.
    pub min_rto: f64,
    /// Seconds, used until the first round-trip sample.
    pub initial_rto: f64,
    pub max_backoff: u32,
    /// Bytes a flow may hold unacknowledged before new messages are refused.
    pub send_buffer: u64,
    /// Seconds allowed after `duration` for in-flight data to drain.
    pub drain_limit: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            mss: c.cubic.mss,
            initial_window: c.cubic.initial_window,
            cubic_c: c.cubic.c,
            cubic_beta: c.cubic.beta,
            min_rto: c.min_rto.as_secs_f64(),
            initial_rto: c.initial_rto.as_secs_f64(),
            max_backoff: c.max_backoff,
            send_buffer: 1 << 20,
            drain_limit: c.drain_limit.as_secs_f64(),
        }
    }
}

impl TransportConfig {
    fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("transport.{name}"), "must be positive"))
            }
        };
        positive("cubic_c", self.cubic_c)?;
        positive("min_rto", self.min_rto)?;
        positive("initial_rto", self.initial_rto)?;
        if !(self.drain_limit.is_finite() && self.drain_limit >= 0.0) {
            return Err(invalid("transport.drain_limit", "must be non-negative"));
        }
        if !(self.cubic_beta > 0.0 && self.cubic_beta < 1.0) {
            return Err(invalid("transport.cubic_beta", "must lie in (0, 1)"));
        }
        if self.mss == 0 {
            return Err(invalid("transport.mss", "must be positive"));
        }
        if self.initial_window == 0 {
            return Err(invalid("transport.initial_window", "must be positive"));
        }
        if self.send_buffer == 0 {
            return Err(invalid("transport.send_buffer", "must be positive"));
        }
        Ok(())
    }
}

/// Electrical parameters shared by every meter in the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSettings {
    pub line_voltage_rms: f64,
    pub frequency: f64,
    pub noise_stddev: f64,
}

impl Default for WaveSettings {
    fn default() -> Self {
        let w = WaveformConfig::default();
        Self {
            line_voltage_rms: w.line_voltage_rms,
            frequency: w.frequency,
            noise_stddev: w.noise_stddev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterFlow {
    #[serde(default = "default_flow_label")]
    pub label: String,
    pub src: String,
    pub dst: String,
    /// Seconds between raw samples.
    #[serde(default = "default_sampling_period")]
    pub sampling_period: f64,
    /// Seconds between packets.
    #[serde(default = "default_logging_interval")]
    pub logging_interval: f64,
    /// Initial decimation factor.
    #[serde(default = "default_resolution")]
    pub resolution: ResolutionLevel,
    /// Which phase channel the meter reports.
    #[serde(default)]
    pub phase: usize,
    #[serde(default)]
    pub adaptive: bool,
    /// Messages per detector window.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub policy: ControllerPolicy,
    #[serde(default)]
    pub detector: DetectorConfig,
}

fn default_flow_label() -> String {
    "meter".into()
}
fn default_sampling_period() -> f64 {
    WaveformConfig::default().sampling_period
}
fn default_logging_interval() -> f64 {
    0.01
}
fn default_resolution() -> ResolutionLevel {
    ResolutionLevel::FULL
}
fn default_window() -> usize {
    20
}
fn default_frame_size() -> u32 {
    1460
}
fn default_output() -> String {
    "out".into()
}
fn default_label() -> String {
    "scenario".into()
}

impl MeterFlow {
    pub fn new(label: &str, src: &str, dst: &str) -> Self {
        Self {
            label: label.into(),
            src: src.into(),
            dst: dst.into(),
            sampling_period: default_sampling_period(),
            logging_interval: default_logging_interval(),
            resolution: default_resolution(),
            phase: 0,
            adaptive: false,
            window: default_window(),
            policy: ControllerPolicy::default(),
            detector: DetectorConfig::default(),
        }
    }

    pub fn schedule(&self) -> SendSchedule {
        SendSchedule::new(self.logging_interval, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossFlow {
    pub src: String,
    pub dst: String,
    pub pattern: Pattern,
    /// Payload bytes per frame.
    #[serde(default = "default_frame_size")]
    pub frame_size: u32,
    /// Seconds.
    #[serde(default)]
    pub start: f64,
    /// Seconds; the scenario duration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default)]
    pub responsive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_label")]
    pub label: String,
    /// Simulated seconds of traffic.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Directory receiving the artifacts.
    #[serde(default = "default_output")]
    pub output: String,
    /// Also write the per-event trace CSV.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub waveform: WaveSettings,
    pub meter_flows: Vec<MeterFlow>,
    #[serde(default)]
    pub cross_traffic: Vec<CrossFlow>,
}

impl Scenario {
    /// A scenario with defaults everywhere and the given meter flows.
    pub fn new(label: &str, duration: f64, seed: u64, meter_flows: Vec<MeterFlow>) -> Self {
        Self {
            label: label.into(),
            duration,
            seed,
            output: default_output(),
            trace: false,
            network: NetworkConfig::default(),
            transport: TransportConfig::default(),
            waveform: WaveSettings::default(),
            meter_flows,
            cross_traffic: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        self.network.access.validate("network.access")?;
        self.network.inter_switch.validate("network.inter_switch")?;
        self.transport.validate()?;
        self.wave_config(0, 0)
            .validate()
            .map_err(|e| invalid("waveform", e.to_string()))?;
        let topo = self.network.topology();
        let host = |field: String, name: &str| match topo.find(name) {
            Some(id) if topo.node(id).kind == netsim::NodeKind::Host => Ok(()),
            _ => Err(invalid(field, format!("unknown host {name:?}"))),
        };
        if self.meter_flows.is_empty() {
            return Err(invalid("meter_flows", "at least one meter flow is required"));
        }
        let mut labels = BTreeSet::new();
        for (i, f) in self.meter_flows.iter().enumerate() {
            let at = |k: &str| format!("meter_flows[{i}].{k}");
            host(at("src"), &f.src)?;
            host(at("dst"), &f.dst)?;
            if f.src == f.dst {
                return Err(invalid(at("dst"), "must differ from src"));
            }
            if f.label.is_empty()
                || !f
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(invalid(at("label"), "use letters, digits, '_' or '-'"));
            }
            if !labels.insert(f.label.as_str()) {
                return Err(invalid(at("label"), format!("duplicate label {:?}", f.label)));
            }
            if !(f.sampling_period.is_finite() && f.sampling_period >= 1e-6) {
                return Err(invalid(at("sampling_period"), "must be at least 1e-6 s"));
            }
            f.schedule()
                .validate(f.sampling_period)
                .map_err(|e| invalid(at("logging_interval"), e.to_string()))?;
            if f.phase > 2 {
                return Err(invalid(at("phase"), "must be 0, 1 or 2"));
            }
            if f.window == 0 {
                return Err(invalid(at("window"), "must be at least 1"));
            }
            f.policy
                .validate()
                .map_err(|e| invalid(at("policy"), e.to_string()))?;
            f.detector
                .validate()
                .map_err(|e| invalid(at("detector"), e.to_string()))?;
        }
        for (i, c) in self.cross_traffic.iter().enumerate() {
            let at = |k: &str| format!("cross_traffic[{i}].{k}");
            host(at("src"), &c.src)?;
            host(at("dst"), &c.dst)?;
            if c.src == c.dst {
                return Err(invalid(at("dst"), "must differ from src"));
            }
            if c.pattern.rate() == 0 {
                return Err(invalid(at("pattern.rate"), "must be positive"));
            }
            if let Pattern::OnOff { on, off, .. } = c.pattern {
                if !(on.is_finite() && on > 0.0 && off.is_finite() && off >= 0.0) {
                    return Err(invalid(at("pattern"), "need on > 0 and off >= 0"));
                }
            }
            if c.frame_size == 0 || c.frame_size > self.network.access.mtu.min(self.network.inter_switch.mtu) {
                return Err(invalid(at("frame_size"), "must be between 1 and the link mtu"));
            }
            if !(c.start.is_finite() && c.start >= 0.0) {
                return Err(invalid(at("start"), "must be non-negative"));
            }
            if let Some(stop) = c.stop {
                if !(stop.is_finite() && stop >= c.start) {
                    return Err(invalid(at("stop"), "must not precede start"));
                }
            }
        }
        Ok(())
    }

    fn wave_config(&self, index: usize, phase_seed: u64) -> WaveformConfig {
        WaveformConfig {
            line_voltage_rms: self.waveform.line_voltage_rms,
            frequency: self.waveform.frequency,
            sampling_period: self
                .meter_flows
                .get(index)
                .map_or(default_sampling_period(), |f| f.sampling_period),
            noise_stddev: self.waveform.noise_stddev,
            seed: phase_seed,
            meter: index as u16 + 1,
            ..WaveformConfig::default()
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let t = &self.transport;
        SimConfig {
            duration: SimTime::from_secs_f64(self.duration),
            seed: self.seed,
            drain_limit: SimTime::from_secs_f64(t.drain_limit),
            cubic: CubicParams {
                c: t.cubic_c,
                beta: t.cubic_beta,
                mss: t.mss,
                initial_window: t.initial_window,
            },
            min_rto: SimTime::from_secs_f64(t.min_rto),
            initial_rto: SimTime::from_secs_f64(t.initial_rto),
            max_backoff: t.max_backoff,
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text).map_err(|e| match e {
        ScenarioError::Syntax(m) => ScenarioError::Syntax(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Serializes a scenario with every default written out.
pub fn render_scenario(s: &Scenario) -> String {
    toml::to_string(s).expect("scenario fields are all representable in TOML")
}

/// Results for one meter flow.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub label: String,
    /// Schedule the flow started with.
    pub schedule: SendSchedule,
    pub packet_size: usize,
    pub records: Vec<DelayRecord>,
    pub summary: Summary,
    /// Delay against send time, seconds per second.
    pub time_slope: Option<f64>,
    pub verdicts: Vec<VerdictRecord>,
    pub decisions: Vec<Decision>,
    /// Send time and resolution of every packet.
    pub sent: Vec<(SimTime, ResolutionLevel)>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub report: SimReport,
    pub flows: Vec<FlowOutcome>,
}

impl Outcome {
    pub fn flow(&self, label: &str) -> Option<&FlowOutcome> {
        self.flows.iter().find(|f| f.label == label)
    }

    /// `key = value` summary of the whole run.
    pub fn summary_text(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let _ = writeln!(out, "scenario = {}", s.label);
        let _ = writeln!(out, "seed = {}", s.seed);
        let _ = writeln!(out, "duration_s = {}", s.duration);
        let _ = writeln!(out, "end_time_us = {}", self.report.end_time);
        let _ = writeln!(out, "events = {}", self.report.events);
        for (f, r) in self.flows.iter().zip(&self.report.flows) {
            let p = format!("flow.{}", f.label);
            let _ = writeln!(out, "{p}.packet_size = {}", f.packet_size);
            let _ = writeln!(out, "{p}.logging_interval_s = {}", f.schedule.logging_interval);
            let _ = writeln!(out, "{p}.decimation = {}", f.schedule.resolution.decimation());
            out.push_str(&f.summary.render(&p));
            match f.time_slope {
                Some(m) => {
                    let _ = writeln!(out, "{p}.time_slope = {m:.9e}");
                }
                None => {
                    let _ = writeln!(out, "{p}.time_slope = nan");
                }
            }
            let _ = writeln!(out, "{p}.retransmitted = {}", r.messages_retransmitted);
            let _ = writeln!(out, "{p}.timeouts = {}", r.transport.timeouts);
            let red = f
                .verdicts
                .iter()
                .filter(|v| v.verdict.level == crate::detect::Level::Red)
                .count();
            let _ = writeln!(out, "{p}.windows = {}", f.verdicts.len());
            let _ = writeln!(out, "{p}.red_windows = {red}");
            let _ = writeln!(out, "{p}.level_changes = {}", f.decisions.iter().filter(|d| d.old_level != d.new_level).count());
        }
        for l in &self.report.links {
            if l.stats.frames_dropped > 0 {
                let _ = writeln!(out, "link.{}-{}.frames_dropped = {}", l.from, l.to, l.stats.frames_dropped);
            }
        }
        out
    }
}

/// Runs the scenario in memory. When `trace` is given the event trace is
/// written to it regardless of the scenario's `trace` flag.
pub fn simulate(s: &Scenario, trace: Option<&mut dyn Write>) -> Result<Outcome, RunError> {
    s.validate()?;
    let topo = s.network.topology();
    let cfg = s.sim_config();
    let node = |name: &str| topo.find(name).expect("validated host");

    let mut sources = Vec::with_capacity(s.meter_flows.len());
    for (i, f) in s.meter_flows.iter().enumerate() {
        let wave_seed = s.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
        let wave = generate(&s.wave_config(i, wave_seed), s.duration + 1.0)
            .map_err(|e| invalid(format!("meter_flows[{i}]"), e.to_string()))?;
        let controller = f.adaptive.then(|| Controller::new(f.policy.clone(), f.resolution));
        sources.push(MeterSource::new(
            wave.channel(f.phase).to_vec(),
            f.sampling_period,
            crate::waveform::channel_id(i as u16 + 1, f.phase),
            f.schedule(),
            f.window,
            f.detector.build(),
            controller,
        ));
    }
    let flows: Vec<FlowSpec> = s
        .meter_flows
        .iter()
        .zip(sources.iter_mut())
        .enumerate()
        .map(|(i, (f, src))| {
            let mut spec = FlowSpec::new(i as u32 + 1, node(&f.src), node(&f.dst), src);
            spec.label = f.label.clone();
            spec.send_buffer = s.transport.send_buffer;
            spec
        })
        .collect();
    let cross: Vec<CrossTrafficSpec> = s
        .cross_traffic
        .iter()
        .map(|c| CrossTrafficSpec {
            src: node(&c.src),
            dst: node(&c.dst),
            pattern: c.pattern,
            frame_size: c.frame_size,
            start: SimTime::from_secs_f64(c.start),
            stop: SimTime::from_secs_f64(c.stop.unwrap_or(s.duration)),
            responsive: c.responsive,
        })
        .collect();
    let report = netsim::run(&topo, &cfg, flows, &cross, trace).map_err(|e| match e {
        SimError::Config(m) => RunError::Scenario(invalid("scenario", m)),
        e => RunError::Sim(e),
    })?;

    let mut outcomes = Vec::with_capacity(sources.len());
    for ((f, src), r) in s.meter_flows.iter().zip(&sources).zip(&report.flows) {
        if let Some(e) = src.error() {
            return Err(invalid(format!("meter_flows.{}", f.label), e.to_string()).into());
        }
        let summary = summarize(&r.records, r.messages_lost() as usize);
        outcomes.push(FlowOutcome {
            label: f.label.clone(),
            schedule: f.schedule(),
            packet_size: f.schedule().packet_len(f.sampling_period),
            time_slope: fit_time_slope(&r.records).ok().map(|e| e.slope),
            records: r.records.clone(),
            summary,
            verdicts: src.verdicts().to_vec(),
            decisions: src.decisions().to_vec(),
            sent: src.sent().to_vec(),
        });
    }
    Ok(Outcome {
        scenario: s.clone(),
        report,
        flows: outcomes,
    })
}

pub const MANIFEST: &str = "manifest.txt";

/// Runs the scenario and writes its artifacts into `out`, or the
/// scenario's own output directory. Returns the outcome and the files
/// written, manifest last.
pub fn run_scenario(s: &Scenario, out: Option<&Path>) -> Result<(Outcome, Vec<PathBuf>), RunError> {
    s.validate()?;
    let dir = out.map_or_else(|| PathBuf::from(&s.output), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    // A stale manifest would claim a completed run.
    let manifest = dir.join(MANIFEST);
    match fs::remove_file(&manifest) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&manifest)(e)),
    }

    let mut written = Vec::new();
    let outcome = if s.trace {
        let path = dir.join("trace.csv");
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        let outcome = simulate(s, Some(&mut file))?;
        written.push(path);
        outcome
    } else {
        simulate(s, None)?
    };

    for f in &outcome.flows {
        let path = dir.join(format!("{}_delays.csv", f.label));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_records_csv(&f.records, BufWriter::new(file)).map_err(csv_err(&path))?;
        written.push(path);

        let path = dir.join(format!("{}_verdicts.csv", f.label));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_verdicts_csv(&f.verdicts, BufWriter::new(file)).map_err(csv_err(&path))?;
        written.push(path);

        let path = dir.join(format!("{}_adaptation.csv", f.label));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_decisions_csv(&f.decisions, BufWriter::new(file)).map_err(csv_err(&path))?;
        written.push(path);
    }
    let path = dir.join("summary.txt");
    fs::write(&path, outcome.summary_text()).map_err(io_err(&path))?;
    written.push(path);

    let mut listing = String::new();
    for p in &written {
        let name = p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        let _ = writeln!(listing, "{name}");
    }
    fs::write(&manifest, listing).map_err(io_err(&manifest))?;
    written.push(manifest);
    Ok((outcome, written))
}

/// One line of a comparison table, taken from a scenario's first meter flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub packet_size: usize,
    pub logging_interval: f64,
    pub decimation: u32,
    pub mean_delay: f64,
    pub time_slope: Option<f64>,
    pub loss_fraction: f64,
}

pub const COMPARE_HEADER: [&str; 7] = [
    "label",
    "packet_size",
    "interval_s",
    "decimation",
    "mean_delay_s",
    "time_slope",
    "loss_fraction",
];

/// Runs every scenario on its own thread and tabulates the results.
pub fn compare(scenarios: &[Scenario]) -> Result<Vec<CompareRow>, RunError> {
    if scenarios.len() < 2 {
        return Err(RunError::Usage(format!(
            "compare needs at least two scenarios, got {}",
            scenarios.len()
        )));
    }
    let d = scenarios[0].duration;
    if let Some(s) = scenarios.iter().find(|s| s.duration != d) {
        return Err(RunError::Usage(format!(
            "scenario {:?} runs {} s but {:?} runs {} s; durations must match",
            s.label, s.duration, scenarios[0].label, d
        )));
    }
    let results: Vec<Result<Outcome, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(move || simulate(s, None)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    results
        .into_iter()
        .map(|r| {
            let o = r?;
            let f = &o.flows[0];
            Ok(CompareRow {
                label: o.scenario.label.clone(),
                packet_size: f.packet_size,
                logging_interval: f.schedule.logging_interval,
                decimation: f.schedule.resolution.decimation(),
                mean_delay: f.summary.mean_delay,
                time_slope: f.time_slope,
                loss_fraction: f.summary.loss_fraction,
            })
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(COMPARE_HEADER)?;
    for r in rows {
        wr.write_record([
            r.label.clone(),
            r.packet_size.to_string(),
            r.logging_interval.to_string(),
            r.decimation.to_string(),
            format!("{:.9}", r.mean_delay),
            r.time_slope.map_or("nan".into(), |m| format!("{m:.9e}")),
            format!("{:.9}", r.loss_fraction),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
