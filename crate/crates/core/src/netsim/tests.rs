use super::*;

/// Sends `size`-byte messages every `interval` from `start` until `count`.
struct Fixed {
    start: SimTime,
    interval: SimTime,
    size: u32,
    count: u32,
    sent: u32,
    feedback: Vec<Feedback>,
}

impl Fixed {
    fn new(start: SimTime, interval: SimTime, size: u32, count: u32) -> Self {
        Self {
            start,
            interval,
            size,
            count,
            sent: 0,
            feedback: Vec::new(),
        }
    }
}

impl MessageSource for Fixed {
    fn first_send(&mut self) -> Option<SimTime> {
        (self.count > 0).then_some(self.start)
    }

    fn emit(&mut self, now: SimTime) -> (Option<Message>, Option<SimTime>) {
        let msg = Message {
            seq: self.sent,
            size: self.size,
            decimation: 1,
        };
        self.sent += 1;
        let next = (self.sent < self.count).then_some(now + self.interval);
        (Some(msg), next)
    }

    fn on_feedback(&mut self, feedback: &Feedback, _now: SimTime) {
        self.feedback.push(feedback.clone());
    }
}

fn host(t: &Topology, name: &str) -> NodeId {
    t.find(name).unwrap()
}

fn cfg(secs: f64) -> SimConfig {
    SimConfig {
        duration: SimTime::from_secs_f64(secs),
        ..SimConfig::default()
    }
}

#[test]
fn idle_three_hop_delay_is_exact() {
    let t = build_default_topology();
    let mut src = Fixed::new(SimTime::from_millis(1), SimTime::from_millis(10), 1120, 1);
    let flows = vec![FlowSpec::new(1, host(&t, "h1"), host(&t, "h5"), &mut src)];
    let report = run(&t, &cfg(1.0), flows, &[], None).unwrap();
    let recs = &report.flows[0].records;
    assert_eq!(recs.len(), 1);
    // 3 x (1178 B at 100 Mbps + 50 us)
    assert_eq!(recs[0].delay(), SimTime(432_720));
    assert!(matches!(src.feedback[0], Feedback::Delivered { retransmitted: false, .. }));
}

#[test]
fn no_flows_produces_empty_report() {
    let t = build_default_topology();
    let mut out = Vec::new();
    let report = run(&t, &cfg(1.0), Vec::new(), &[], Some(&mut out)).unwrap();
    assert!(report.flows.is_empty());
    assert_eq!(report.events, 0);
    assert_eq!(String::from_utf8(out).unwrap().trim(), TRACE_HEADER);
}

fn congested_run(seed: u64, trace: Option<&mut dyn Write>) -> (SimReport, Vec<Feedback>) {
    let t = build_default_topology();
    let mut src = Fixed::new(SimTime::from_millis(10), SimTime::from_millis(10), 11_274, 200);
    let flows = vec![FlowSpec::new(7, host(&t, "h1"), host(&t, "h5"), &mut src)];
    let cross: Vec<_> = (2..=4)
        .map(|i| CrossTrafficSpec {
            src: host(&t, &format!("h{i}")),
            dst: host(&t, &format!("h{}", i + 4)),
            pattern: Pattern::ConstantRate { rate: 33_000_000 },
            frame_size: 1442,
            start: SimTime::ZERO,
            stop: SimTime::from_secs_f64(2.0),
            responsive: false,
        })
        .collect();
    let c = SimConfig {
        seed,
        ..cfg(2.0)
    };
    let report = run(&t, &c, flows, &cross, trace).unwrap();
    (report, src.feedback)
}

#[test]
fn same_seed_same_trace() {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let (ra, _) = congested_run(5, Some(&mut a));
    let (rb, _) = congested_run(5, Some(&mut b));
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let mut c = Vec::new();
    congested_run(6, Some(&mut c));
    assert_ne!(a, c);
}

#[test]
fn byte_conservation_under_congestion() {
    let (report, feedback) = congested_run(1, None);
    let f = &report.flows[0];
    assert!(f.transport.bytes_sent > 0);
    assert_eq!(
        f.transport.bytes_sent,
        f.bytes_received + f.bytes_duplicate + f.bytes_dropped + f.bytes_in_network
    );
    let pending: u64 = f.bytes_submitted - f.bytes_delivered;
    assert_eq!(pending > 0, f.stalled());
    assert_eq!(f.messages_offered, f.messages_rejected + f.records.len() as u64 + f.messages_undelivered);
    let delivered_fb = feedback
        .iter()
        .filter(|fb| matches!(fb, Feedback::Delivered { .. }))
        .count();
    assert_eq!(delivered_fb, f.records.len());
    for c in &report.cross {
        assert_eq!(c.frames_sent, c.frames_delivered + c.frames_dropped);
    }
}

#[test]
fn records_are_in_order_with_positive_delay() {
    let (report, _) = congested_run(2, None);
    let recs = &report.flows[0].records;
    assert!(!recs.is_empty());
    for w in recs.windows(2) {
        assert!(w[0].seq < w[1].seq);
        assert!(w[0].recv_time <= w[1].recv_time);
    }
    assert!(recs.iter().all(|r| r.delay() >= SimTime(432_720)));
}

#[test]
fn full_send_buffer_rejects() {
    let t = build_default_topology();
    let mut src = Fixed::new(SimTime::ZERO, SimTime(1), 60_000, 40);
    let mut flow = FlowSpec::new(1, host(&t, "h1"), host(&t, "h5"), &mut src);
    flow.send_buffer = 200_000;
    let report = run(&t, &cfg(1.0), vec![flow], &[], None).unwrap();
    let f = &report.flows[0];
    assert!(f.messages_rejected > 0);
    assert_eq!(f.records.len() as u64 + f.messages_rejected, 40);
    assert!(!f.stalled());
    assert!(src.feedback.iter().any(|fb| matches!(fb, Feedback::Rejected { .. })));
}

#[test]
fn responsive_cross_traffic_backs_off() {
    let t = build_default_topology();
    let cross = vec![CrossTrafficSpec {
        src: host(&t, "h2"),
        dst: host(&t, "h6"),
        pattern: Pattern::ConstantRate { rate: 150_000_000 },
        frame_size: 1460,
        start: SimTime::ZERO,
        stop: SimTime::from_secs_f64(1.0),
        responsive: true,
    }];
    let report = run(&t, &cfg(1.0), Vec::new(), &cross, None).unwrap();
    let x = &report.responsive_cross[0];
    assert!(x.transport.loss_events > 0 || x.messages_rejected > 0);
    // goodput bounded by the bottleneck
    let secs = report.end_time.as_secs_f64();
    assert!(x.bytes_delivered as f64 * 8.0 / secs <= 100e6);
    assert!(x.bytes_delivered > 5_000_000);
}

#[test]
fn unroutable_and_bad_hosts_are_rejected() {
    let mut t = build_default_topology();
    let lonely = t.add_node("h9", NodeKind::Host);
    t.install_routes();
    let mut src = Fixed::new(SimTime::ZERO, SimTime(1), 100, 1);
    let flows = vec![FlowSpec::new(1, host(&t, "h1"), lonely, &mut src)];
    assert!(matches!(
        run(&t, &cfg(1.0), flows, &[], None),
        Err(SimError::Unroutable { .. })
    ));
    let mut src = Fixed::new(SimTime::ZERO, SimTime(1), 100, 1);
    let s1 = host(&t, "s1");
    let flows = vec![FlowSpec::new(1, host(&t, "h1"), s1, &mut src)];
    assert!(matches!(run(&t, &cfg(1.0), flows, &[], None), Err(SimError::Config(_))));
}
