//! Message-oriented reliable transport with CUBIC congestion control.
//!
//! Each application message is cut into MTU-sized segments. The receiver
//! acknowledges every segment with the cumulative next-expected index plus
//! the index of the segment that triggered the ACK (a one-block SACK) and an
//! echo of its transmit time. A segment is declared lost once three segments
//! transmitted after it have been delivered, or when the retransmission
//! timer (twice the smoothed RTT, doubled per consecutive expiry) fires.

use std::collections::BTreeSet;

use super::cubic::{CubicParams, CubicState};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SegState {
    Unsent,
    InFlight,
    Lost,
    Sacked,
    Acked,
}

#[derive(Debug, Clone)]
pub(crate) struct Segment {
    pub len: u32,
    pub state: SegState,
    tx_order: u64,
    pub sent_at: SimTime,
    delivered_after: u32,
    pub transmissions: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct AppMsg {
    pub seq: u32,
    pub send_time: SimTime,
    pub size: u32,
    pub decimation: u16,
    pub first_seg: u32,
    /// One past the last segment.
    pub end_seg: u32,
    pub delivered_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Ack {
    pub cum: u32,
    pub sack: u32,
    pub echo: SimTime,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub segments_sent: u64,
    pub bytes_sent: u64,
    pub bytes_retransmitted: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    pub loss_events: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RtoConfig {
    pub min_rto: SimTime,
    pub initial_rto: SimTime,
    pub max_backoff: u32,
}

#[derive(Debug)]
pub(crate) struct Sender {
    pub segs: Vec<Segment>,
    pub msgs: Vec<AppMsg>,
    cum_acked: u32,
    next_unsent: u32,
    in_flight_set: BTreeSet<u32>,
    lost_set: BTreeSet<u32>,
    pub cubic: CubicState,
    tx_counter: u64,
    recovery_point: Option<u32>,
    backoff: u32,
    rto_cfg: RtoConfig,
    pub timer_deadline: Option<SimTime>,
    cwnd_limited: bool,
    /// Bytes of admitted messages not yet cumulatively acknowledged.
    pub buffered: u64,
    pub send_buffer: u64,
    /// Messages whose delivery has been reported to the application.
    pub acked_msgs: usize,
    pub stats: TransportStats,
}

impl Sender {
    pub fn new(cubic: CubicParams, rto_cfg: RtoConfig, send_buffer: u64) -> Self {
        Self {
            segs: Vec::new(),
            msgs: Vec::new(),
            cum_acked: 0,
            next_unsent: 0,
            in_flight_set: BTreeSet::new(),
            lost_set: BTreeSet::new(),
            cubic: CubicState::new(cubic),
            tx_counter: 0,
            recovery_point: None,
            backoff: 0,
            rto_cfg,
            timer_deadline: None,
            cwnd_limited: false,
            buffered: 0,
            send_buffer,
            acked_msgs: 0,
            stats: TransportStats::default(),
        }
    }

    /// Queues a message split into `frag_sizes`; returns false when the send
    /// buffer cannot hold it.
    pub fn admit(
        &mut self,
        seq: u32,
        send_time: SimTime,
        size: u32,
        decimation: u16,
        frag_sizes: &[usize],
    ) -> bool {
        if self.buffered + size as u64 > self.send_buffer {
            return false;
        }
        let first_seg = self.segs.len() as u32;
        for &len in frag_sizes {
            self.segs.push(Segment {
                len: len as u32,
                state: SegState::Unsent,
                tx_order: 0,
                sent_at: SimTime::ZERO,
                delivered_after: 0,
                transmissions: 0,
            });
        }
        self.msgs.push(AppMsg {
            seq,
            send_time,
            size,
            decimation,
            first_seg,
            end_seg: self.segs.len() as u32,
            delivered_at: None,
        });
        self.buffered += size as u64;
        true
    }

    pub fn in_recovery(&self) -> bool {
        self.recovery_point.is_some_and(|rp| self.cum_acked < rp)
    }

    fn rto(&self) -> SimTime {
        let base = if self.cubic.rtt_estimate > 0.0 {
            SimTime::from_secs_f64(2.0 * self.cubic.rtt_estimate).max(self.rto_cfg.min_rto)
        } else {
            self.rto_cfg.initial_rto
        };
        SimTime(base.0.saturating_mul(1 << self.backoff))
    }

    /// Segments to put on the wire now, lost segments first.
    pub fn poll_transmit(&mut self, now: SimTime) -> Vec<u32> {
        let mut out = Vec::new();
        self.cwnd_limited = false;
        loop {
            let next = match self.lost_set.first() {
                Some(&s) => s,
                None if (self.next_unsent as usize) < self.segs.len() => self.next_unsent,
                None => break,
            };
            let len = self.segs[next as usize].len;
            if !self.cubic.can_send(len) {
                self.cwnd_limited = true;
                break;
            }
            let seg = &mut self.segs[next as usize];
            if seg.state == SegState::Lost {
                self.lost_set.remove(&next);
                self.stats.bytes_retransmitted += len as u64;
            } else {
                self.next_unsent += 1;
            }
            seg.state = SegState::InFlight;
            seg.tx_order = self.tx_counter;
            seg.sent_at = now;
            seg.delivered_after = 0;
            seg.transmissions += 1;
            self.tx_counter += 1;
            self.in_flight_set.insert(next);
            self.cubic.in_flight += len as u64;
            self.stats.segments_sent += 1;
            self.stats.bytes_sent += len as u64;
            out.push(next);
        }
        if !out.is_empty() && self.timer_deadline.is_none() {
            self.timer_deadline = Some(now + self.rto());
        }
        out
    }

    fn mark_delivered(&mut self, s: u32, to: SegState, delivered_tx: &mut Vec<u64>) -> u64 {
        let seg = &mut self.segs[s as usize];
        let len = seg.len as u64;
        let newly = match seg.state {
            SegState::InFlight => {
                self.in_flight_set.remove(&s);
                self.cubic.in_flight -= len;
                delivered_tx.push(seg.tx_order);
                len
            }
            SegState::Lost => {
                self.lost_set.remove(&s);
                len
            }
            SegState::Unsent | SegState::Sacked | SegState::Acked => 0,
        };
        if seg.state != SegState::Acked {
            seg.state = to;
        }
        newly
    }

    /// Processes an ACK; returns indices of messages newly known delivered.
    pub fn on_ack(&mut self, ack: Ack, now: SimTime) -> Vec<usize> {
        let sample = now.saturating_sub(ack.echo).as_secs_f64();
        if sample > 0.0 {
            self.cubic.update_rtt(sample);
        }

        let mut delivered_tx = Vec::new();
        let mut acked_bytes = 0;
        if ack.sack >= ack.cum && (ack.sack as usize) < self.segs.len() {
            acked_bytes += self.mark_delivered(ack.sack, SegState::Sacked, &mut delivered_tx);
        }
        let progress = ack.cum > self.cum_acked;
        for s in self.cum_acked..ack.cum.min(self.segs.len() as u32) {
            acked_bytes += self.mark_delivered(s, SegState::Acked, &mut delivered_tx);
        }
        if progress {
            self.cum_acked = ack.cum;
            self.backoff = 0;
        }

        // Three later transmissions delivered => lost.
        let mut newly_lost = Vec::new();
        if !delivered_tx.is_empty() {
            for &s in &self.in_flight_set {
                let seg = &mut self.segs[s as usize];
                let later = delivered_tx.iter().filter(|&&t| t > seg.tx_order).count() as u32;
                seg.delivered_after += later;
                if seg.delivered_after >= 3 {
                    newly_lost.push(s);
                }
            }
        }
        for &s in &newly_lost {
            let seg = &mut self.segs[s as usize];
            seg.state = SegState::Lost;
            self.in_flight_set.remove(&s);
            self.lost_set.insert(s);
            self.cubic.in_flight -= seg.len as u64;
        }
        if !newly_lost.is_empty() {
            self.stats.fast_retransmits += newly_lost.len() as u64;
            if !self.in_recovery() {
                self.enter_recovery(now);
            }
        }

        if acked_bytes > 0 && self.cwnd_limited && !self.in_recovery() {
            self.cubic.on_ack(acked_bytes, now);
        }

        if self.in_flight_set.is_empty() {
            self.timer_deadline = None;
        } else if progress {
            self.timer_deadline = Some(now + self.rto());
        }

        let mut done = Vec::new();
        while self.acked_msgs < self.msgs.len()
            && self.msgs[self.acked_msgs].end_seg <= self.cum_acked
        {
            self.buffered -= self.msgs[self.acked_msgs].size as u64;
            done.push(self.acked_msgs);
            self.acked_msgs += 1;
        }
        done
    }

    fn enter_recovery(&mut self, now: SimTime) {
        self.cubic.on_loss(now);
        self.recovery_point = Some(self.next_unsent);
        self.stats.loss_events += 1;
    }

    /// Fires the retransmission timer if it is due. Returns true if it fired.
    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self.timer_deadline {
            Some(d) if d <= now && !self.in_flight_set.is_empty() => {}
            _ => return false,
        }
        for s in std::mem::take(&mut self.in_flight_set) {
            let seg = &mut self.segs[s as usize];
            seg.state = SegState::Lost;
            self.lost_set.insert(s);
        }
        self.cubic.in_flight = 0;
        self.stats.timeouts += 1;
        self.enter_recovery(now);
        self.backoff = (self.backoff + 1).min(self.rto_cfg.max_backoff);
        self.timer_deadline = None;
        true
    }

    pub fn msg_retransmitted(&self, msg: usize) -> bool {
        let m = &self.msgs[msg];
        self.segs[m.first_seg as usize..m.end_seg as usize]
            .iter()
            .any(|s| s.transmissions > 1)
    }
}

#[derive(Debug, Default)]
pub(crate) struct Receiver {
    next_expected: u32,
    out_of_order: BTreeSet<u32>,
    next_msg: usize,
    pub bytes_received: u64,
    pub bytes_duplicate: u64,
}

impl Receiver {
    /// Accepts segment `seg`; returns the ACK to send and the indices of
    /// messages now deliverable in order.
    pub fn on_data(
        &mut self,
        seg: u32,
        sent_at: SimTime,
        segs: &[Segment],
        msgs: &[AppMsg],
    ) -> (Ack, Vec<usize>) {
        let len = segs[seg as usize].len as u64;
        if seg < self.next_expected || self.out_of_order.contains(&seg) {
            self.bytes_duplicate += len;
        } else {
            self.bytes_received += len;
            if seg == self.next_expected {
                self.next_expected += 1;
                while self.out_of_order.remove(&self.next_expected) {
                    self.next_expected += 1;
                }
            } else {
                self.out_of_order.insert(seg);
            }
        }
        let mut delivered = Vec::new();
        while self.next_msg < msgs.len() && msgs[self.next_msg].end_seg <= self.next_expected {
            delivered.push(self.next_msg);
            self.next_msg += 1;
        }
        (
            Ack {
                cum: self.next_expected,
                sack: seg,
                echo: sent_at,
            },
            delivered,
        )
    }
}
