//! Tail-drop FIFO byte queue in front of a fixed-rate transmitter.

use std::collections::VecDeque;

use super::topology::LinkParams;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueue {
    /// Accepted; the last bit leaves the transmitter at `departure`.
    Enqueued { departure: SimTime },
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames_accepted: u64,
    pub bytes_accepted: u64,
    pub frames_dropped: u64,
    pub bytes_dropped: u64,
    pub max_queued_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct LinkState {
    pub params: LinkParams,
    /// Departure time and size of every frame not yet fully transmitted.
    backlog: VecDeque<(SimTime, u32)>,
    queued_bytes: u64,
    last_departure: SimTime,
    pub stats: LinkStats,
}

impl LinkState {
    pub fn new(params: LinkParams) -> Self {
        Self {
            params,
            backlog: VecDeque::new(),
            queued_bytes: 0,
            last_departure: SimTime::ZERO,
            stats: LinkStats::default(),
        }
    }

    fn release(&mut self, now: SimTime) {
        while let Some(&(dep, bytes)) = self.backlog.front() {
            if dep > now {
                break;
            }
            self.backlog.pop_front();
            self.queued_bytes -= bytes as u64;
        }
    }

    /// Bytes waiting or in service at `now`.
    pub fn queued_bytes(&mut self, now: SimTime) -> u64 {
        self.release(now);
        self.queued_bytes
    }

    pub fn link_enqueue(&mut self, wire_bytes: u32, now: SimTime) -> Enqueue {
        debug_assert!(wire_bytes <= self.params.max_wire_frame());
        self.release(now);
        if self.queued_bytes + wire_bytes as u64 > self.params.queue_capacity {
            self.stats.frames_dropped += 1;
            self.stats.bytes_dropped += wire_bytes as u64;
            return Enqueue::Dropped;
        }
        let start = now.max(self.last_departure);
        let departure = start + self.params.serialization(wire_bytes);
        self.last_departure = departure;
        self.backlog.push_back((departure, wire_bytes));
        self.queued_bytes += wire_bytes as u64;
        self.stats.frames_accepted += 1;
        self.stats.bytes_accepted += wire_bytes as u64;
        self.stats.max_queued_bytes = self.stats.max_queued_bytes.max(self.queued_bytes);
        Enqueue::Enqueued { departure }
    }
}
