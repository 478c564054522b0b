//! Per-event CSV trace.

use std::fmt;
use std::io::{self, BufWriter, Write};

use crate::time::SimTime;

pub const TRACE_HEADER: &str = "time_us,event_kind,flow_id,seq,node,detail";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    AppSend,
    CrossTrafficSend,
    PacketArrival,
    Departure,
    AckArrival,
    TimerFire,
    Enqueue,
    Drop,
    Deliver,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub struct TraceWriter<'w> {
    out: Option<BufWriter<&'w mut dyn Write>>,
}

impl<'w> TraceWriter<'w> {
    pub fn new(out: Option<&'w mut dyn Write>) -> io::Result<Self> {
        let mut out = out.map(BufWriter::new);
        if let Some(w) = out.as_mut() {
            writeln!(w, "{TRACE_HEADER}")?;
        }
        Ok(Self { out })
    }

    pub fn row(
        &mut self,
        time: SimTime,
        kind: EventKind,
        flow: &str,
        seq: u64,
        node: &str,
        detail: fmt::Arguments<'_>,
    ) -> io::Result<()> {
        match self.out.as_mut() {
            Some(w) => writeln!(w, "{time},{kind},{flow},{seq},{node},{detail}"),
            None => Ok(()),
        }
    }

    pub fn finish(&mut self) -> io::Result<()> {
        match self.out.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }
}
