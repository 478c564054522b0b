//! Per-packet delay records, delay-growth slopes and summary statistics.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::time::SimTime;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least 2 points with distinct abscissae to fit a slope, have {0}")]
    InsufficientData(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("record {line}: {msg}")]
    Parse { line: u64, msg: String },
}

/// One application packet delivered end to end.
///
/// `send_time` is when the application produced the packet; `recv_time` is
/// its in-order delivery at the receiver, so retransmissions and sender-side
/// queueing count toward the delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayRecord {
    pub flow_id: u32,
    pub seq: u32,
    pub send_time: SimTime,
    pub recv_time: SimTime,
    pub size_bytes: u32,
    pub decimation: u16,
}

impl DelayRecord {
    pub fn delay(&self) -> SimTime {
        self.recv_time.saturating_sub(self.send_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<SlopeEstimate, MetricsError> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData(n));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::InsufficientData(n));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(SlopeEstimate {
        slope,
        intercept,
        r_squared,
    })
}

/// Delay (seconds) regressed on packet sequence number.
pub fn fit_slope(records: &[DelayRecord]) -> Result<SlopeEstimate, MetricsError> {
    let xs: Vec<f64> = records.iter().map(|r| r.seq as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.delay().as_secs_f64()).collect();
    ols(&xs, &ys)
}

/// Delay (seconds) regressed on send time (seconds); dimensionless.
pub fn fit_time_slope(records: &[DelayRecord]) -> Result<SlopeEstimate, MetricsError> {
    let xs: Vec<f64> = records.iter().map(|r| r.send_time.as_secs_f64()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.delay().as_secs_f64()).collect();
    ols(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    /// Seconds.
    pub mean_delay: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub loss_fraction: f64,
    pub delivered_count: usize,
    pub sent_count: usize,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `lost` counts application packets that were sent but never delivered.
pub fn summarize(records: &[DelayRecord], lost: usize) -> Summary {
    let sent = records.len() + lost;
    let mut delays: Vec<f64> = records.iter().map(|r| r.delay().as_secs_f64()).collect();
    delays.sort_by(f64::total_cmp);
    let mean = if delays.is_empty() {
        0.0
    } else {
        delays.iter().sum::<f64>() / delays.len() as f64
    };
    Summary {
        mean_delay: mean,
        p50: nearest_rank(&delays, 50.0),
        p95: nearest_rank(&delays, 95.0),
        p99: nearest_rank(&delays, 99.0),
        loss_fraction: if sent == 0 {
            0.0
        } else {
            lost as f64 / sent as f64
        },
        delivered_count: records.len(),
        sent_count: sent,
    }
}

impl Summary {
    /// `key = value` lines, prefixed by `prefix.` when non-empty.
    pub fn render(&self, prefix: &str) -> String {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "{} = {:.9}", key("mean_delay_s"), self.mean_delay);
        let _ = writeln!(s, "{} = {:.9}", key("p50_s"), self.p50);
        let _ = writeln!(s, "{} = {:.9}", key("p95_s"), self.p95);
        let _ = writeln!(s, "{} = {:.9}", key("p99_s"), self.p99);
        let _ = writeln!(s, "{} = {:.9}", key("loss_fraction"), self.loss_fraction);
        let _ = writeln!(s, "{} = {}", key("delivered_count"), self.delivered_count);
        let _ = writeln!(s, "{} = {}", key("sent_count"), self.sent_count);
        s
    }
}

pub const RECORD_HEADER: [&str; 7] = [
    "flow_id",
    "seq",
    "send_us",
    "recv_us",
    "delay_us",
    "size_bytes",
    "decimation",
];

pub fn write_records_csv<W: Write>(records: &[DelayRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.flow_id.to_string(),
            r.seq.to_string(),
            r.send_time.to_string(),
            r.recv_time.to_string(),
            r.delay().to_string(),
            r.size_bytes.to_string(),
            r.decimation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<DelayRecord>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(MetricsError::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| MetricsError::Parse { line, msg };
        let field = |i: usize| row.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        let num = |i: usize| -> Result<u64, MetricsError> {
            field(i)?
                .parse()
                .map_err(|e| bad(format!("{}: {e}", RECORD_HEADER[i])))
        };
        let time = |i: usize| -> Result<SimTime, MetricsError> {
            field(i)?.parse().map_err(|e| bad(format!("{e}")))
        };
        let rec = DelayRecord {
            flow_id: num(0)? as u32,
            seq: num(1)? as u32,
            send_time: time(2)?,
            recv_time: time(3)?,
            size_bytes: num(5)? as u32,
            decimation: num(6)? as u16,
        };
        if rec.delay() != time(4)? {
            return Err(bad("delay_us disagrees with recv_us - send_us".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn export_csv(records: &[DelayRecord], path: &Path) -> Result<(), MetricsError> {
    let io_err = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_records_csv(records, BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => MetricsError::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    })
}

pub fn import_csv(path: &Path) -> Result<Vec<DelayRecord>, MetricsError> {
    let file = File::open(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records_csv(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(seq: u32, send_ms: u64, delay_ms: u64) -> DelayRecord {
        DelayRecord {
            flow_id: 1,
            seq,
            send_time: SimTime::from_millis(send_ms),
            recv_time: SimTime::from_millis(send_ms + delay_ms),
            size_bytes: 1136,
            decimation: 1,
        }
    }

    #[test]
    fn exact_line() {
        let r: Vec<_> = (0..3).map(|i| rec(i, 10 * i as u64, i as u64)).collect();
        let s = fit_slope(&r).unwrap();
        assert!((s.slope - 1e-3).abs() < 1e-15);
        assert!(s.intercept.abs() < 1e-15);
        assert!((s.r_squared - 1.0).abs() < 1e-12);
        // 1 ms of delay per 10 ms of send time
        assert!((fit_time_slope(&r).unwrap().slope - 0.1).abs() < 1e-12);
    }

    #[test]
    fn flat_series() {
        let r: Vec<_> = (0..5).map(|i| rec(i, 10 * i as u64, 5)).collect();
        let s = fit_slope(&r).unwrap();
        assert_eq!(s.slope, 0.0);
        assert!((s.intercept - 5e-3).abs() < 1e-15);
        assert_eq!(s.r_squared, 1.0);
    }

    #[test]
    fn hand_computed_ols() {
        // x̄ = ȳ = 1.5, Sxy = 4, Sxx = Syy = 5 -> slope 0.8, r² = 0.64
        let r: Vec<_> = [0, 2, 1, 3]
            .iter()
            .enumerate()
            .map(|(i, &d)| rec(i as u32, 10 * i as u64, d))
            .collect();
        let s = fit_slope(&r).unwrap();
        assert!((s.slope - 0.8e-3).abs() < 1e-15, "{}", s.slope);
        assert!((s.intercept - 0.3e-3).abs() < 1e-15);
        assert!((s.r_squared - 0.64).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            fit_slope(&[rec(0, 0, 1)]),
            Err(MetricsError::InsufficientData(1))
        ));
        assert!(fit_slope(&[]).is_err());
        assert!(fit_slope(&[rec(3, 0, 1), rec(3, 5, 2)]).is_err());
    }

    #[test]
    fn summary_examples() {
        let r: Vec<_> = (0..100).map(|i| rec(i, i as u64, 5)).collect();
        let s = summarize(&r, 0);
        assert_eq!(s.loss_fraction, 0.0);
        assert_eq!(s.delivered_count, 100);
        assert!((s.mean_delay - 5e-3).abs() < 1e-15);
        assert_eq!(s.p50, 5e-3);
        assert_eq!(s.p99, 5e-3);

        let r: Vec<_> = (1..=100).map(|i| rec(i, 0, i as u64)).collect();
        let s = summarize(&r, 25);
        assert_eq!(s.p95, 95e-3);
        assert_eq!(s.p50, 50e-3);
        assert_eq!(s.p99, 99e-3);
        assert_eq!(s.sent_count, 125);
        assert!((s.loss_fraction - 0.2).abs() < 1e-15);

        let empty = summarize(&[], 0);
        assert_eq!(empty.delivered_count, 0);
        assert_eq!(empty.mean_delay, 0.0);
        assert_eq!(empty.loss_fraction, 0.0);
    }

    #[test]
    fn summary_render() {
        let s = summarize(&[rec(0, 0, 2)], 0);
        let text = s.render("h1");
        assert!(text.contains("h1.mean_delay_s = 0.002000000\n"));
        assert!(text.contains("h1.loss_fraction = 0.000000000\n"));
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_records_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "flow_id,seq,send_us,recv_us,delay_us,size_bytes,decimation\n"
        );
        let r: Vec<_> = (0..3).map(|i| rec(i, i as u64, 1)).collect();
        let mut buf = Vec::new();
        write_records_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(2).unwrap(), "1,1,1000.000,2000.000,1000.000,1136,1");
    }

    #[test]
    fn export_reports_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("x.csv");
        let err = export_csv(&[], &path).unwrap_err();
        assert!(err.to_string().contains("missing"));
        let path = dir.path().join("ok.csv");
        let r = vec![rec(0, 1, 2)];
        export_csv(&r, &path).unwrap();
        assert_eq!(import_csv(&path).unwrap(), r);
    }

    #[test]
    fn import_rejects_inconsistent_delay() {
        let text = "flow_id,seq,send_us,recv_us,delay_us,size_bytes,decimation\n1,0,1.000,3.000,1.000,10,1\n";
        assert!(matches!(
            read_records_csv(text.as_bytes()),
            Err(MetricsError::Parse { .. })
        ));
    }

    fn arb_records() -> impl Strategy<Value = Vec<DelayRecord>> {
        prop::collection::vec(
            (any::<u32>(), any::<u32>(), 0u64..1 << 50, 0u64..1 << 40, any::<u32>(), any::<u16>()),
            0..50,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(flow_id, seq, send, d, size_bytes, decimation)| DelayRecord {
                    flow_id,
                    seq,
                    send_time: SimTime(send),
                    recv_time: SimTime(send + d),
                    size_bytes,
                    decimation,
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn csv_round_trip(r in arb_records()) {
            let mut buf = Vec::new();
            write_records_csv(&r, &mut buf).unwrap();
            prop_assert_eq!(read_records_csv(buf.as_slice()).unwrap(), r);
        }
    }

    proptest! {
        #[test]
        fn slope_shift_and_scale(
            ys in prop::collection::vec(0.0f64..1.0, 3..60),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let base = ols(&xs, &ys).unwrap();
            let shifted: Vec<f64> = ys.iter().map(|y| y + shift).collect();
            let s = ols(&xs, &shifted).unwrap();
            prop_assert!((s.slope - base.slope).abs() < 1e-9);
            prop_assert!((s.intercept - base.intercept - shift).abs() < 1e-9);
            let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
            let s = ols(&xs, &scaled).unwrap();
            prop_assert!((s.slope - scale * base.slope).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&base.r_squared));
        }

        #[test]
        fn percentiles_ordered(delays in prop::collection::vec(0u64..1_000_000, 0..200)) {
            let r: Vec<_> = delays.iter().enumerate().map(|(i, &d)| DelayRecord {
                flow_id: 0, seq: i as u32, send_time: SimTime(0), recv_time: SimTime(d),
                size_bytes: 0, decimation: 1,
            }).collect();
            let s = summarize(&r, 0);
            prop_assert!(s.p50 <= s.p95 && s.p95 <= s.p99);
        }
    }
}
