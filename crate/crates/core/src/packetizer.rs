//! Binary meter packet format.
//!
//! All integers are big-endian. A packet is a 16-byte header followed by
//! `sample_count` 14-byte sample records:
//!
//! | offset | size | field                      |
//! |-------:|-----:|----------------------------|
//! | 0      | 4    | seq (u32)                  |
//! | 4      | 2    | meter_id (u16)             |
//! | 6      | 4    | send_interval, µs (u32)    |
//! | 10     | 2    | sample_count (u16)         |
//! | 12     | 2    | decimation factor (u16)    |
//! | 14     | 2    | reserved, must be zero     |
//!
//! Sample record: t_offset µs (u32), voltage mV (i32), current mA (i32),
//! meter/phase id (u16).

use serde::{Deserialize, Serialize};

use crate::waveform::{ResolutionLevel, Sample};

pub const HEADER_LEN: usize = 16;
pub const SAMPLE_LEN: usize = 14;
pub const MIN_MTU: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PacketError {
    #[error("{0} samples exceed the 65535 per-packet limit")]
    TooManySamples(usize),
    #[error("truncated packet: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("payload of {0} bytes is not a whole number of 14-byte samples")]
    Misaligned(usize),
    #[error("reserved header bits are set ({0:#06x})")]
    Reserved(u16),
    #[error("invalid decimation factor {0} in header")]
    Decimation(u16),
    #[error("mtu {0} is below the 64-byte minimum")]
    Mtu(usize),
    #[error("fragment set is inconsistent: {0}")]
    Fragments(String),
    #[error("invalid send schedule: {0}")]
    Schedule(String),
}

/// How often a meter flushes its accumulated samples, and at what resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SendSchedule {
    /// Seconds between packets.
    pub logging_interval: f64,
    pub resolution: ResolutionLevel,
}

impl SendSchedule {
    pub fn new(logging_interval: f64, resolution: ResolutionLevel) -> Self {
        Self {
            logging_interval,
            resolution,
        }
    }

    /// Checks the interval is positive and a whole multiple of the effective
    /// sampling period.
    pub fn validate(&self, base_period: f64) -> Result<(), PacketError> {
        if !(self.logging_interval.is_finite() && self.logging_interval > 0.0) {
            return Err(PacketError::Schedule("logging_interval must be positive".into()));
        }
        let eff = self.resolution.effective_period(base_period);
        let ratio = self.logging_interval / eff;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(PacketError::Schedule(format!(
                "logging_interval {} s is not a multiple of the effective period {} s",
                self.logging_interval, eff
            )));
        }
        Ok(())
    }

    /// Full-resolution samples accumulated per interval.
    pub fn raw_samples(&self, base_period: f64) -> usize {
        (self.logging_interval / base_period + 1e-9).floor() as usize
    }

    /// Samples carried per packet after decimation.
    pub fn samples_per_packet(&self, base_period: f64) -> usize {
        self.raw_samples(base_period)
            .div_ceil(self.resolution.decimation() as usize)
    }

    pub fn packet_len(&self, base_period: f64) -> usize {
        packet_len(self.samples_per_packet(base_period))
    }

    /// Application bit rate of the encoded packets, header included.
    pub fn bit_rate(&self, base_period: f64) -> f64 {
        self.packet_len(base_period) as f64 * 8.0 / self.logging_interval
    }

    pub fn interval_micros(&self) -> u32 {
        (self.logging_interval * 1e6).round() as u32
    }
}

/// Encoded size of a packet carrying `samples` records.
pub const fn packet_len(samples: usize) -> usize {
    HEADER_LEN + SAMPLE_LEN * samples
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeterPacket {
    pub seq: u32,
    pub meter_id: u16,
    pub send_interval_us: u32,
    pub decimation: ResolutionLevel,
    pub samples: Vec<Sample>,
}

impl MeterPacket {
    pub fn encode(&self) -> Result<Vec<u8>, PacketError> {
        let count = u16::try_from(self.samples.len())
            .map_err(|_| PacketError::TooManySamples(self.samples.len()))?;
        let mut out = Vec::with_capacity(packet_len(self.samples.len()));
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.meter_id.to_be_bytes());
        out.extend_from_slice(&self.send_interval_us.to_be_bytes());
        out.extend_from_slice(&count.to_be_bytes());
        out.extend_from_slice(&(self.decimation.decimation() as u16).to_be_bytes());
        out.extend_from_slice(&0u16.to_be_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.t_offset.to_be_bytes());
            out.extend_from_slice(&s.voltage.to_be_bytes());
            out.extend_from_slice(&s.current.to_be_bytes());
            out.extend_from_slice(&s.meter_id.to_be_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() < HEADER_LEN {
            return Err(PacketError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());

        let payload = bytes.len() - HEADER_LEN;
        if !payload.is_multiple_of(SAMPLE_LEN) {
            return Err(PacketError::Misaligned(payload));
        }
        let reserved = u16_at(14);
        if reserved != 0 {
            return Err(PacketError::Reserved(reserved));
        }
        let raw_dec = u16_at(12);
        let decimation =
            ResolutionLevel::new(raw_dec as u32).map_err(|_| PacketError::Decimation(raw_dec))?;
        let count = u16_at(10) as usize;
        let expected = packet_len(count);
        if bytes.len() != expected {
            return Err(PacketError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }

        let samples = bytes[HEADER_LEN..]
            .chunks_exact(SAMPLE_LEN)
            .map(|c| Sample {
                t_offset: u32::from_be_bytes(c[0..4].try_into().unwrap()),
                voltage: i32::from_be_bytes(c[4..8].try_into().unwrap()),
                current: i32::from_be_bytes(c[8..12].try_into().unwrap()),
                meter_id: u16::from_be_bytes([c[12], c[13]]),
            })
            .collect();
        Ok(MeterPacket {
            seq: u32_at(0),
            meter_id: u16_at(4),
            send_interval_us: u32_at(6),
            decimation,
            samples,
        })
    }
}

/// Encodes one logging interval's samples. An empty sample set yields a
/// header-only heartbeat packet.
pub fn encode(
    samples: &[Sample],
    seq: u32,
    meter_id: u16,
    schedule: &SendSchedule,
) -> Result<Vec<u8>, PacketError> {
    MeterPacket {
        seq,
        meter_id,
        send_interval_us: schedule.interval_micros(),
        decimation: schedule.resolution,
        samples: samples.to_vec(),
    }
    .encode()
}

pub fn decode(bytes: &[u8]) -> Result<MeterPacket, PacketError> {
    MeterPacket::decode(bytes)
}

/// One piece of a packet no larger than the MTU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u16,
    pub total: u16,
    pub payload: Vec<u8>,
}

/// Payload sizes of the frames `fragment` would produce.
pub fn fragment_sizes(len: usize, mtu: usize) -> Vec<usize> {
    if len == 0 {
        return vec![0];
    }
    let n = len.div_ceil(mtu);
    (0..n).map(|i| mtu.min(len - i * mtu)).collect()
}

pub fn fragment(packet: &[u8], mtu: usize) -> Result<Vec<Frame>, PacketError> {
    if mtu < MIN_MTU {
        return Err(PacketError::Mtu(mtu));
    }
    let sizes = fragment_sizes(packet.len(), mtu);
    let total = u16::try_from(sizes.len())
        .map_err(|_| PacketError::Fragments(format!("{} fragments", sizes.len())))?;
    let mut offset = 0;
    Ok(sizes
        .into_iter()
        .enumerate()
        .map(|(i, size)| {
            let payload = packet[offset..offset + size].to_vec();
            offset += size;
            Frame {
                index: i as u16,
                total,
                payload,
            }
        })
        .collect())
}

/// Inverse of [`fragment`]; frames may arrive in any order.
pub fn reassemble(frames: &[Frame]) -> Result<Vec<u8>, PacketError> {
    let first = frames
        .first()
        .ok_or_else(|| PacketError::Fragments("no frames".into()))?;
    let total = first.total as usize;
    if frames.len() != total {
        return Err(PacketError::Fragments(format!(
            "have {} of {} frames",
            frames.len(),
            total
        )));
    }
    let mut slots: Vec<Option<&Frame>> = vec![None; total];
    for f in frames {
        if f.total as usize != total || f.index as usize >= total {
            return Err(PacketError::Fragments(format!(
                "frame {}/{} does not belong to a {total}-frame packet",
                f.index, f.total
            )));
        }
        if slots[f.index as usize].replace(f).is_some() {
            return Err(PacketError::Fragments(format!("duplicate frame {}", f.index)));
        }
    }
    Ok(slots
        .into_iter()
        .flat_map(|f| f.unwrap().payload.iter().copied())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{generate, WaveformConfig};
    use proptest::prelude::*;

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                t_offset: i as u32 * 125,
                voltage: i as i32 * 1000 - 5000,
                current: -(i as i32),
                meter_id: 5,
            })
            .collect()
    }

    fn schedule(interval: f64) -> SendSchedule {
        SendSchedule::new(interval, ResolutionLevel::FULL)
    }

    #[test]
    fn standard_operating_points() {
        let p80 = encode(&samples(80), 0, 1, &schedule(0.01)).unwrap();
        assert_eq!(p80.len() - HEADER_LEN, 1120);
        let p800 = encode(&samples(800), 0, 1, &schedule(0.1)).unwrap();
        assert_eq!(p800.len() - HEADER_LEN, 11_200);
        assert_eq!(p800.len(), 11_216);
        assert_eq!(schedule(0.01).samples_per_packet(125e-6), 80);
        assert_eq!(schedule(0.1).samples_per_packet(125e-6), 800);
    }

    #[test]
    fn heartbeat_packet() {
        let p = encode(&[], 9, 1, &schedule(0.01)).unwrap();
        assert_eq!(p.len(), 16);
        let d = decode(&p).unwrap();
        assert_eq!(d.seq, 9);
        assert!(d.samples.is_empty());
    }

    #[test]
    fn header_layout_is_big_endian() {
        let s = SendSchedule::new(0.1, ResolutionLevel::new(8).unwrap());
        let p = encode(&samples(1), 0x01020304, 0x0506, &s).unwrap();
        assert_eq!(
            &p[..16],
            &[1, 2, 3, 4, 5, 6, 0, 1, 0x86, 0xa0, 0, 1, 0, 8, 0, 0]
        );
        // voltage -5000 mV
        assert_eq!(&p[20..24], &(-5000i32).to_be_bytes());
    }

    #[test]
    fn decode_errors() {
        let good = encode(&samples(3), 1, 1, &schedule(0.01)).unwrap();
        assert!(matches!(
            decode(&good[..15]),
            Err(PacketError::Truncated { .. })
        ));
        assert!(matches!(
            decode(&good[..good.len() - 1]),
            Err(PacketError::Misaligned(_))
        ));
        assert!(matches!(
            decode(&good[..good.len() - 14]),
            Err(PacketError::Truncated { .. })
        ));
        let mut bad = good.clone();
        bad[15] = 1;
        assert!(matches!(decode(&bad), Err(PacketError::Reserved(1))));
        let mut bad = good.clone();
        bad[13] = 3;
        assert!(matches!(decode(&bad), Err(PacketError::Decimation(3))));
    }

    #[test]
    fn too_many_samples() {
        assert!(matches!(
            encode(&samples(65_536), 0, 0, &schedule(1.0)),
            Err(PacketError::TooManySamples(65_536))
        ));
    }

    #[test]
    fn fragment_examples() {
        assert_eq!(fragment(&vec![0; 1136], 2000).unwrap().len(), 1);
        assert_eq!(fragment(&vec![0; 11_216], 1500).unwrap().len(), 8);
        assert_eq!(fragment(&vec![0; 11_216], 11_216).unwrap().len(), 1);
        assert_eq!(fragment(&vec![0; 11_216], 65_535).unwrap().len(), 1);
        assert!(matches!(fragment(&[0; 10], 63), Err(PacketError::Mtu(63))));
    }

    #[test]
    fn reassemble_rejects_incomplete_sets() {
        let frames = fragment(&[7u8; 300], 64).unwrap();
        assert!(reassemble(&frames[1..]).is_err());
        let mut dup = frames.clone();
        dup[1] = dup[0].clone();
        assert!(reassemble(&dup).is_err());
        assert!(reassemble(&[]).is_err());
    }

    #[test]
    fn schedule_validation() {
        let base = 125e-6;
        assert!(schedule(0.01).validate(base).is_ok());
        assert!(SendSchedule::new(0.1, ResolutionLevel::new(8).unwrap())
            .validate(base)
            .is_ok());
        assert!(schedule(0.0).validate(base).is_err());
        assert!(schedule(0.0001).validate(base).is_err());
        assert!(schedule(0.0101).validate(base).is_err());
    }

    #[test]
    fn both_full_resolution_schedules_carry_the_same_byte_rate() {
        let base = 125e-6;
        let fast = schedule(0.01);
        let slow = schedule(0.1);
        let payload_rate = |s: &SendSchedule| {
            (SAMPLE_LEN * s.samples_per_packet(base)) as f64 / s.logging_interval
        };
        assert_eq!(payload_rate(&fast), payload_rate(&slow));
        assert_eq!(payload_rate(&fast), 112_000.0);
        // header overhead differs by one header per packet
        let diff = fast.bit_rate(base) / 8.0 - slow.bit_rate(base) / 8.0;
        assert!(diff >= 0.0 && diff <= fast.packet_len(base) as f64 / fast.logging_interval);
    }

    #[test]
    fn generated_waveform_round_trips() {
        let w = generate(&WaveformConfig::default(), 0.01).unwrap();
        let p = encode(w.channel(0), 3, 4, &schedule(0.01)).unwrap();
        assert_eq!(decode(&p).unwrap().samples, w.channel(0));
    }

    fn arb_packet() -> impl Strategy<Value = MeterPacket> {
        (
            any::<u32>(),
            any::<u16>(),
            any::<u32>(),
            0u32..6,
            prop::collection::vec(any::<(u32, i32, i32, u16)>(), 0..200),
        )
            .prop_map(|(seq, meter_id, iv, d, s)| MeterPacket {
                seq,
                meter_id,
                send_interval_us: iv,
                decimation: ResolutionLevel::new(1 << d).unwrap(),
                samples: s
                    .into_iter()
                    .map(|(t_offset, voltage, current, meter_id)| Sample {
                        t_offset,
                        voltage,
                        current,
                        meter_id,
                    })
                    .collect(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_decode_round_trip(p in arb_packet()) {
            let bytes = p.encode().unwrap();
            prop_assert_eq!(bytes.len(), packet_len(p.samples.len()));
            prop_assert_eq!(MeterPacket::decode(&bytes).unwrap(), p);
        }

        #[test]
        fn fragment_reassemble_round_trip(
            data in prop::collection::vec(any::<u8>(), 0..5000),
            mtu in 64usize..3000,
            rotate in 0usize..16,
        ) {
            let mut frames = fragment(&data, mtu).unwrap();
            prop_assert_eq!(frames.len(), data.len().div_ceil(mtu).max(1));
            prop_assert!(frames.iter().all(|f| f.payload.len() <= mtu));
            let k = rotate % frames.len();
            frames.rotate_left(k);
            prop_assert_eq!(reassemble(&frames).unwrap(), data);
        }

        #[test]
        fn packet_len_monotone(n in 0usize..60_000) {
            prop_assert!(packet_len(n + 1) > packet_len(n));
            prop_assert_eq!(packet_len(n), 16 + 14 * n);
        }
    }
}
