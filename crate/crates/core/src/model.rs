//! Domain vocabulary shared by every layer of the simulator: virtual time,
//! packets, flow identities and queue/link configuration.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Default maximum transmission unit in bytes.
pub const DEFAULT_MTU: u32 = 1500;

/// Virtual simulation time (or a time delta), in integer nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    /// Converts fractional seconds, rounding half-up to the nanosecond.
    /// Negative and non-finite inputs are rejected.
    pub fn from_secs_f64(s: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time must be a finite non-negative number of seconds, got {s}"
            )));
        }
        Ok(SimTime((s * NANOS_PER_SEC as f64 + 0.5).floor() as u64))
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Fixed-point rendering with nanosecond precision, e.g. `12.000001200`.
    pub fn to_secs_string(self) -> String {
        format!("{}.{:09}", self.0 / NANOS_PER_SEC, self.0 % NANOS_PER_SEC)
    }

    /// Microseconds with three decimals, e.g. `1200.000`.
    pub fn to_micros_string(self) -> String {
        format!("{}.{:03}", self.0 / 1_000, self.0 % 1_000)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.to_secs_string())
    }
}

/// Time needed to push `size_bytes` through something running at
/// `bytes_per_sec`, rounded half-up to whole nanoseconds.
pub fn transmission_time(size_bytes: u32, bytes_per_sec: f64) -> Result<SimTime> {
    if size_bytes == 0 {
        return Err(Error::InvalidConfig("packet size must be at least 1 byte".into()));
    }
    check_rate(bytes_per_sec)?;
    let ns = size_bytes as f64 * NANOS_PER_SEC as f64 / bytes_per_sec;
    Ok(SimTime((ns + 0.5).floor() as u64))
}

/// Spacing between packets for a packet-per-second limiter; size independent.
pub fn packet_spacing(pkts_per_sec: f64) -> Result<SimTime> {
    check_rate(pkts_per_sec)?;
    Ok(SimTime((NANOS_PER_SEC as f64 / pkts_per_sec + 0.5).floor() as u64))
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("rate must be positive, got {rate}")))
    }
}

/// Index of a host or switch inside a [`crate::fabric::Topology`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Identity of a traffic flow; class 0 is the highest priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId {
    pub src: NodeId,
    pub dst: NodeId,
    pub priority: u8,
}

impl FlowId {
    pub fn new(src: NodeId, dst: NodeId, priority: u8) -> Self {
        FlowId { src, dst, priority }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Data,
    Ping,
    Pong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowId,
    pub size_bytes: u32,
    pub created_at: SimTime,
    /// Earliest dequeue instant; written by the egress scheduler on enqueue.
    pub departure: SimTime,
    pub kind: PacketKind,
    pub msg_id: Option<u64>,
}

/// Hands out packet ids, unique within one run.
#[derive(Debug, Default)]
pub struct PacketFactory {
    next_id: u64,
    mtu: u32,
}

impl PacketFactory {
    pub fn new(mtu: u32) -> Self {
        PacketFactory { next_id: 0, mtu }
    }

    pub fn mtu(&self) -> u32 {
        self.mtu
    }

    pub fn make(
        &mut self,
        flow: FlowId,
        size_bytes: u32,
        now: SimTime,
        kind: PacketKind,
        msg_id: Option<u64>,
    ) -> Result<Packet> {
        if size_bytes == 0 || size_bytes > self.mtu {
            return Err(Error::InvalidConfig(format!(
                "packet size {size_bytes} outside [1, {}]",
                self.mtu
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        Ok(Packet {
            id,
            flow,
            size_bytes,
            created_at: now,
            departure: now,
            kind,
            msg_id,
        })
    }

    pub fn issued(&self) -> u64 {
        self.next_id
    }
}

/// A per-queue rate limit. The unit is part of the value so a queue can never
/// carry both a byte rate and a packet rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateLimit {
    BytesPerSec(f64),
    /// Packet rate; every packet is spaced as if it were MTU-sized.
    PktsPerSec(f64),
}

impl RateLimit {
    /// Spacing that a packet of `size_bytes` claims under this limit.
    pub fn spacing(&self, size_bytes: u32) -> Result<SimTime> {
        match *self {
            RateLimit::BytesPerSec(r) => transmission_time(size_bytes, r),
            RateLimit::PktsPerSec(r) => packet_spacing(r),
        }
    }

    fn value(&self) -> f64 {
        match *self {
            RateLimit::BytesPerSec(r) | RateLimit::PktsPerSec(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    pub priority: u8,
    pub rate: Option<RateLimit>,
    /// DRR quantum. Unused by the high-priority queue and by strict priority.
    pub quantum_bytes: u32,
    pub capacity_pkts: usize,
}

impl QueueConfig {
    pub fn new(priority: u8, rate: Option<RateLimit>, quantum_bytes: u32, capacity_pkts: usize) -> Self {
        QueueConfig {
            priority,
            rate,
            quantum_bytes,
            capacity_pkts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(rate) = self.rate {
            check_rate(rate.value())?;
        }
        if self.quantum_bytes == 0 {
            return Err(Error::InvalidConfig(format!(
                "queue {}: quantum_bytes must be positive",
                self.priority
            )));
        }
        if self.capacity_pkts == 0 {
            return Err(Error::InvalidConfig(format!(
                "queue {}: capacity_pkts must be positive",
                self.priority
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub capacity_bytes_per_sec: f64,
    pub endpoints: (NodeId, NodeId),
}

impl LinkSpec {
    pub fn new(a: NodeId, b: NodeId, capacity_bytes_per_sec: f64) -> Result<Self> {
        check_rate(capacity_bytes_per_sec)?;
        Ok(LinkSpec {
            capacity_bytes_per_sec,
            endpoints: (a, b),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transmission_time_examples() {
        assert_eq!(
            transmission_time(1500, 750_000.0).unwrap(),
            SimTime::from_millis(2)
        );
        assert_eq!(transmission_time(1, 1_250_000.0).unwrap(), SimTime::from_nanos(800));
        assert!(transmission_time(0, 1_250_000.0).is_err());
        assert!(transmission_time(1500, 0.0).is_err());
        assert!(transmission_time(1500, -3.0).is_err());
    }

    #[test]
    fn rounds_half_up() {
        // 1 byte at 2e9 B/s is exactly half a nanosecond.
        assert_eq!(transmission_time(1, 2e9).unwrap(), SimTime::from_nanos(1));
        // 1 byte at 3e9 B/s is a third of a nanosecond.
        assert_eq!(transmission_time(1, 3e9).unwrap(), SimTime::ZERO);
    }

    #[test]
    fn pps_spacing_ignores_size() {
        let r = RateLimit::PktsPerSec(500.0);
        assert_eq!(r.spacing(64).unwrap(), SimTime::from_millis(2));
        assert_eq!(r.spacing(1500).unwrap(), SimTime::from_millis(2));
    }

    #[test]
    fn secs_rendering() {
        let t = SimTime::from_nanos(12_000_001_200);
        assert_eq!(t.to_secs_string(), "12.000001200");
        assert_eq!(SimTime::from_micros(1200).to_micros_string(), "1200.000");
        assert_eq!(SimTime::from_secs_f64(0.0012).unwrap(), SimTime::from_micros(1200));
        assert!(SimTime::from_secs_f64(-1.0).is_err());
    }

    #[test]
    fn packet_ids_are_unique_and_sizes_checked() {
        let mut f = PacketFactory::new(1500);
        let flow = FlowId::new(NodeId(0), NodeId(1), 0);
        let a = f.make(flow, 100, SimTime::ZERO, PacketKind::Data, None).unwrap();
        let b = f.make(flow, 1500, SimTime::ZERO, PacketKind::Data, None).unwrap();
        assert_ne!(a.id, b.id);
        assert!(f.make(flow, 1501, SimTime::ZERO, PacketKind::Data, None).is_err());
        assert!(f.make(flow, 0, SimTime::ZERO, PacketKind::Data, None).is_err());
    }

    proptest! {
        #[test]
        fn accumulation_matches_multiplication(size in 1u32..=1500, rate in 1_000.0f64..1e9, k in 1u64..5000) {
            let dt = transmission_time(size, rate).unwrap();
            let mut acc = SimTime::ZERO;
            for _ in 0..k {
                acc += dt;
            }
            prop_assert_eq!(acc.as_nanos(), dt.as_nanos() * k);
            // and stays within one nanosecond per addition of the exact value
            let exact = size as f64 * 1e9 / rate * k as f64;
            prop_assert!((acc.as_nanos() as f64 - exact).abs() <= k as f64 * 0.5 + 1e-6 * exact);
        }
    }
}
