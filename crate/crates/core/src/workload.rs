//! Traffic sources: constant-bit-rate flows and the serial ping-pong
//! latency probe. Both are passive state machines; the scenario runner owns
//! the engine and turns their answers into events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{transmission_time, FlowId, NodeId, Packet, PacketKind, SimTime};
use crate::sim::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CbrFlowSpec {
    pub flow: FlowId,
    pub rate_bytes_per_sec: f64,
    pub packet_size_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
    /// Per-packet displacement as a fraction of the spacing, in `[0, 1]`.
    pub jitter: f64,
    /// Shift the whole grid by a uniform fraction of one spacing.
    pub start_jitter: bool,
}

impl CbrFlowSpec {
    pub fn new(flow: FlowId, rate_bytes_per_sec: f64, packet_size_bytes: u32, start: SimTime, stop: SimTime) -> Self {
        CbrFlowSpec {
            flow,
            rate_bytes_per_sec,
            packet_size_bytes,
            start,
            stop,
            jitter: 0.0,
            start_jitter: false,
        }
    }

    pub fn validate(&self, mtu: u32) -> Result<()> {
        if !(self.rate_bytes_per_sec.is_finite() && self.rate_bytes_per_sec > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "flow rate must be positive, got {}",
                self.rate_bytes_per_sec
            )));
        }
        if self.packet_size_bytes == 0 || self.packet_size_bytes > mtu {
            return Err(Error::InvalidConfig(format!(
                "packet size {} outside 1..={mtu}",
                self.packet_size_bytes
            )));
        }
        if self.stop < self.start {
            return Err(Error::InvalidConfig("flow stops before it starts".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::InvalidConfig(format!("jitter {} outside [0, 1]", self.jitter)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> Result<SimTime> {
        transmission_time(self.packet_size_bytes, self.rate_bytes_per_sec)
    }
}

/// Emission schedule of one CBR flow. Packet `n` leaves at
/// `start + offset + n·spacing + u_n·jitter·spacing`; emissions at or past
/// `stop` are suppressed. The jitter term stays below one spacing, so
/// emission times never decrease.
#[derive(Debug, Clone)]
pub struct CbrSource {
    spec: CbrFlowSpec,
    spacing: u64,
    offset: u64,
    next_index: u64,
}

impl CbrSource {
    pub fn new(spec: CbrFlowSpec, mtu: u32, rng: &mut Rng) -> Result<Self> {
        spec.validate(mtu)?;
        let spacing = spec.spacing()?.as_nanos();
        if spacing == 0 {
            return Err(Error::InvalidConfig("flow rate too high for nanosecond spacing".into()));
        }
        let offset = if spec.start_jitter {
            (rng.uniform() * spacing as f64) as u64
        } else {
            0
        };
        Ok(CbrSource {
            spec,
            spacing,
            offset,
            next_index: 0,
        })
    }

    pub fn spec(&self) -> &CbrFlowSpec {
        &self.spec
    }

    pub fn emitted(&self) -> u64 {
        self.next_index
    }

    /// Time of the next packet, or `None` once the flow has stopped.
    pub fn next_emission(&mut self, rng: &mut Rng) -> Option<SimTime> {
        let base = self
            .spec
            .start
            .as_nanos()
            .checked_add(self.offset)?
            .checked_add(self.next_index.checked_mul(self.spacing)?)?;
        if base >= self.spec.stop.as_nanos() {
            return None;
        }
        let shift = if self.spec.jitter > 0.0 {
            ((rng.uniform() * self.spec.jitter * self.spacing as f64) as u64).min(self.spacing - 1)
        } else {
            0
        };
        let t = base + shift;
        if t >= self.spec.stop.as_nanos() {
            return None;
        }
        self.next_index += 1;
        Some(SimTime::from_nanos(t))
    }
}

/// Splits a message into MTU-sized segments, the last one carrying the remainder.
pub fn segment_sizes(message_bytes: u32, mtu: u32) -> Result<Vec<u32>> {
    if message_bytes == 0 || mtu == 0 {
        return Err(Error::InvalidConfig("message and MTU sizes must be positive".into()));
    }
    let full = message_bytes / mtu;
    let mut out = vec![mtu; full as usize];
    if !message_bytes.is_multiple_of(mtu) {
        out.push(message_bytes % mtu);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PingPongSpec {
    pub client: NodeId,
    pub server: NodeId,
    pub message_sizes_bytes: Vec<u32>,
    pub iterations_per_size: u32,
    pub priority: u8,
    pub start: SimTime,
    pub timeout: SimTime,
}

impl PingPongSpec {
    pub fn default_message_sizes() -> Vec<u32> {
        (6..=14).map(|e| 1u32 << e).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.client == self.server {
            errs.push("ping-pong endpoints must differ".to_string());
        }
        if self.message_sizes_bytes.is_empty() {
            errs.push("ping-pong needs at least one message size".to_string());
        }
        if self.message_sizes_bytes.contains(&0) {
            errs.push("ping-pong message sizes must be positive".to_string());
        }
        if self.iterations_per_size == 0 {
            errs.push("iterations_per_size must be at least 1".to_string());
        }
        if self.timeout == SimTime::ZERO {
            errs.push("ping-pong timeout must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub message_size: u32,
    pub iteration: u32,
    pub rtt: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedOut {
    pub message_size: u32,
    pub iteration: u32,
}

/// A message the runner must inject, one packet per entry of `segments`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_id: u64,
    pub flow: FlowId,
    pub kind: PacketKind,
    pub segments: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PingPongAction {
    /// Nothing to do; the segment was partial or stale.
    None,
    /// The request arrived in full; send this reply now.
    Reply(Message),
    /// The reply arrived in full and a sample was recorded.
    Completed(LatencySample),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Outstanding {
    msg_id: u64,
    size: u32,
    iteration: u32,
    sent_at: SimTime,
    request_segments: u32,
    reply_segments: u32,
    expected: u32,
}

/// Serial request/reply probe: at most one message is outstanding.
#[derive(Debug, Clone)]
pub struct PingPong {
    spec: PingPongSpec,
    mtu: u32,
    size_idx: usize,
    iteration: u32,
    next_msg_id: u64,
    current: Option<Outstanding>,
    samples: Vec<LatencySample>,
    timeouts: Vec<TimedOut>,
}

impl PingPong {
    pub fn new(spec: PingPongSpec, mtu: u32) -> Result<Self> {
        spec.validate()?;
        Ok(PingPong {
            spec,
            mtu,
            size_idx: 0,
            iteration: 0,
            next_msg_id: 1,
            current: None,
            samples: Vec::new(),
            timeouts: Vec::new(),
        })
    }

    pub fn spec(&self) -> &PingPongSpec {
        &self.spec
    }

    pub fn request_flow(&self) -> FlowId {
        FlowId::new(self.spec.client, self.spec.server, self.spec.priority)
    }

    pub fn reply_flow(&self) -> FlowId {
        FlowId::new(self.spec.server, self.spec.client, self.spec.priority)
    }

    pub fn is_done(&self) -> bool {
        self.current.is_none() && self.size_idx >= self.spec.message_sizes_bytes.len()
    }

    pub fn outstanding(&self) -> Option<u64> {
        self.current.map(|c| c.msg_id)
    }

    pub fn samples(&self) -> &[LatencySample] {
        &self.samples
    }

    pub fn timeouts(&self) -> &[TimedOut] {
        &self.timeouts
    }

    /// Starts the next iteration. Returns `None` when the sweep is finished
    /// or a message is still outstanding.
    pub fn start_next(&mut self, now: SimTime) -> Result<Option<Message>> {
        if self.current.is_some() {
            return Ok(None);
        }
        let Some(&size) = self.spec.message_sizes_bytes.get(self.size_idx) else {
            return Ok(None);
        };
        let segments = segment_sizes(size, self.mtu)?;
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;
        self.current = Some(Outstanding {
            msg_id,
            size,
            iteration: self.iteration,
            sent_at: now,
            request_segments: 0,
            reply_segments: 0,
            expected: segments.len() as u32,
        });
        self.iteration += 1;
        if self.iteration == self.spec.iterations_per_size {
            self.iteration = 0;
            self.size_idx += 1;
        }
        Ok(Some(Message {
            msg_id,
            flow: self.request_flow(),
            kind: PacketKind::Ping,
            segments,
        }))
    }

    /// Feeds a delivered ping or pong segment.
    pub fn on_segment(&mut self, p: &Packet, now: SimTime) -> Result<PingPongAction> {
        let Some(cur) = self.current.as_mut() else {
            return Ok(PingPongAction::None);
        };
        if p.msg_id != Some(cur.msg_id) {
            return Ok(PingPongAction::None);
        }
        match p.kind {
            PacketKind::Ping => {
                cur.request_segments += 1;
                if cur.request_segments == cur.expected {
                    let segments = segment_sizes(cur.size, self.mtu)?;
                    return Ok(PingPongAction::Reply(Message {
                        msg_id: cur.msg_id,
                        flow: self.reply_flow(),
                        kind: PacketKind::Pong,
                        segments,
                    }));
                }
                Ok(PingPongAction::None)
            }
            PacketKind::Pong => {
                cur.reply_segments += 1;
                if cur.reply_segments < cur.expected {
                    return Ok(PingPongAction::None);
                }
                let rtt = now.saturating_sub(cur.sent_at);
                if rtt == SimTime::ZERO {
                    return Err(Error::Invariant("ping-pong round trip took no time".into()));
                }
                let sample = LatencySample {
                    message_size: cur.size,
                    iteration: cur.iteration,
                    rtt,
                };
                self.samples.push(sample);
                self.current = None;
                Ok(PingPongAction::Completed(sample))
            }
            PacketKind::Data => Ok(PingPongAction::None),
        }
    }

    /// Abandons `msg_id` if it is still outstanding. Returns whether it was.
    pub fn on_timeout(&mut self, msg_id: u64) -> bool {
        match self.current {
            Some(cur) if cur.msg_id == msg_id => {
                self.timeouts.push(TimedOut {
                    message_size: cur.size,
                    iteration: cur.iteration,
                });
                self.current = None;
                true
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PacketFactory;
    use crate::sim::Rng;
    use proptest::prelude::*;

    fn flow() -> FlowId {
        FlowId::new(NodeId(0), NodeId(1), 1)
    }

    fn drain(src: &mut CbrSource, rng: &mut Rng) -> Vec<SimTime> {
        std::iter::from_fn(|| src.next_emission(rng)).collect()
    }

    #[test]
    fn six_millisecond_flow_emits_five_packets() {
        let start = SimTime::from_secs(3);
        let spec = CbrFlowSpec::new(flow(), 1_250_000.0, 1500, start, start + SimTime::from_micros(6000));
        let mut rng = Rng::new(1);
        let mut src = CbrSource::new(spec, 1500, &mut rng).unwrap();
        let got = drain(&mut src, &mut rng);
        let expect: Vec<SimTime> = [0, 1200, 2400, 3600, 4800]
            .iter()
            .map(|&us| start + SimTime::from_micros(us))
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn empty_interval_emits_nothing() {
        let t = SimTime::from_secs(1);
        let spec = CbrFlowSpec::new(flow(), 1_250_000.0, 1500, t, t);
        let mut rng = Rng::new(1);
        let mut src = CbrSource::new(spec, 1500, &mut rng).unwrap();
        assert_eq!(src.next_emission(&mut rng), None);
    }

    #[test]
    fn rejects_bad_flows() {
        let mut spec = CbrFlowSpec::new(flow(), 0.0, 1500, SimTime::ZERO, SimTime::from_secs(1));
        assert!(spec.validate(1500).is_err());
        spec.rate_bytes_per_sec = 1.0;
        spec.packet_size_bytes = 1501;
        assert!(spec.validate(1500).is_err());
        spec.packet_size_bytes = 100;
        spec.jitter = 1.5;
        assert!(spec.validate(1500).is_err());
    }

    #[test]
    fn segmentation() {
        assert_eq!(segment_sizes(16384, 1500).unwrap().len(), 11);
        let s = segment_sizes(16384, 1500).unwrap();
        assert_eq!(s[..10], [1500; 10]);
        assert_eq!(s[10], 1384);
        assert_eq!(segment_sizes(64, 1500).unwrap(), vec![64]);
        assert_eq!(segment_sizes(3000, 1500).unwrap(), vec![1500, 1500]);
        assert!(segment_sizes(0, 1500).is_err());
    }

    fn deliver(pp: &mut PingPong, fac: &mut PacketFactory, m: &Message, at: SimTime) -> PingPongAction {
        let mut last = PingPongAction::None;
        for &s in &m.segments {
            let p = fac.make(m.flow, s, at, m.kind, Some(m.msg_id)).unwrap();
            last = pp.on_segment(&p, at).unwrap();
        }
        last
    }

    #[test]
    fn pingpong_is_serial_and_counts_iterations() {
        let spec = PingPongSpec {
            client: NodeId(0),
            server: NodeId(1),
            message_sizes_bytes: vec![64, 4000],
            iterations_per_size: 3,
            priority: 0,
            start: SimTime::ZERO,
            timeout: SimTime::from_secs(10),
        };
        let mut pp = PingPong::new(spec, 1500).unwrap();
        let mut fac = PacketFactory::new(1500);
        let mut now = SimTime::ZERO;
        while let Some(req) = pp.start_next(now).unwrap() {
            assert!(pp.start_next(now).unwrap().is_none());
            now += SimTime::from_millis(1);
            let PingPongAction::Reply(rep) = deliver(&mut pp, &mut fac, &req, now) else {
                panic!("no reply");
            };
            assert_eq!(rep.segments, req.segments);
            now += SimTime::from_millis(1);
            assert!(matches!(deliver(&mut pp, &mut fac, &rep, now), PingPongAction::Completed(_)));
        }
        assert!(pp.is_done());
        assert_eq!(pp.samples().len(), 6);
        assert!(pp.samples().iter().all(|s| s.rtt == SimTime::from_millis(2)));
        let its: Vec<(u32, u32)> = pp.samples().iter().map(|s| (s.message_size, s.iteration)).collect();
        assert_eq!(its, [(64, 0), (64, 1), (64, 2), (4000, 0), (4000, 1), (4000, 2)]);
    }

    #[test]
    fn timeout_discards_late_segments() {
        let spec = PingPongSpec {
            client: NodeId(0),
            server: NodeId(1),
            message_sizes_bytes: vec![3000],
            iterations_per_size: 2,
            priority: 0,
            start: SimTime::ZERO,
            timeout: SimTime::from_secs(10),
        };
        let mut pp = PingPong::new(spec, 1500).unwrap();
        let mut fac = PacketFactory::new(1500);
        let first = pp.start_next(SimTime::ZERO).unwrap().unwrap();
        assert!(pp.on_timeout(first.msg_id));
        assert!(!pp.on_timeout(first.msg_id));
        let second = pp.start_next(SimTime::from_secs(10)).unwrap().unwrap();
        // a straggler of the abandoned message is ignored
        assert_eq!(
            deliver(&mut pp, &mut fac, &first, SimTime::from_secs(11)),
            PingPongAction::None
        );
        assert!(matches!(
            deliver(&mut pp, &mut fac, &second, SimTime::from_secs(11)),
            PingPongAction::Reply(_)
        ));
        assert_eq!(pp.timeouts(), &[TimedOut { message_size: 3000, iteration: 0 }]);
    }

    #[test]
    fn pingpong_rejects_zero_iterations() {
        let spec = PingPongSpec {
            client: NodeId(0),
            server: NodeId(0),
            message_sizes_bytes: vec![],
            iterations_per_size: 0,
            priority: 0,
            start: SimTime::ZERO,
            timeout: SimTime::from_secs(1),
        };
        match PingPong::new(spec, 1500) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn offered_load_matches_rate(
            size in 1u32..=1500,
            rate_kb in 1u32..=10_000,
            periods in 1u64..500,
        ) {
            let rate = rate_kb as f64 * 1000.0;
            let probe = CbrFlowSpec::new(flow(), rate, size, SimTime::ZERO, SimTime::ZERO);
            let spacing = probe.spacing().unwrap();
            prop_assume!(spacing.as_nanos() > 0);
            let stop = SimTime::from_nanos(spacing.as_nanos() * periods);
            let spec = CbrFlowSpec::new(flow(), rate, size, SimTime::ZERO, stop);
            let mut rng = Rng::new(0);
            let mut src = CbrSource::new(spec, 1500, &mut rng).unwrap();
            let n = drain(&mut src, &mut rng).len() as u64;
            prop_assert_eq!(n, periods);
        }

        #[test]
        fn jittered_emissions_are_ordered_and_bounded(
            seed in any::<u64>(),
            jitter in 0.0f64..=1.0,
            start_jitter in any::<bool>(),
        ) {
            let mut spec = CbrFlowSpec::new(flow(), 1_250_000.0, 1500, SimTime::from_millis(5), SimTime::from_millis(200));
            spec.jitter = jitter;
            spec.start_jitter = start_jitter;
            let mut rng = Rng::new(seed);
            let mut src = CbrSource::new(spec.clone(), 1500, &mut rng).unwrap();
            let ts = drain(&mut src, &mut rng);
            prop_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(ts.iter().all(|&t| t >= spec.start && t < spec.stop));
            let nominal = (195_000 / 1200) as usize;
            prop_assert!(ts.len() + 1 >= nominal && ts.len() <= nominal + 1);
        }
    }
}
