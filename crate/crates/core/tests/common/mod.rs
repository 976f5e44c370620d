//! Drivers shared by the scheduler-level integration tests.
#![allow(dead_code)]


use tmsim::model::{transmission_time, FlowId, NodeId, PacketFactory, PacketKind, QueueConfig, RateLimit, SimTime};
use tmsim::sched::{DequeueOutcome, EgressBuffer, Policy};
use tmsim::sim::Rng;

pub const MTU: u32 = 1500;

/// Timed arrivals `(t, queue, size)`, sorted by time.
pub type Arrivals = [(SimTime, usize, u32)];

fn admit(buf: &mut EgressBuffer, factory: &mut PacketFactory, arrivals: &Arrivals, next: &mut usize, now: SimTime) {
    while *next < arrivals.len() && arrivals[*next].0 <= now {
        let (_, q, size) = arrivals[*next];
        let flow = FlowId::new(NodeId(0), NodeId(1), q as u8);
        let p = factory.make(flow, size, now, PacketKind::Data, None).unwrap();
        buf.enqueue(q, p, now).unwrap();
        *next += 1;
    }
}

/// Polls `buf` at every arrival and every wake-up it asks for, draining all
/// eligible packets each time. Returns `(service time, queue, bytes)`.
pub fn drive_polled(buf: &mut EgressBuffer, arrivals: &Arrivals, until: SimTime) -> Vec<(SimTime, usize, u32)> {
    let mut factory = PacketFactory::new(MTU);
    let mut served = Vec::new();
    let mut next = 0;
    let mut now = SimTime::ZERO;
    loop {
        admit(buf, &mut factory, arrivals, &mut next, now);
        let wake = loop {
            match buf.dequeue(now).unwrap() {
                DequeueOutcome::Packet { packet, queue } => served.push((now, queue, packet.size_bytes)),
                DequeueOutcome::Idle { until } => break until,
            }
        };
        match [arrivals.get(next).map(|a| a.0), wake].into_iter().flatten().min() {
            Some(t) if t <= until => now = t,
            _ => break,
        }
    }
    served
}

/// Serves `buf` onto a link without an output buffer: a packet is dequeued
/// only once the previous one has been transmitted.
pub fn drive_link(
    buf: &mut EgressBuffer,
    arrivals: &Arrivals,
    link_bytes_per_sec: f64,
    until: SimTime,
) -> Vec<(SimTime, usize, u32)> {
    let mut factory = PacketFactory::new(MTU);
    let mut served = Vec::new();
    let mut next = 0;
    let mut now = SimTime::ZERO;
    let mut link_free = SimTime::ZERO;
    loop {
        admit(buf, &mut factory, arrivals, &mut next, now);
        let mut wake = None;
        if now >= link_free {
            match buf.dequeue(now).unwrap() {
                DequeueOutcome::Packet { packet, queue } => {
                    served.push((now, queue, packet.size_bytes));
                    link_free = now + transmission_time(packet.size_bytes, link_bytes_per_sec).unwrap();
                }
                DequeueOutcome::Idle { until } => wake = until,
            }
        }
        let candidates = [
            arrivals.get(next).map(|a| a.0),
            (link_free > now).then_some(link_free),
            wake.filter(|&w| w > now),
        ];
        match candidates.into_iter().flatten().min() {
            Some(t) if t <= until => now = t,
            _ => break,
        }
    }
    served
}


/// Largest number of queue-0 bytes served in any window of length `w`.
pub fn max_window_bytes(served: &[(SimTime, usize, u32)], w: SimTime) -> u64 {
    let hp: Vec<(SimTime, u32)> = served.iter().filter(|s| s.1 == 0).map(|s| (s.0, s.2)).collect();
    let (mut best, mut sum, mut lo) = (0u64, 0u64, 0usize);
    for hi in 0..hp.len() {
        sum += hp[hi].1 as u64;
        while hp[hi].0 >= hp[lo].0 + w {
            sum -= hp[lo].1 as u64;
            lo += 1;
        }
        best = best.max(sum);
    }
    best
}

pub const RATE_CAP_WINDOWS: [u64; 5] = [10, 25, 50, 100, 1000];

/// A rate-limited HPQ fed with random bursts, next to two LP queues with
/// steady background traffic.
pub struct RateCapCase {
    pub policy: Policy,
    pub rate: f64,
    pub buf: EgressBuffer,
    pub arrivals: Vec<(SimTime, usize, u32)>,
}

impl RateCapCase {
    /// Even seeds use RL-SP-DRR, odd seeds STRICT with the LP rates splitting
    /// what the HPQ leaves.
    pub fn random(seed: u64, link_bytes_per_sec: f64) -> Self {
        let mut rng = Rng::new(seed);
        let policy = if seed.is_multiple_of(2) { Policy::RlSpDrr } else { Policy::Strict };
        let share = 0.2 + 0.7 * rng.uniform();
        let rate = share * link_bytes_per_sec;
        let lp_rate = (1.0 - share) * link_bytes_per_sec / 2.0;
        let cfgs = (0..3u8)
            .map(|i| {
                let r = match (policy, i) {
                    (_, 0) => Some(RateLimit::BytesPerSec(rate)),
                    (Policy::Strict, _) => Some(RateLimit::BytesPerSec(lp_rate)),
                    _ => None,
                };
                QueueConfig::new(i, r, MTU, 64)
            })
            .collect();
        let buf = EgressBuffer::new(policy, cfgs).unwrap();

        let mut arrivals = Vec::new();
        let mut t = 0u64;
        while t < 2_000_000_000 {
            let burst = 1 + rng.below(40);
            for _ in 0..burst {
                arrivals.push((SimTime::from_nanos(t), 0, 1 + rng.below(MTU as u64) as u32));
                t += rng.below(200_000);
            }
            t += rng.below(300_000_000);
        }
        for q in 1..3 {
            let mut t = 0u64;
            while t < 2_000_000_000 {
                arrivals.push((SimTime::from_nanos(t), q, 1 + rng.below(MTU as u64) as u32));
                t += 100_000 + rng.below(1_500_000);
            }
        }
        arrivals.sort_by_key(|a| a.0);
        RateCapCase { policy, rate, buf, arrivals }
    }
}
