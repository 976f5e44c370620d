//! Egress traffic managers.
//!
//! An [`EgressBuffer`] owns the priority queues of one output port and
//! decides which packet leaves next under one of three policies:
//!
//! * [`Policy::BestEffort`]: a single drop-tail FIFO.
//! * [`Policy::Strict`]: every queue is rate limited through per-packet
//!   departure times; heads are polled from queue 0 downwards and the first
//!   one that is due is served. Rates may be in bytes or packets per second.
//! * [`Policy::RlSpDrr`]: queue 0 is a rate-limited strict-priority queue;
//!   the remaining queues share whatever is left through deficit round-robin.
//!
//! Each `dequeue` returns at most one packet, so the high-priority queue is
//! re-examined between any two low-priority packets.

mod queue;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Packet, QueueConfig, SimTime};

pub use queue::{QueueStats, SchedQueue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[serde(alias = "no", alias = "best_effort")]
    BestEffort,
    Strict,
    #[serde(alias = "rl-sp-drr")]
    RlSpDrr,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::BestEffort => "no",
            Policy::Strict => "strict",
            Policy::RlSpDrr => "rl_sp_drr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnqueueOutcome {
    Accepted,
    /// The target queue was full; the packet is handed back untouched.
    DroppedTail(Packet),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DequeueOutcome {
    Packet { packet: Packet, queue: usize },
    /// Nothing is eligible now. `until` is the earliest departure time of a
    /// queued rate-limited head; `None` means the buffer is empty.
    Idle { until: Option<SimTime> },
}

#[derive(Debug, Clone)]
pub struct EgressBuffer {
    policy: Policy,
    queues: Vec<SchedQueue>,
    active_list: VecDeque<usize>,
    /// The queue at the front of `active_list` has not been credited its
    /// quantum for the current visit yet.
    fresh_visit: bool,
    clamp_idle: bool,
}

impl EgressBuffer {
    pub fn new(policy: Policy, configs: Vec<QueueConfig>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::InvalidConfig("egress buffer needs at least one queue".into()));
        }
        if policy == Policy::BestEffort && configs.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "best-effort uses a single FIFO, got {} queue configs",
                configs.len()
            )));
        }
        for (i, cfg) in configs.iter().enumerate() {
            check_queue_config(policy, i, cfg)?;
        }
        Ok(EgressBuffer {
            policy,
            queues: configs.into_iter().map(SchedQueue::new).collect(),
            active_list: VecDeque::new(),
            fresh_visit: true,
            clamp_idle: true,
        })
    }

    /// Selects between `max(last_sent, now) + size/rate` (the default) and the
    /// literal `last_sent + size/rate`, which lets a backlog that built up
    /// after an idle period leave as one burst.
    pub fn with_idle_clamp(mut self, clamp: bool) -> Self {
        self.clamp_idle = clamp;
        self
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn queue(&self, idx: usize) -> &SchedQueue {
        &self.queues[idx]
    }

    pub fn queues(&self) -> &[SchedQueue] {
        &self.queues
    }

    pub fn active_list(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_list.iter().copied()
    }

    pub fn total_len(&self) -> usize {
        self.queues.iter().map(SchedQueue::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(SchedQueue::is_empty)
    }

    pub fn set_queue_config(&mut self, idx: usize, cfg: QueueConfig) -> Result<()> {
        if idx >= self.queues.len() {
            return Err(bad_index(idx, self.queues.len()));
        }
        check_queue_config(self.policy, idx, &cfg)?;
        self.queues[idx].config = cfg;
        Ok(())
    }

    pub fn enqueue(&mut self, idx: usize, mut p: Packet, now: SimTime) -> Result<EnqueueOutcome> {
        let n = self.queues.len();
        let clamp = self.clamp_idle;
        let q = self.queues.get_mut(idx).ok_or_else(|| bad_index(idx, n))?;
        if q.is_full() {
            q.stats.dropped += 1;
            return Ok(EnqueueOutcome::DroppedTail(p));
        }
        let rate_limited = match self.policy {
            Policy::BestEffort => false,
            Policy::Strict => true,
            Policy::RlSpDrr => idx == 0,
        };
        if rate_limited {
            let rate = q
                .config
                .rate
                .ok_or_else(|| Error::Logic(format!("queue {idx} has no rate")))?;
            let base = if clamp { q.last_sent.max(now) } else { q.last_sent };
            p.departure = base + rate.spacing(p.size_bytes)?;
            q.last_sent = p.departure;
        } else {
            p.departure = now;
        }
        if self.policy == Policy::RlSpDrr && idx > 0 && q.fifo.is_empty() {
            debug_assert!(!q.in_active_list);
            q.in_active_list = true;
            self.active_list.push_back(idx);
        }
        q.stats.enqueued += 1;
        q.fifo.push_back(p);
        Ok(EnqueueOutcome::Accepted)
    }

    pub fn dequeue(&mut self, now: SimTime) -> Result<DequeueOutcome> {
        match self.policy {
            Policy::BestEffort => Ok(match self.queues[0].pop() {
                Some(packet) => DequeueOutcome::Packet { packet, queue: 0 },
                None => DequeueOutcome::Idle { until: None },
            }),
            Policy::Strict => {
                let mut earliest: Option<SimTime> = None;
                for (idx, q) in self.queues.iter_mut().enumerate() {
                    let Some(head) = q.head() else { continue };
                    if head.departure <= now {
                        let packet = q.pop().expect("head exists");
                        return Ok(DequeueOutcome::Packet { packet, queue: idx });
                    }
                    earliest = Some(earliest.map_or(head.departure, |e| e.min(head.departure)));
                }
                Ok(DequeueOutcome::Idle { until: earliest })
            }
            Policy::RlSpDrr => {
                let hp_due = self.queues[0].head().map(|h| h.departure);
                if matches!(hp_due, Some(t) if t <= now) {
                    let packet = self.queues[0].pop().expect("head exists");
                    return Ok(DequeueOutcome::Packet { packet, queue: 0 });
                }
                if !self.active_list.is_empty() {
                    let (queue, packet) = self.drr_select()?;
                    return Ok(DequeueOutcome::Packet { packet, queue });
                }
                Ok(DequeueOutcome::Idle { until: hp_due })
            }
        }
    }

    /// One deficit round-robin step over the active low-priority queues.
    ///
    /// The front of the active list is the round-robin cursor. A queue gets
    /// its quantum when the cursor reaches it; it keeps the cursor while its
    /// head fits in the deficit, and yields it (keeping the remainder) once
    /// the head does not fit. Emptied queues leave the list with a zero
    /// deficit. Exactly one packet is returned per call.
    pub fn drr_select(&mut self) -> Result<(usize, Packet)> {
        if self.active_list.is_empty() {
            return Err(Error::Logic("drr_select called with no active queues".into()));
        }
        loop {
            let idx = self.active_list[0];
            let q = &mut self.queues[idx];
            if self.fresh_visit {
                q.deficit_bytes += q.config.quantum_bytes as u64;
                self.fresh_visit = false;
            }
            let head_size = q
                .head()
                .ok_or_else(|| Error::Logic(format!("queue {idx} is active but empty")))?
                .size_bytes as u64;
            if head_size <= q.deficit_bytes {
                let packet = q.pop().expect("head exists");
                q.deficit_bytes -= head_size;
                if q.fifo.is_empty() {
                    q.deficit_bytes = 0;
                    q.in_active_list = false;
                    self.active_list.pop_front();
                    self.fresh_visit = true;
                }
                return Ok((idx, packet));
            }
            self.active_list.rotate_left(1);
            self.fresh_visit = true;
        }
    }

    /// Checks the structural invariants of the buffer.
    pub fn check_invariants(&self) -> Result<()> {
        for (idx, q) in self.queues.iter().enumerate() {
            let s = q.stats;
            if s.enqueued != s.served + q.len() as u64 {
                return Err(Error::Invariant(format!(
                    "queue {idx}: enqueued {} != served {} + resident {}",
                    s.enqueued,
                    s.served,
                    q.len()
                )));
            }
            if q.is_empty() && q.deficit_bytes != 0 {
                return Err(Error::Invariant(format!("queue {idx}: empty with non-zero deficit")));
            }
            if q.fifo.iter().zip(q.fifo.iter().skip(1)).any(|(a, b)| a.departure > b.departure) {
                return Err(Error::Invariant(format!("queue {idx}: departures out of order")));
            }
        }
        if self.policy == Policy::RlSpDrr {
            let mut listed = vec![false; self.queues.len()];
            for &idx in &self.active_list {
                if idx == 0 || listed[idx] {
                    return Err(Error::Invariant(format!("active list has bad entry {idx}")));
                }
                listed[idx] = true;
            }
            for (idx, q) in self.queues.iter().enumerate().skip(1) {
                if listed[idx] == q.is_empty() || listed[idx] != q.in_active_list {
                    return Err(Error::Invariant(format!(
                        "queue {idx}: active-list membership disagrees with occupancy"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn bad_index(idx: usize, n: usize) -> Error {
    Error::InvalidConfig(format!("queue index {idx} out of range for {n} queues"))
}

fn check_queue_config(policy: Policy, idx: usize, cfg: &QueueConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.priority as usize != idx {
        return Err(Error::InvalidConfig(format!(
            "queue {idx} declares priority {}",
            cfg.priority
        )));
    }
    let needs_rate = match policy {
        Policy::BestEffort => false,
        Policy::Strict => true,
        Policy::RlSpDrr => idx == 0,
    };
    if needs_rate && cfg.rate.is_none() {
        return Err(Error::InvalidConfig(format!(
            "queue {idx} needs a rate under {}",
            policy.label()
        )));
    }
    Ok(())
}
