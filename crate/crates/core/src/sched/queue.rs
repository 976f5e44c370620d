use std::collections::VecDeque;

use crate::model::{Packet, QueueConfig, SimTime};

/// Per-queue counters. At every instant `enqueued == served + dropped + resident`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub enqueued: u64,
    pub served: u64,
    pub dropped: u64,
    pub bytes_served: u64,
}

/// One priority queue of an egress buffer.
#[derive(Debug, Clone)]
pub struct SchedQueue {
    pub(crate) config: QueueConfig,
    pub(crate) fifo: VecDeque<Packet>,
    pub(crate) last_sent: SimTime,
    pub(crate) deficit_bytes: u64,
    pub(crate) in_active_list: bool,
    pub(crate) stats: QueueStats,
}

impl SchedQueue {
    pub(crate) fn new(config: QueueConfig) -> Self {
        SchedQueue {
            config,
            fifo: VecDeque::new(),
            last_sent: SimTime::ZERO,
            deficit_bytes: 0,
            in_active_list: false,
            stats: QueueStats::default(),
        }
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.fifo.len() >= self.config.capacity_pkts
    }

    pub fn head(&self) -> Option<&Packet> {
        self.fifo.front()
    }

    pub fn last_sent(&self) -> SimTime {
        self.last_sent
    }

    pub fn deficit_bytes(&self) -> u64 {
        self.deficit_bytes
    }

    pub fn in_active_list(&self) -> bool {
        self.in_active_list
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    pub(crate) fn pop(&mut self) -> Option<Packet> {
        let p = self.fifo.pop_front()?;
        self.stats.served += 1;
        self.stats.bytes_served += p.size_bytes as u64;
        Some(p)
    }
}
