//! Broker topic: FIFO with time-based retention.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct TopicQueue<T> {
    pub name: String,
    pub retention_us: u64,
    buf: VecDeque<(T, u64)>,
}

impl<T> TopicQueue<T> {
    pub fn new(name: impl Into<String>, retention_us: u64) -> Self {
        TopicQueue {
            name: name.into(),
            retention_us,
            buf: VecDeque::new(),
        }
    }

    pub fn push(&mut self, item: T, now_us: u64) {
        self.buf.push_back((item, now_us));
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.buf.iter().map(|(t, _)| t)
    }

    /// Removes every message older than the retention window.
    pub fn expire(&mut self, now_us: u64) -> Vec<T> {
        let mut expired = Vec::new();
        while let Some((_, at)) = self.buf.front() {
            if now_us.saturating_sub(*at) > self.retention_us {
                expired.push(self.buf.pop_front().unwrap().0);
            } else {
                break;
            }
        }
        expired
    }

    pub fn drain(&mut self) -> impl Iterator<Item = (T, u64)> + '_ {
        self.buf.drain(..)
    }
}

/// Result of one consume attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consumed<T> {
    /// Next fresh message with its enqueue time.
    pub message: Option<(T, u64)>,
    /// Messages dropped for exceeding retention.
    pub expired: Vec<T>,
}

/// Expires stale head-of-line messages, then hands out the next one in FIFO
/// order.
pub fn consume_from_topic<T>(queue: &mut TopicQueue<T>, now_us: u64) -> Consumed<T> {
    let expired = queue.expire(now_us);
    Consumed {
        message: queue.buf.pop_front(),
        expired,
    }
}
