use std::collections::VecDeque;

use crate::bayes::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub sender: usize,
    pub bit: Observation,
    pub deliver_at: u64,
}

/// Lossless one-hop broadcast: every message reaches every robot except the
/// sender exactly once, one tick after it was sent.
#[derive(Debug, Clone, Default)]
pub struct BroadcastBus {
    inboxes: Vec<VecDeque<Message>>,
    sent: u64,
    delivered: u64,
}

impl BroadcastBus {
    pub fn new(n_robots: usize) -> Self {
        Self {
            inboxes: vec![VecDeque::new(); n_robots],
            sent: 0,
            delivered: 0,
        }
    }

    pub fn broadcast(&mut self, sender: usize, bit: Observation, tick: u64) {
        let msg = Message {
            sender,
            bit,
            deliver_at: tick + 1,
        };
        for (id, inbox) in self.inboxes.iter_mut().enumerate() {
            if id != sender {
                inbox.push_back(msg);
                self.sent += 1;
            }
        }
    }

    /// Removes and returns every message for `robot` due at or before `tick`.
    pub fn drain(&mut self, robot: usize, tick: u64) -> Vec<Message> {
        let inbox = &mut self.inboxes[robot];
        let mut out = Vec::new();
        while inbox.front().is_some_and(|m| m.deliver_at <= tick) {
            out.push(inbox.pop_front().expect("front checked"));
        }
        self.delivered += out.len() as u64;
        out
    }

    /// Removes every queued message for `robot` regardless of due time.
    pub fn flush(&mut self, robot: usize) -> Vec<Message> {
        let out: Vec<Message> = self.inboxes[robot].drain(..).collect();
        self.delivered += out.len() as u64;
        out
    }

    /// Point-to-point copies enqueued so far.
    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn in_flight(&self) -> u64 {
        self.inboxes.iter().map(|q| q.len() as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delivers_next_tick_to_everyone_else() {
        let mut bus = BroadcastBus::new(3);
        bus.broadcast(1, Observation::One, 5);
        assert!(bus.drain(0, 5).is_empty());
        let got = bus.drain(0, 6);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].sender, 1);
        assert!(bus.drain(1, 6).is_empty());
        assert_eq!(bus.drain(2, 7).len(), 1);
        assert!(bus.drain(2, 8).is_empty());
        assert_eq!(bus.sent(), 2);
        assert_eq!(bus.delivered(), 2);
        assert_eq!(bus.in_flight(), 0);
    }

    #[test]
    fn preserves_order() {
        let mut bus = BroadcastBus::new(2);
        bus.broadcast(0, Observation::One, 0);
        bus.broadcast(0, Observation::Zero, 0);
        bus.broadcast(0, Observation::One, 1);
        let bits: Vec<_> = bus.drain(1, 1).iter().map(|m| m.bit).collect();
        assert_eq!(bits, vec![Observation::One, Observation::Zero]);
        assert_eq!(bus.in_flight(), 1);
        assert_eq!(bus.flush(1).len(), 1);
        assert_eq!(bus.delivered(), bus.sent());
    }
}
