//! Seeded delivery order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::participants::{ParticipantId, Scheduler};

/// Least-recently-served recipients first; ties broken by a seeded draw.
#[derive(Debug, Clone)]
pub struct SeededScheduler {
    rng: ChaCha20Rng,
    last_served: BTreeMap<ParticipantId, u64>,
    turn: u64,
}

impl SeededScheduler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed ^ 0x7363_6865_6475_6c65), last_served: BTreeMap::new(), turn: 0 }
    }
}

impl Scheduler for SeededScheduler {
    fn order(&mut self, _block: u64, ready: &[ParticipantId]) -> Vec<ParticipantId> {
        let mut keyed: Vec<(u64, u64, ParticipantId)> = ready
            .iter()
            .map(|&p| (self.last_served.get(&p).copied().unwrap_or(0), self.rng.gen(), p))
            .collect();
        keyed.sort();
        let order: Vec<ParticipantId> = keyed.into_iter().map(|(_, _, p)| p).collect();
        for &p in &order {
            self.turn += 1;
            self.last_served.insert(p, self.turn);
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_order() {
        let ready: Vec<ParticipantId> = (1..=6).map(ParticipantId::Node).collect();
        let mut a = SeededScheduler::new(3);
        let mut b = SeededScheduler::new(3);
        for block in 0..5 {
            assert_eq!(a.order(block, &ready), b.order(block, &ready));
        }
    }

    #[test]
    fn starved_participant_goes_first() {
        let mut s = SeededScheduler::new(1);
        let all = [ParticipantId::Node(1), ParticipantId::Node(2), ParticipantId::Consumer];
        s.order(0, &all[..2]);
        assert_eq!(s.order(1, &all)[0], ParticipantId::Consumer);
    }

    #[test]
    fn every_ready_participant_is_served_once() {
        let mut s = SeededScheduler::new(9);
        let ready: Vec<ParticipantId> = (1..=5).map(ParticipantId::Device).collect();
        let mut order = s.order(0, &ready);
        order.sort();
        assert_eq!(order, ready);
    }
}
