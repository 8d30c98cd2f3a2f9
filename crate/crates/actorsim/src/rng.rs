//! Named random streams: master seed -> replication -> component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// Physical-system transition noise and initial states.
    Physical,
    /// Action choices of the data-collection rule.
    Selection,
    /// Monte Carlo value rollouts inside the uncertainty weight.
    Value,
    /// Initial parameter guess.
    Init,
    /// Network initialization and DQN training.
    Training,
    /// Policy evaluation on the physical system.
    Evaluation,
    /// Probe states for flux error.
    Probe,
}

impl Component {
    fn tag(self) -> u64 {
        match self {
            Component::Physical => 1,
            Component::Selection => 2,
            Component::Value => 3,
            Component::Init => 4,
            Component::Training => 5,
            Component::Evaluation => 6,
            Component::Probe => 7,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(master, replication, component)`.
pub fn stream_seed(master: u64, replication: u64, component: Component) -> u64 {
    splitmix(splitmix(splitmix(master) ^ replication) ^ component.tag())
}

pub fn stream(master: u64, replication: u64, component: Component) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, replication, component))
}

/// Stream for the `index`-th use of a component (per iteration, say), so that
/// arms doing different amounts of work still share draws at equal indices.
pub fn stream_at(master: u64, replication: u64, component: Component, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(stream_seed(master, replication, component) ^ splitmix(index)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_differ_and_repeat() {
        let a = stream(1, 0, Component::Physical).next_u64();
        assert_eq!(a, stream(1, 0, Component::Physical).next_u64());
        assert_ne!(a, stream(1, 1, Component::Physical).next_u64());
        assert_ne!(a, stream(1, 0, Component::Value).next_u64());
        assert_ne!(a, stream(2, 0, Component::Physical).next_u64());
        let b = stream_at(1, 0, Component::Training, 3).next_u64();
        assert_eq!(b, stream_at(1, 0, Component::Training, 3).next_u64());
        assert_ne!(b, stream_at(1, 0, Component::Training, 4).next_u64());
    }
}
