//! Counter-based random substreams.
//!
//! Every random draw in a simulation is taken from a generator whose seed is
//! a pure function of the master seed and a path of integer labels (replicate,
//! channel, interval, provider or feature). Results therefore do not depend
//! on the order in which replicates or cells are evaluated, nor on how many
//! threads evaluate them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels separating the independent random domains of one replicate.
pub mod domain {
    pub const CURVE: u64 = 0x6375_7276;
    pub const ALLOCATION: u64 = 0x616c_6c6f;
    pub const CARE: u64 = 0x6361_7265;
    pub const INTERNET: u64 = 0x6e65_7473;
    pub const FEATURES: u64 = 0x6665_6174;
}

/// A node in the tree of substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Substream {
    key: u64,
}

impl Substream {
    pub fn new(master_seed: u64) -> Self {
        Substream {
            key: splitmix64(master_seed ^ 0x5e_ed0f_c4a7),
        }
    }

    /// Derive the child stream labelled `label`.
    pub fn child(self, label: u64) -> Self {
        Substream {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn path(self, labels: &[u64]) -> Self {
        labels.iter().fold(self, |s, &l| s.child(l))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }

    pub fn key(self) -> u64 {
        self.key
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = Substream::new(7);
        let keys: HashSet<u64> = (0..10_000).map(|i| root.child(i).key()).collect();
        assert_eq!(keys.len(), 10_000);
        assert_eq!(root.child(3).child(4), root.path(&[3, 4]));
        assert_ne!(root.path(&[3, 4]), root.path(&[4, 3]));
    }

    #[test]
    fn same_path_same_draws() {
        let a: Vec<u64> = {
            let mut r = Substream::new(1).path(&[2, 3]).rng();
            (0..5).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Substream::new(1).path(&[2, 3]).rng();
            (0..5).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
    }
}
