use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ring::Ring;
use crate::sharing::{RandomnessCtx, SetupSeeds};
use crate::transport::{Net, PartyId, TrafficStats};

/// Everything one party needs to run protocols: its network endpoint, its
/// correlated randomness, and a private generator for values only it
/// samples.
pub struct Party {
    pub net: Net,
    pub ctx: RandomnessCtx,
    pub rng: ChaCha20Rng,
}

impl Party {
    pub fn new(net: Net, seeds: &SetupSeeds) -> Self {
        let id = net.id();
        Self {
            ctx: seeds.context_for(id),
            rng: ChaCha20Rng::from_seed(seeds.private_seed(id)),
            net,
        }
    }

    pub fn id(&self) -> PartyId {
        self.net.id()
    }

    pub fn ring(&self) -> Ring {
        self.net.ring()
    }

    pub fn stats(&self) -> &TrafficStats {
        self.net.stats()
    }

    /// Runs `f` with traffic charged to `phase`, restoring the old label.
    pub fn in_phase<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let prev = self.net.set_phase(phase);
        let out = f(self);
        self.net.set_phase(prev);
        out
    }
}
