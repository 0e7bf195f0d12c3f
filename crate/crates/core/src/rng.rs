//! Deterministic random substreams.
//!
//! Every stochastic step draws from its own ChaCha stream, keyed by the master
//! seed, a domain tag and an entity id, so parallel evaluation over entities
//! reproduces sequential output exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stochastic steps that own a substream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    SupplierSelection = 1,
    DailyRealization = 2,
    Adjustment = 3,
    Reassignment = 4,
    ChoiceSets = 5,
    EstimationDraws = 6,
    Synthesis = 7,
    CountNoise = 8,
}

/// splitmix64 finalizer, used to decorrelate (seed, domain) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, domain: Domain, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain as u64)));
    rng.set_stream(id);
    rng
}

/// Derives a child seed, e.g. the truth-realization seed of a synthetic scenario.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix(seed ^ mix(salt.wrapping_add(0x5EED)))
}
