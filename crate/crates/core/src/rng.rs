//! Counter-based random streams.
//!
//! Every random draw in an experiment comes from a ChaCha8 stream addressed
//! by `(master_seed, seed_index, component)`: the master seed is the key,
//! the seed index selects the ChaCha stream (nonce), and the component picks
//! a disjoint block of the 2^68-word counter space. Streams never overlap,
//! and a run's draws do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Component {
    /// Instance generation.
    Instance = 1,
    /// Contexts and rewards.
    Environment = 2,
    /// The learner's own randomization.
    Learner = 3,
    /// Monte Carlo diagnostics.
    Diagnostics = 4,
}

pub fn stream(master_seed: u64, seed_index: u64, component: Component) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(seed_index);
    rng.set_word_pos(u128::from(component as u8) << 64);
    rng
}
