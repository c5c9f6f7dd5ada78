//! Search-tree simulator for unified fine-tuning.
//!
//! The crate models reasoning as a complete `B`-ary search tree of height `H`
//! with verifier rewards on the leaves, and trains tabular softmax policies on
//! it with hint-guided exploration. It contains:
//!
//! - [`tree`]: tree environments (adversarial instances, Countdown).
//! - [`policy`]: softmax policies, exact values, reach probabilities, KL.
//! - [`hint`]: hint-length schedules (cosine/binomial, two-point, uniform, ...).
//! - [`trainer`]: the hint-started group-sampling update loop and its presets.
//! - [`harness`]: sample-complexity experiments and scaling fits.
//! - [`config`], [`output`], [`verify`]: configuration, CSV emission and the
//!   property suites behind `uft verify`.

pub mod config;
pub mod error;
pub mod harness;
pub mod hint;
pub mod output;
pub mod policy;
pub mod stats;
pub mod trainer;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use hint::HintSchedule;
pub use policy::{LeafCounter, Policy, Trajectory};
pub use trainer::{Preset, TrainConfig};
pub use tree::{NodeRef, OptimalPath, SearchTree, TreeSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Deterministic stream `stream` of the generator seeded with `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive independent seeds from tuples.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
