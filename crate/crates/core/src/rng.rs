//! Seeded random streams.
//!
//! Every source of randomness in a run is derived from one user seed. Each
//! consumer draws from its own named ChaCha stream so that, for example,
//! turning augmentation off does not shift the dropout masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Split,
    Init,
    Dropout,
    Augment,
    Mixup,
    Shuffle,
    Refurbish,
}

impl Stream {
    pub const ALL: [Stream; 7] = [
        Stream::Split,
        Stream::Init,
        Stream::Dropout,
        Stream::Augment,
        Stream::Mixup,
        Stream::Shuffle,
        Stream::Refurbish,
    ];

    pub fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Init => 2,
            Stream::Dropout => 3,
            Stream::Augment => 4,
            Stream::Mixup => 5,
            Stream::Shuffle => 6,
            Stream::Refurbish => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Split => "split",
            Stream::Init => "init",
            Stream::Dropout => "dropout",
            Stream::Augment => "augment",
            Stream::Mixup => "mixup",
            Stream::Shuffle => "shuffle",
            Stream::Refurbish => "refurbish",
        }
    }
}

/// Open the named sub-stream of `seed`.
pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// The full set of streams used by one training run.
#[derive(Clone, Debug)]
pub struct RunStreams {
    pub init: Rng,
    pub dropout: Rng,
    pub augment: Rng,
    pub mixup: Rng,
    pub shuffle: Rng,
    pub unlabeled_shuffle: Rng,
    pub refurbish: Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let mut unlabeled_shuffle = stream(seed, Stream::Shuffle);
        // second word position of the shuffle stream, disjoint from the labeled order
        unlabeled_shuffle.set_word_pos(1 << 60);
        Self {
            init: stream(seed, Stream::Init),
            dropout: stream(seed, Stream::Dropout),
            augment: stream(seed, Stream::Augment),
            mixup: stream(seed, Stream::Mixup),
            shuffle: stream(seed, Stream::Shuffle),
            unlabeled_shuffle,
            refurbish: stream(seed, Stream::Refurbish),
        }
    }
}
