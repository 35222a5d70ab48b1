//! Seed derivation. One master seed fans out into independent ChaCha streams
//! keyed by purpose and index, so any unit of work can be reproduced without
//! replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Stream purposes.
pub mod tag {
    pub const CHAIN: u64 = 0x6368_6169_6e00_0001;
    pub const ALLOCATION: u64 = 0x616c_6c6f_6300_0002;
    pub const SIM_TRUTH: u64 = 0x7472_7574_6800_0003;
    pub const SIM_DATA: u64 = 0x6461_7461_0000_0004;
    pub const REPLICATION: u64 = 0x7265_706c_0000_0005;
    pub const PAM: u64 = 0x7061_6d00_0000_0006;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a purpose tag and an index.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(tag)).wrapping_add(index))
}

pub fn stream(master: u64, tag: u64, index: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}

/// Per-cell streams for one latent-allocation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellStreams {
    key: u64,
}

impl CellStreams {
    pub fn new(master: u64, iteration: u64) -> Self {
        Self {
            key: derive_seed(master, tag::ALLOCATION, iteration),
        }
    }

    #[inline]
    pub fn for_cell(&self, cell: usize) -> ChainRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(cell as u64);
        rng
    }
}
