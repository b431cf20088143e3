//! Reproducible stream derivation for parallel Monte Carlo.
//!
//! Every simulation owns its own ChaCha stream, derived from a master seed
//! and a member index. Results depend only on (seed, index), never on
//! thread count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a master seed with a label, splitmix64-style. Used to carve
/// independent sub-experiments (pre-runs, oracles, ensembles) out of one
/// master seed.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The random stream for one ensemble member. ChaCha streams with distinct
/// stream ids never overlap, so members are independent by construction.
pub fn member_rng(master: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(member);
    rng
}
