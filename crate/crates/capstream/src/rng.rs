//! Deterministic seed derivation for replications.
//!
//! Child seeds come from a SplitMix64 walk over `(master, replication, lane)`
//! so that replications and lanes (data vs. algorithm randomness) are
//! decorrelated but fully reproducible.

fn split_mix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(replication, lane)` derived from the master seed.
pub fn child_seed(master: u64, replication: u64, lane: u64) -> u64 {
    let mut state = master;
    let a = split_mix(&mut state);
    let mut state = a ^ replication.wrapping_mul(0xa076_1d64_78bd_642f);
    let b = split_mix(&mut state);
    let mut state = b ^ lane.wrapping_mul(0xe703_7ed1_a0b4_28db);
    split_mix(&mut state)
}

/// Lane tags used by the runner.
pub mod lane {
    pub const DATA: u64 = 0;
    pub const ALGORITHM: u64 = 1;
}
