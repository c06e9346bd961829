//! Seed derivation for sweep cells.
//!
//! Seeds are a fixed function of the cell's parameter bits and the trial index,
//! so adding cells to a grid never reshuffles the seeds of existing ones.

/// The splitmix64 finalizer; a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce5_e9b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Chains `parts` through [`splitmix64`].
pub fn hash_words(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x51_7cc1_b727_220a, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// `base ⊕ hash(words, trial)`.
pub fn derive_seed(base: u64, words: &[u64], trial: u32) -> u64 {
    let mut all = words.to_vec();
    all.push(u64::from(trial));
    base ^ hash_words(&all)
}
