//! Each update step checked against a literal index-loop transcription on many
//! small random instances.

mod support;

use sparsemf::ErfConvention;
use support::equivalence::run_instance;

#[test]
fn standard_convention_matches_oracle() {
    for seed in 0..150 {
        run_instance(seed, ErfConvention::Standard);
    }
}

#[test]
fn complementary_convention_matches_oracle() {
    for seed in 1000..1100 {
        run_instance(seed, ErfConvention::Complementary);
    }
}
