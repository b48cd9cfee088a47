//! Shared fixtures for the benchmarks.

use pspin::{build_energy_table, superlevel_set, EnergyTable, LevelSet, Mode};

pub const FIXTURE_SEED: u64 = 0xbe4c;

pub fn table(n: usize, p: usize, mode: Mode) -> EnergyTable {
    build_energy_table(n, p, FIXTURE_SEED, mode).expect("fixture table builds")
}

/// A superlevel set of a REM table with roughly `2^{n(1−(1−ε)²)}` members.
pub fn level(n: usize, epsilon: f64) -> LevelSet {
    superlevel_set(&table(n, 2, Mode::RemLimit), epsilon).expect("fixture level set")
}
