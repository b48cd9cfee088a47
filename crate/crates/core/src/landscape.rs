//! Level sets, overlaps and pair statistics over an energy table.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{mask, EnergyTable, Mode, SpinConfig, MAX_SPINS};
use crate::error::{invalid, Error, Result};

/// `√(2 ln 2)`, the ground-state energy scale.
pub const SQRT_2LN2: f64 = 1.177_410_022_515_474_7;

/// Slack applied when comparing integer distances against fractional thresholds,
/// so that `0.7 · 10` still counts as `7`.
pub const DISTANCE_TOL: f64 = 1e-9;

/// Whether `d ≤ ν₁ n`.
#[inline]
pub fn is_near(d: u32, n: usize, nu1: f64) -> bool {
    f64::from(d) <= nu1 * n as f64 + DISTANCE_TOL
}

/// Whether `ν₁ n < d < ν₂ n`, the distances an OGP forbids.
#[inline]
pub fn is_forbidden(d: u32, n: usize, nu1: f64, nu2: f64) -> bool {
    let d = f64::from(d);
    let n = n as f64;
    d > nu1 * n + DISTANCE_TOL && d < nu2 * n - DISTANCE_TOL
}

/// Whether `d ≥ ν₂ n`.
#[inline]
pub fn is_far(d: u32, n: usize, nu2: f64) -> bool {
    f64::from(d) >= nu2 * n as f64 - DISTANCE_TOL
}

pub(crate) fn check_fractions(nu1: f64, nu2: f64) -> Result<()> {
    if !(nu1 > 0.0 && nu1 < nu2 && nu2 < 1.0) {
        return Err(invalid("nu1/nu2", format!("need 0 < ν₁ < ν₂ < 1, got ({nu1}, {nu2})")));
    }
    Ok(())
}

/// Units in which level-set bounds are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyUnit {
    Absolute,
    /// Multiples of `√(2 ln 2)`.
    SqrtTwoLnTwo,
}

impl EnergyUnit {
    pub fn scale(self) -> f64 {
        match self {
            EnergyUnit::Absolute => 1.0,
            EnergyUnit::SqrtTwoLnTwo => SQRT_2LN2,
        }
    }
}

/// Parameters of the table a level set was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub n: usize,
    pub p: usize,
    pub mode: Mode,
    pub seed: u64,
}

impl From<&EnergyTable> for TableInfo {
    fn from(t: &EnergyTable) -> Self {
        Self {
            n: t.n(),
            p: t.p(),
            mode: t.mode(),
            seed: t.seed(),
        }
    }
}

/// A set of configurations, sorted by bit value and free of duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    n: usize,
    members: Vec<u64>,
    lower: f64,
    upper: f64,
    unit: EnergyUnit,
    source: Option<TableInfo>,
}

impl LevelSet {
    /// An arbitrary configuration set not tied to a table; bounds are infinite.
    pub fn from_members(n: usize, members: impl IntoIterator<Item = u64>) -> Result<Self> {
        if n == 0 || n > MAX_SPINS as usize {
            return Err(invalid("n", format!("{n} is not in 1..={MAX_SPINS}")));
        }
        let m = mask(n as u32);
        let mut members: Vec<u64> = members.into_iter().collect();
        if let Some(bad) = members.iter().find(|&&b| b & !m != 0) {
            return Err(invalid("members", format!("{bad:#x} does not fit in {n} spins")));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self {
            n,
            members,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            unit: EnergyUnit::Absolute,
            source: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn configs(&self) -> impl Iterator<Item = SpinConfig> + '_ {
        let n = self.n as u32;
        self.members
            .iter()
            .map(move |&b| SpinConfig::new(b, n).expect("members fit in n spins"))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, bits: u64) -> bool {
        self.members.binary_search(&bits).is_ok()
    }

    /// Bounds as given, in [`LevelSet::unit`].
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn unit(&self) -> EnergyUnit {
        self.unit
    }

    pub fn absolute_bounds(&self) -> (f64, f64) {
        let s = self.unit.scale();
        (self.lower * s, self.upper * s)
    }

    pub fn source(&self) -> Option<TableInfo> {
        self.source
    }

    /// One `bits` row per member, most significant spin first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bits")?;
        for b in &self.members {
            writeln!(out, "{:0width$b}", b, width = self.n)?;
        }
        Ok(())
    }
}

/// Configurations whose energy lies in the closed interval `[lower, upper]`.
pub fn level_set(table: &EnergyTable, lower: f64, upper: f64, unit: EnergyUnit) -> Result<LevelSet> {
    if lower.is_nan() || upper.is_nan() || lower > upper {
        return Err(invalid("bounds", format!("[{lower}, {upper}] is not an interval")));
    }
    let s = unit.scale();
    let (lo, hi) = (lower * s, upper * s);
    let members = table
        .energies()
        .par_iter()
        .enumerate()
        .filter(|(_, &e)| e >= lo && e <= hi)
        .map(|(i, _)| i as u64)
        .collect();
    Ok(LevelSet {
        n: table.n(),
        members,
        lower,
        upper,
        unit,
        source: Some(table.into()),
    })
}

/// `S(ε) = {σ : H(σ) ≥ (1 − ε)√(2 ln 2)}`.
pub fn superlevel_set(table: &EnergyTable, epsilon: f64) -> Result<LevelSet> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("{epsilon} is not in [0, 1]")));
    }
    level_set(table, 1.0 - epsilon, f64::INFINITY, EnergyUnit::SqrtTwoLnTwo)
}

/// Normalized inner product `(n − 2 d_H) / n`.
pub fn overlap(a: SpinConfig, b: SpinConfig) -> Result<f64> {
    let d = a.hamming(b)?;
    let n = f64::from(a.n());
    Ok((n - 2.0 * f64::from(d)) / n)
}

/// The overlaps realizable at size `n`: `{(n − 2k)/n : k = 0..=n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGrid {
    n: usize,
}

impl OverlapGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Overlap at Hamming distance `d`.
    pub fn value(&self, d: usize) -> f64 {
        (self.n as f64 - 2.0 * d as f64) / self.n as f64
    }

    /// Values in decreasing order, indexed by Hamming distance.
    pub fn values(&self) -> Vec<f64> {
        (0..=self.n).map(|d| self.value(d)).collect()
    }

    /// Hamming distance of a grid value, if `alpha` is on the grid.
    pub fn distance_of(&self, alpha: f64) -> Option<usize> {
        let d = (self.n as f64 * (1.0 - alpha) / 2.0).round();
        if (0.0..=self.n as f64).contains(&d) && (self.value(d as usize) - alpha).abs() < 1e-12 {
            Some(d as usize)
        } else {
            None
        }
    }
}

/// Ordered-pair counts of a set by overlap, self-pairs included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapHistogram {
    n: usize,
    /// `counts[d]` pairs at Hamming distance `d`.
    counts: Vec<u64>,
}

impl OverlapHistogram {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts_by_distance(&self) -> &[u64] {
        &self.counts
    }

    /// Count at overlap `alpha`; zero off the grid.
    pub fn count(&self, alpha: f64) -> u64 {
        OverlapGrid { n: self.n }
            .distance_of(alpha)
            .map_or(0, |d| self.counts[d])
    }

    /// Nonzero `(overlap, count)` entries in decreasing overlap.
    pub fn entries(&self) -> Vec<(f64, u64)> {
        let grid = OverlapGrid { n: self.n };
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, &c)| (grid.value(d), c))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "overlap,hamming,count")?;
        let grid = OverlapGrid { n: self.n };
        for (d, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", grid.value(d), d, c)?;
        }
        Ok(())
    }
}

pub fn overlap_histogram(set: &LevelSet) -> Result<OverlapHistogram> {
    if set.is_empty() {
        return Err(invalid("set", "overlap histogram of an empty set"));
    }
    let n = set.n;
    let m = &set.members;
    let counts = m
        .par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut acc, &a| {
                for &b in m {
                    acc[(a ^ b).count_ones() as usize] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                x
            },
        );
    Ok(OverlapHistogram { n, counts })
}

/// All ordered pairs at normalized distance strictly inside `(ν₁, ν₂)`.
pub fn forbidden_pairs(set: &LevelSet, nu1: f64, nu2: f64) -> Result<Vec<(u64, u64)>> {
    check_fractions(nu1, nu2)?;
    let n = set.n;
    let m = &set.members;
    Ok(m.par_iter()
        .flat_map_iter(|&a| {
            m.iter()
                .filter(move |&&b| is_forbidden((a ^ b).count_ones(), n, nu1, nu2))
                .map(move |&b| (a, b))
        })
        .collect())
}

/// Writes pairs as a JSON array of `[a, b]` bit values.
pub fn pairs_to_json(pairs: &[(u64, u64)]) -> String {
    serde_json::to_string(pairs).expect("integer pairs serialize")
}

/// Maximizer and maximum of the table; ties go to the lowest bit value.
pub fn ground_state(table: &EnergyTable) -> (SpinConfig, f64) {
    let (mut best, mut value) = (0usize, f64::NEG_INFINITY);
    for (i, &e) in table.energies().iter().enumerate() {
        if e > value {
            best = i;
            value = e;
        }
    }
    let config = SpinConfig::new(best as u64, table.n() as u32).expect("index fits in n spins");
    (config, value)
}

/// Dimension check shared by set-consuming routines.
pub(crate) fn same_n(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
