use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::spin::SpinConfig;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// Environment variable overriding [`MemoryBudget::default`] (bytes).
pub const MEMORY_BUDGET_ENV: &str = "PSPIN_MEMORY_BUDGET";

/// Upper bound on bytes a single materialized array may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        Self { bytes: 1 << 30 }
    }
}

impl MemoryBudget {
    pub fn from_env() -> Self {
        std::env::var(MEMORY_BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map(|bytes| Self { bytes })
            .unwrap_or_default()
    }

    pub(crate) fn check_f64s(&self, what: &'static str, count: f64) -> Result<()> {
        let need = count * 8.0;
        if need > self.bytes as f64 {
            Err(Error::BudgetExceeded {
                what,
                required: need,
                limit: self.bytes as f64,
            })
        } else {
            Ok(())
        }
    }
}

/// Interpolation angle `τ ∈ [0, π/2]` of the correlated ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAngle(f64);

impl EnsembleAngle {
    pub fn new(tau: f64) -> Result<Self> {
        if (0.0..=FRAC_PI_2).contains(&tau) {
            Ok(Self(tau))
        } else {
            Err(invalid("tau", format!("{tau} is not in [0, π/2]")))
        }
    }

    pub fn tau(self) -> f64 {
        self.0
    }

    /// Cosine weight; exact at both ends of the range.
    pub fn cos(self) -> f64 {
        if self.0 == FRAC_PI_2 {
            0.0
        } else {
            self.0.cos()
        }
    }

    pub fn sin(self) -> f64 {
        if self.0 == FRAC_PI_2 {
            1.0
        } else {
            self.0.sin()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Materialized(Vec<f64>),
    /// Entries regenerated from the seed on every access.
    Virtual,
    /// `cos·J(seed) + sin·J(fresh_seed)`, regenerated on access.
    Interpolated { fresh_seed: u64, cos: f64, sin: f64 },
}

/// Gaussian coupling tensor `J ∈ (ℝⁿ)^{⊗p}` with i.i.d. standard normal entries.
///
/// Tuples are flattened with the first index most significant. Entry values
/// depend only on `(seed, flat index)`, so materialized and virtual tensors
/// with the same seed agree bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    n: usize,
    p: usize,
    seed: u64,
    storage: Storage,
}

pub(crate) fn entry_count(n: usize, p: usize) -> Option<usize> {
    let mut total = 1usize;
    for _ in 0..p {
        total = total.checked_mul(n)?;
    }
    Some(total)
}

fn check_shape(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if p < 2 {
        return Err(invalid("p", format!("{p} is below 2")));
    }
    Ok(())
}

impl CouplingTensor {
    /// Generates the seeded tensor, materializing it when asked to.
    pub fn generate(n: usize, p: usize, seed: u64, materialize: bool) -> Result<Self> {
        Self::generate_with_budget(n, p, seed, materialize, MemoryBudget::from_env())
    }

    pub fn generate_with_budget(
        n: usize,
        p: usize,
        seed: u64,
        materialize: bool,
        budget: MemoryBudget,
    ) -> Result<Self> {
        check_shape(n, p)?;
        let storage = if materialize {
            let count = (n as f64).powi(p as i32);
            budget.check_f64s("materialized tensor", count)?;
            let len = entry_count(n, p).expect("checked against budget");
            Storage::Materialized((0..len as u64).map(|i| rng::normal(seed, Stream::Tensor, i)).collect())
        } else {
            Storage::Virtual
        };
        Ok(Self { n, p, seed, storage })
    }

    /// Wraps explicit entries (flattened, first index most significant).
    pub fn from_entries(n: usize, p: usize, entries: Vec<f64>) -> Result<Self> {
        check_shape(n, p)?;
        let len = entry_count(n, p).ok_or_else(|| invalid("n", "tensor size overflows"))?;
        if entries.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: entries.len(),
            });
        }
        Ok(Self {
            n,
            p,
            seed: 0,
            storage: Storage::Materialized(entries),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.storage, Storage::Materialized(_))
    }

    pub fn len(&self) -> usize {
        entry_count(self.n, self.p).unwrap_or(usize::MAX)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of a tuple of 0-based spin indices.
    pub fn flat_index(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: tuple.len(),
            });
        }
        let mut idx = 0usize;
        for &i in tuple {
            if i >= self.n {
                return Err(invalid("tuple", format!("index {i} is not below n = {}", self.n)));
            }
            idx = idx * self.n + i;
        }
        Ok(idx)
    }

    #[inline]
    pub fn entry_flat(&self, idx: usize) -> f64 {
        match &self.storage {
            Storage::Materialized(v) => v[idx],
            Storage::Virtual => rng::normal(self.seed, Stream::Tensor, idx as u64),
            Storage::Interpolated { fresh_seed, cos, sin } => {
                cos * rng::normal(self.seed, Stream::Tensor, idx as u64)
                    + sin * rng::normal(*fresh_seed, Stream::Tensor, idx as u64)
            }
        }
    }

    pub fn entry(&self, tuple: &[usize]) -> Result<f64> {
        Ok(self.entry_flat(self.flat_index(tuple)?))
    }

    /// Copy with every entry held in memory.
    pub fn materialized(&self, budget: MemoryBudget) -> Result<Self> {
        if self.is_materialized() {
            return Ok(self.clone());
        }
        budget.check_f64s("materialized tensor", (self.n as f64).powi(self.p as i32))?;
        let entries = (0..self.len()).map(|i| self.entry_flat(i)).collect();
        Ok(Self {
            n: self.n,
            p: self.p,
            seed: self.seed,
            storage: Storage::Materialized(entries),
        })
    }

    /// Entrywise `cos(τ)·base + sin(τ)·fresh`.
    ///
    /// Virtual inputs give a virtual result; otherwise the result is materialized.
    pub fn correlated(base: &Self, fresh: &Self, angle: EnsembleAngle) -> Result<Self> {
        if base.n != fresh.n || base.p != fresh.p {
            return Err(invalid(
                "fresh",
                format!("shape ({}, {}) differs from base ({}, {})", fresh.n, fresh.p, base.n, base.p),
            ));
        }
        if base.seed == fresh.seed {
            return Err(invalid("fresh", format!("shares seed {} with the base tensor", base.seed)));
        }
        let (c, s) = (angle.cos(), angle.sin());
        let storage = match (&base.storage, &fresh.storage) {
            (Storage::Virtual, Storage::Virtual) => Storage::Interpolated {
                fresh_seed: fresh.seed,
                cos: c,
                sin: s,
            },
            _ => Storage::Materialized(
                (0..base.len())
                    .map(|i| c * base.entry_flat(i) + s * fresh.entry_flat(i))
                    .collect(),
            ),
        };
        Ok(Self {
            n: base.n,
            p: base.p,
            seed: base.seed,
            storage,
        })
    }

    /// Normalization `n^{-(p+1)/2}` applied to the raw contraction.
    pub fn scale(&self) -> f64 {
        (self.n as f64).powf(-(self.p as f64 + 1.0) / 2.0)
    }

    /// `H(σ) = n^{-(p+1)/2} Σ J_{i₁…i_p} σ_{i₁}⋯σ_{i_p}` over all ordered tuples.
    pub fn energy(&self, config: SpinConfig) -> Result<f64> {
        if config.n() as usize != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: config.n() as usize,
            });
        }
        let mut scratch = Vec::new();
        Ok(self.energy_bits(config.bits(), &mut scratch))
    }

    /// Energy of a raw bit pattern; `scratch` is reused between calls.
    pub(crate) fn energy_bits(&self, bits: u64, scratch: &mut Vec<f64>) -> f64 {
        let spins: Vec<f64> = (0..self.n)
            .map(|i| if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        let raw = match &self.storage {
            Storage::Materialized(entries) => contract(entries, &spins, self.n, scratch),
            _ => {
                // Stream the entries: sign of a tuple is the product of its spins.
                let mut total = 0.0;
                let mut digits = vec![0usize; self.p];
                for idx in 0..self.len() {
                    let sign: f64 = digits.iter().map(|&d| spins[d]).product();
                    total += sign * self.entry_flat(idx);
                    for d in digits.iter_mut().rev() {
                        *d += 1;
                        if *d < self.n {
                            break;
                        }
                        *d = 0;
                    }
                }
                total
            }
        };
        raw * self.scale()
    }
}

/// Contracts the flattened tensor with `σ` once per mode, last index first.
fn contract(entries: &[f64], spins: &[f64], n: usize, scratch: &mut Vec<f64>) -> f64 {
    let mut len = entries.len() / n;
    scratch.clear();
    scratch.extend(entries.chunks_exact(n).map(|row| dot(row, spins)));
    while len > 1 {
        len /= n;
        for j in 0..len {
            let v = dot(&scratch[j * n..(j + 1) * n], spins);
            scratch[j] = v;
        }
        scratch.truncate(len);
    }
    scratch[0]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
