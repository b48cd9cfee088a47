//! Partition functions, Gibbs masses and energy-band dominance.
//!
//! Sums run over fixed 4096-entry blocks whose partial results are combined by
//! a pairwise tree, so values do not depend on how many threads did the work.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::bounds::gamma_star;
use crate::disorder::EnergyTable;
use crate::error::{invalid, Result};
use crate::landscape::{level_set, same_n, EnergyUnit, LevelSet, SQRT_2LN2};

const BLOCK: usize = 4096;

/// A log-domain partial sum: `ln Σ exp(x) = max + ln(sum)`.
#[derive(Debug, Clone, Copy)]
struct Partial {
    max: f64,
    sum: f64,
}

impl Partial {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn of(values: impl Iterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::EMPTY;
        }
        Self {
            max,
            sum: values.iter().map(|x| (x - max).exp()).sum(),
        }
    }

    fn merge(self, other: Self) -> Self {
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        let max = self.max.max(other.max);
        Self {
            max,
            sum: self.sum * (self.max - max).exp() + other.sum * (other.max - max).exp(),
        }
    }

    fn ln(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn tree(parts: &[Partial]) -> Partial {
    match parts.len() {
        0 => Partial::EMPTY,
        1 => parts[0],
        len => {
            let mid = len.div_ceil(2);
            tree(&parts[..mid]).merge(tree(&parts[mid..]))
        }
    }
}

/// `ln Σᵢ exp(f(i))` over `0..len`, skipping indices where `f` is `None`.
///
/// Bitwise identical for any rayon pool size.
pub fn log_sum_exp_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> Option<f64> + Sync,
{
    let blocks: Vec<Partial> = (0..len.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let end = ((b + 1) * BLOCK).min(len);
            Partial::of((b * BLOCK..end).filter_map(&f))
        })
        .collect();
    tree(&blocks).ln()
}

/// `ln Σ exp(x)` over a slice, with the same block structure.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    log_sum_exp_by(values.len(), |i| Some(values[i]))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(invalid("beta", format!("{beta} is not a finite nonnegative number")))
    }
}

/// `ln Z_β = ln Σ_σ exp(β n H(σ))`.
pub fn log_partition(table: &EnergyTable, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = table.n();
    if beta == 0.0 {
        return Ok(n as f64 * LN_2);
    }
    let scale = beta * n as f64;
    let e = table.energies();
    Ok(log_sum_exp_by(e.len(), |i| Some(scale * e[i])))
}

/// `ln Z_β[κ₁, κ₂]`: the sum restricted to `κ₁√(2 ln 2) ≤ H ≤ κ₂√(2 ln 2)`.
///
/// Infinite bounds are allowed; an empty band gives `-∞`.
pub fn restricted_log_partition(table: &EnergyTable, beta: f64, kappa1: f64, kappa2: f64) -> Result<f64> {
    check_beta(beta)?;
    if kappa1.is_nan() || kappa2.is_nan() || kappa1 > kappa2 {
        return Err(invalid("kappa", format!("[{kappa1}, {kappa2}] is not an interval")));
    }
    let (lo, hi) = (kappa1 * SQRT_2LN2, kappa2 * SQRT_2LN2);
    let scale = beta * table.n() as f64;
    let e = table.energies();
    Ok(log_sum_exp_by(e.len(), |i| {
        (e[i] >= lo && e[i] <= hi).then(|| scale * e[i])
    }))
}

/// A table paired with an inverse temperature and its partition function.
#[derive(Debug, Clone)]
pub struct GibbsContext<'a> {
    table: &'a EnergyTable,
    beta: f64,
    log_z: f64,
}

impl<'a> GibbsContext<'a> {
    pub fn new(table: &'a EnergyTable, beta: f64) -> Result<Self> {
        let log_z = log_partition(table, beta)?;
        Ok(Self { table, beta, log_z })
    }

    pub fn table(&self) -> &'a EnergyTable {
        self.table
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// `μ_β(σ)` for one configuration.
    pub fn probability(&self, bits: u64) -> f64 {
        (self.beta * self.table.n() as f64 * self.table.energy(bits) - self.log_z).exp()
    }

    /// `μ_β(A)` for a set of configuration bits.
    pub fn mass_of(&self, members: &[u64]) -> f64 {
        let scale = self.beta * self.table.n() as f64;
        let e = self.table.energies();
        let lse = log_sum_exp_by(members.len(), |i| Some(scale * e[members[i] as usize]));
        (lse - self.log_z).exp().min(1.0)
    }

    pub fn mass(&self, set: &LevelSet) -> Result<f64> {
        same_n(self.table.n(), set.n())?;
        Ok(self.mass_of(set.members()))
    }

    /// Gibbs average `⟨H⟩_μ`.
    pub fn mean_energy(&self) -> f64 {
        let e = self.table.energies();
        let scale = self.beta * self.table.n() as f64;
        let weights: Vec<f64> = e.par_iter().map(|&h| (scale * h - self.log_z).exp()).collect();
        pairwise_sum(&weights.iter().zip(e).map(|(w, h)| w * h).collect::<Vec<_>>())
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Gibbs mass inside and outside `𝔻(β, κ) = {|H/√(2 ln 2) − γ*| ≤ κ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDominance {
    pub beta: f64,
    pub kappa: f64,
    pub log_z: f64,
    /// `−∞` for an empty band, written as `null`.
    #[serde(with = "neg_inf_as_null")]
    pub log_z_band: f64,
    pub mass_in_band: f64,
    pub mass_out: f64,
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < FRAC_1_SQRT_2 {
        Ok(())
    } else {
        Err(invalid("kappa", format!("{kappa} is not in (0, 1/√2)")))
    }
}

pub fn band_dominance(table: &EnergyTable, beta: f64, kappa: f64) -> Result<BandDominance> {
    check_kappa(kappa)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("{beta} is not positive")));
    }
    let g = gamma_star(beta);
    let log_z = log_partition(table, beta)?;
    let log_z_band = restricted_log_partition(table, beta, g - kappa, g + kappa)?;
    let (lo, hi) = ((g - kappa) * SQRT_2LN2, (g + kappa) * SQRT_2LN2);
    let scale = beta * table.n() as f64;
    let e = table.energies();
    let log_z_out = log_sum_exp_by(e.len(), |i| (e[i] < lo || e[i] > hi).then(|| scale * e[i]));
    Ok(BandDominance {
        beta,
        kappa,
        log_z,
        log_z_band,
        mass_in_band: (log_z_band - log_z).exp().min(1.0),
        mass_out: (log_z_out - log_z).exp().min(1.0),
    })
}

/// The members of `𝔻(β, κ)`.
pub fn band_set(table: &EnergyTable, beta: f64, kappa: f64) -> Result<LevelSet> {
    check_kappa(kappa)?;
    let g = gamma_star(beta);
    level_set(table, g - kappa, g + kappa, EnergyUnit::SqrtTwoLnTwo)
}

/// One `(β, κ)` row of a band scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub n: usize,
    pub p: usize,
    pub mode: String,
    pub seed: u64,
    pub beta: f64,
    pub kappa: f64,
    pub log_z: f64,
    pub band_mass: f64,
}

impl BandRow {
    pub const HEADER: &'static str = "n,p,mode,seed,beta,kappa,log_z,band_mass";

    pub fn new(table: &EnergyTable, band: &BandDominance) -> Self {
        Self {
            n: table.n(),
            p: table.p(),
            mode: table.mode().name().to_string(),
            seed: table.seed(),
            beta: band.beta,
            kappa: band.kappa,
            log_z: band.log_z,
            band_mass: band.mass_in_band,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.n, self.p, self.mode, self.seed, self.beta, self.kappa, self.log_z, self.band_mass
        )
    }
}
