use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spin::{SpinConfig, MAX_SPINS};
use super::tensor::{CouplingTensor, EnsembleAngle, MemoryBudget};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// How the `2ⁿ` energies of one disorder realization are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Direct contraction of a seeded coupling tensor.
    ExactTensor,
    /// Joint Gaussian sample with the exact `p`-spin covariance, via Cholesky.
    GramCholesky,
    /// Independent `N(0, 1/n)` energies (the `p → ∞` limit).
    RemLimit,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::ExactTensor => 0,
            Mode::GramCholesky => 1,
            Mode::RemLimit => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Mode::ExactTensor),
            1 => Ok(Mode::GramCholesky),
            2 => Ok(Mode::RemLimit),
            other => Err(Error::Format(format!("unknown mode code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::ExactTensor => "exact-tensor",
            Mode::GramCholesky => "gram-cholesky",
            Mode::RemLimit => "rem-limit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact-tensor" | "exact" | "tensor" => Ok(Mode::ExactTensor),
            "gram-cholesky" | "gram" | "cholesky" => Ok(Mode::GramCholesky),
            "rem-limit" | "rem" => Ok(Mode::RemLimit),
            _ => Err(invalid("mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Work and size caps for table construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildLimits {
    /// Maximum `2ⁿ · nᵖ` multiply-adds for [`Mode::ExactTensor`].
    pub exact_work: f64,
    /// Largest `n` accepted by [`Mode::GramCholesky`].
    pub gram_max_n: usize,
    /// Largest `n` accepted by [`Mode::RemLimit`].
    pub rem_max_n: usize,
    /// Diagonal jitter added to the Gram covariance before factorizing.
    pub gram_jitter: f64,
    pub memory: MemoryBudget,
}

impl Default for BuildLimits {
    fn default() -> Self {
        Self {
            exact_work: 1e10,
            gram_max_n: 12,
            rem_max_n: 28,
            gram_jitter: 1e-10,
            memory: MemoryBudget::from_env(),
        }
    }
}

impl BuildLimits {
    /// Default mode for a size: exact if affordable, then Gram, then REM.
    pub fn select_mode(&self, n: usize, p: usize) -> Mode {
        if exact_work(n, p) <= self.exact_work {
            Mode::ExactTensor
        } else if n <= self.gram_max_n {
            Mode::GramCholesky
        } else {
            Mode::RemLimit
        }
    }
}

fn exact_work(n: usize, p: usize) -> f64 {
    2f64.powi(n as i32) * (n as f64).powi(p as i32)
}

/// Every energy of one disorder realization, indexed by configuration bits.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    n: usize,
    p: usize,
    mode: Mode,
    seed: u64,
    energies: Vec<f64>,
}

impl EnergyTable {
    /// Wraps precomputed energies, e.g. hand-set fixtures or decoded files.
    pub fn from_energies(n: usize, p: usize, mode: Mode, seed: u64, energies: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_SPINS as usize {
            return Err(invalid("n", format!("{n} is not in 1..={MAX_SPINS}")));
        }
        let len = 1usize
            .checked_shl(n as u32)
            .ok_or_else(|| invalid("n", "table length overflows"))?;
        if energies.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: energies.len(),
            });
        }
        if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
            return Err(invalid("energies", format!("entry {i} is not finite")));
        }
        Ok(Self {
            n,
            p,
            mode,
            seed,
            energies,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    #[inline]
    pub fn energy(&self, bits: u64) -> f64 {
        self.energies[bits as usize]
    }

    pub fn energy_of(&self, config: SpinConfig) -> Result<f64> {
        if config.n() as usize != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: config.n() as usize,
            });
        }
        Ok(self.energy(config.bits()))
    }

    /// Energies of `cos(τ)·base + sin(τ)·fresh`.
    ///
    /// Energies are linear in the couplings, so for [`Mode::ExactTensor`] this is
    /// the table of [`CouplingTensor::correlated`]; in the other modes it is the
    /// interpolated Gaussian field with the same covariance structure.
    pub fn correlated(base: &Self, fresh: &Self, angle: EnsembleAngle) -> Result<Self> {
        if base.n != fresh.n || base.p != fresh.p || base.mode != fresh.mode {
            return Err(invalid("fresh", "table parameters differ from the base table"));
        }
        if base.seed == fresh.seed {
            return Err(invalid("fresh", format!("shares seed {} with the base table", base.seed)));
        }
        let (c, s) = (angle.cos(), angle.sin());
        let energies = base
            .energies
            .iter()
            .zip(&fresh.energies)
            .map(|(a, b)| c * a + s * b)
            .collect();
        Ok(Self {
            energies,
            ..base.clone()
        })
    }
}

/// Builds the energy table for `(n, p, seed)` in the requested mode.
pub fn build_energy_table(n: usize, p: usize, seed: u64, mode: Mode) -> Result<EnergyTable> {
    build_energy_table_with(n, p, seed, mode, &BuildLimits::default())
}

pub fn build_energy_table_with(
    n: usize,
    p: usize,
    seed: u64,
    mode: Mode,
    limits: &BuildLimits,
) -> Result<EnergyTable> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if p < 2 {
        return Err(invalid("p", format!("{p} is below 2")));
    }
    if n > MAX_SPINS as usize {
        return Err(invalid("n", format!("{n} exceeds {MAX_SPINS}")));
    }
    let size = 1usize << n;
    limits.memory.check_f64s("energy table", size as f64)?;
    let energies = match mode {
        Mode::ExactTensor => {
            let work = exact_work(n, p);
            if work > limits.exact_work {
                return Err(Error::BudgetExceeded {
                    what: "exact tensor contraction",
                    required: work,
                    limit: limits.exact_work,
                });
            }
            let tensor = CouplingTensor::generate_with_budget(n, p, seed, true, limits.memory)?;
            exact_energies(&tensor)
        }
        Mode::GramCholesky => {
            if n > limits.gram_max_n {
                return Err(Error::BudgetExceeded {
                    what: "gram covariance size n",
                    required: n as f64,
                    limit: limits.gram_max_n as f64,
                });
            }
            limits.memory.check_f64s("gram covariance", (size * size) as f64)?;
            gram_energies(n, p, seed, limits.gram_jitter)?
        }
        Mode::RemLimit => {
            if n > limits.rem_max_n {
                return Err(Error::BudgetExceeded {
                    what: "rem table size n",
                    required: n as f64,
                    limit: limits.rem_max_n as f64,
                });
            }
            let sd = 1.0 / (n as f64).sqrt();
            (0..size as u64)
                .into_par_iter()
                .map(|i| sd * rng::normal(seed, Stream::Rem, i))
                .collect()
        }
    };
    EnergyTable::from_energies(n, p, mode, seed, energies)
}

/// Evaluates every configuration against a tensor (any storage).
pub fn exact_energies(tensor: &CouplingTensor) -> Vec<f64> {
    let size = 1u64 << tensor.n();
    (0..size)
        .into_par_iter()
        .map_init(Vec::new, |scratch, bits| tensor.energy_bits(bits, scratch))
        .collect()
}

/// Exact covariance `E[H(σ)H(σ')] = (⟨σ,σ'⟩/n)ᵖ / n` between two configurations.
pub fn pspin_covariance(n: usize, p: usize, a: u64, b: u64) -> f64 {
    let d = (a ^ b).count_ones() as f64;
    let overlap = (n as f64 - 2.0 * d) / n as f64;
    overlap.powi(p as i32) / n as f64
}

fn gram_energies(n: usize, p: usize, seed: u64, jitter: f64) -> Result<Vec<f64>> {
    let size = 1usize << n;
    // The covariance only depends on the Hamming distance.
    let by_distance: Vec<f64> = (0..=n)
        .map(|d| ((n as f64 - 2.0 * d as f64) / n as f64).powi(p as i32) / n as f64)
        .collect();
    let cov = DMatrix::from_fn(size, size, |i, j| {
        let d = (i ^ j).count_ones() as usize;
        by_distance[d] + if i == j { jitter } else { 0.0 }
    });
    let chol = cov.cholesky().ok_or_else(|| {
        Error::Factorization(format!(
            "gram covariance for n={n}, p={p} is not positive definite after {jitter:e} jitter"
        ))
    })?;
    let l = chol.l();
    let z: Vec<f64> = (0..size as u64).map(|i| rng::normal(seed, Stream::Gram, i)).collect();
    Ok((0..size)
        .into_par_iter()
        .map(|row| {
            let lrow = l.row(row);
            (0..=row).map(|k| lrow[k] * z[k]).sum()
        })
        .collect())
}

const MAGIC: &[u8; 4] = b"PSPN";
const FORMAT_VERSION: u16 = 1;

impl EnergyTable {
    /// Binary layout: 16-byte header (`PSPN`, version u16, mode u8, n u8, p u16,
    /// 6 pad bytes), u64 seed, then `2ⁿ` f64 energies; all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(MAGIC);
        header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        header[6] = self.mode.code();
        header[7] = self.n as u8;
        header[8..10].copy_from_slice(&(self.p as u16).to_le_bytes());
        out.write_all(&header)?;
        out.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.energies.len() * 8);
        for e in &self.energies {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut header = [0u8; 16];
        input.read_exact(&mut header).map_err(io)?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mode = Mode::from_code(header[6])?;
        let n = header[7] as usize;
        let p = u16::from_le_bytes([header[8], header[9]]) as usize;
        let mut seed = [0u8; 8];
        input.read_exact(&mut seed).map_err(io)?;
        if n == 0 || n > MAX_SPINS as usize {
            return Err(Error::Format(format!("n = {n} out of range")));
        }
        let mut raw = vec![0u8; 8usize << n];
        input.read_exact(&mut raw).map_err(io)?;
        let energies = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_energies(n, p, mode, u64::from_le_bytes(seed), energies)
    }

    /// CSV with header `bits,energy`; bits are written most significant spin first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bits,energy")?;
        for (i, e) in self.energies.iter().enumerate() {
            writeln!(out, "{:0width$b},{}", i, e, width = self.n)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rem_is_reproducible() {
        let a = build_energy_table(3, 2, 99, Mode::RemLimit).unwrap();
        let b = build_energy_table(3, 2, 99, Mode::RemLimit).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn exact_table_matches_direct_energy() {
        let t = build_energy_table(5, 3, 4, Mode::ExactTensor).unwrap();
        let tensor = CouplingTensor::generate(5, 3, 4, false).unwrap();
        for bits in 0..32u64 {
            let e = tensor.energy(SpinConfig::new(bits, 5).unwrap()).unwrap();
            assert!((t.energy(bits) - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_symmetry_exact() {
        for p in 2..=5 {
            let t = build_energy_table(5, p, 17, Mode::ExactTensor).unwrap();
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            for bits in 0..32u64 {
                let flipped = !bits & 31;
                assert!((t.energy(flipped) - sign * t.energy(bits)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_budgets() {
        let limits = BuildLimits {
            exact_work: 1e3,
            gram_max_n: 4,
            rem_max_n: 6,
            ..BuildLimits::default()
        };
        let over = |r: Result<EnergyTable>| matches!(r, Err(Error::BudgetExceeded { .. }));
        assert!(over(build_energy_table_with(5, 3, 1, Mode::ExactTensor, &limits)));
        assert!(over(build_energy_table_with(5, 3, 1, Mode::GramCholesky, &limits)));
        assert!(over(build_energy_table_with(7, 3, 1, Mode::RemLimit, &limits)));
        assert!(build_energy_table_with(6, 3, 1, Mode::RemLimit, &limits).is_ok());
    }

    #[test]
    fn default_mode_selection() {
        let limits = BuildLimits::default();
        assert_eq!(limits.select_mode(10, 3), Mode::ExactTensor);
        assert_eq!(limits.select_mode(12, 10), Mode::GramCholesky);
        assert_eq!(limits.select_mode(20, 10), Mode::RemLimit);
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let t = build_energy_table(4, 3, 0xDEAD_BEEF, Mode::GramCholesky).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 + 16 * 8);
        assert_eq!(&buf[..4], b"PSPN");
        assert_eq!(buf[6], 1);
        assert_eq!(buf[7], 4);
        assert_eq!(u16::from_le_bytes([buf[8], buf[9]]), 3);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 0xDEAD_BEEF);
        let back = EnergyTable::read_binary(&buf[..]).unwrap();
        assert_eq!(back, t);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(EnergyTable::read_binary(&bad[..]).is_err());
        assert!(EnergyTable::read_binary(&buf[..40]).is_err());
    }

    #[test]
    fn csv_rows() {
        let t = EnergyTable::from_energies(2, 2, Mode::RemLimit, 0, vec![0.0, 0.5, -1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bits,energy\n00,0\n01,0.5\n10,-1\n11,2\n");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EnergyTable::from_energies(1, 2, Mode::RemLimit, 0, vec![0.0, f64::NAN]).is_err());
        assert!(EnergyTable::from_energies(2, 2, Mode::RemLimit, 0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn correlated_table_matches_correlated_tensor() {
        let angle = EnsembleAngle::new(0.7).unwrap();
        let base = build_energy_table(5, 3, 1, Mode::ExactTensor).unwrap();
        let fresh = build_energy_table(5, 3, 2, Mode::ExactTensor).unwrap();
        let mixed = EnergyTable::correlated(&base, &fresh, angle).unwrap();
        let tb = CouplingTensor::generate(5, 3, 1, false).unwrap();
        let tf = CouplingTensor::generate(5, 3, 2, false).unwrap();
        let tm = CouplingTensor::correlated(&tb, &tf, angle).unwrap();
        for bits in 0..32u64 {
            let e = tm.energy(SpinConfig::new(bits, 5).unwrap()).unwrap();
            assert!((mixed.energy(bits) - e).abs() < 1e-12);
        }
        assert!(EnergyTable::correlated(&base, &base, angle).is_err());
    }
}
