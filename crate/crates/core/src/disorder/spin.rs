use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest system size a packed configuration can hold.
pub const MAX_SPINS: u32 = 63;

/// A point of the hypercube `{-1, +1}^n`, packed so that bit `i` set means spin `i` is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig {
    bits: u64,
    n: u32,
}

#[inline]
pub(crate) fn mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl SpinConfig {
    pub fn new(bits: u64, n: u32) -> Result<Self> {
        if n == 0 || n > MAX_SPINS {
            return Err(invalid("n", format!("{n} is not in 1..={MAX_SPINS}")));
        }
        if bits & !mask(n) != 0 {
            return Err(invalid("bits", format!("{bits:#x} has bits beyond position {}", n - 1)));
        }
        Ok(Self { bits, n })
    }

    pub fn all_plus(n: u32) -> Result<Self> {
        Self::new(mask(n), n)
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let n = spins.len() as u32;
        let mut bits = 0u64;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                other => return Err(invalid("spins", format!("entry {i} is {other}, expected ±1"))),
            }
        }
        Self::new(bits, n)
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn n(self) -> u32 {
        self.n
    }

    #[inline]
    pub fn spin(self, i: usize) -> i8 {
        if (self.bits >> i) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_spins(self) -> Vec<i8> {
        (0..self.n as usize).map(|i| self.spin(i)).collect()
    }

    /// The configuration `-σ`.
    pub fn complement(self) -> Self {
        Self {
            bits: !self.bits & mask(self.n),
            n: self.n,
        }
    }

    pub fn hamming(self, other: Self) -> Result<u32> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n as usize,
                actual: other.n as usize,
            });
        }
        Ok((self.bits ^ other.bits).count_ones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_stray_bits() {
        assert!(SpinConfig::new(0b1_0000, 4).is_err());
        assert!(SpinConfig::new(0b1111, 4).is_ok());
        assert!(SpinConfig::new(0, 0).is_err());
    }

    #[test]
    fn complement_flips_everything() {
        let s = SpinConfig::new(0b0101, 4).unwrap();
        assert_eq!(s.complement().bits(), 0b1010);
        assert_eq!(s.hamming(s.complement()).unwrap(), 4);
    }

    proptest! {
        #[test]
        fn spins_round_trip(n in 1u32..=MAX_SPINS, raw in any::<u64>()) {
            let s = SpinConfig::new(raw & mask(n), n).unwrap();
            let back = SpinConfig::from_spins(&s.to_spins()).unwrap();
            prop_assert_eq!(s, back);
        }
    }
}
