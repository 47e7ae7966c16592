//! Signed effect words: the universal index for factorial estimands.
//!
//! A word is a subset of factors together with a sign. The empty word with
//! positive sign is the identity `I` (the mean term). Words form a group
//! under the signed product, where the factor sets combine by symmetric
//! difference and the signs multiply; every word is self-inverse up to sign.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

pub const MAX_FACTORS: u8 = 20;

/// A signed subset of factors in `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EffectWord {
    mask: u32,
    negative: bool,
}

impl EffectWord {
    /// The identity word `+I` (the mean term).
    pub fn mean() -> Self {
        EffectWord {
            mask: 0,
            negative: false,
        }
    }

    /// The main-effect word for a single factor.
    pub fn main(factor: u8) -> Self {
        assert!((1..=MAX_FACTORS).contains(&factor));
        EffectWord {
            mask: 1 << (factor - 1),
            negative: false,
        }
    }

    /// Builds a positive word from distinct factor indices.
    pub fn from_factors(factors: &[u8]) -> Result<Self> {
        let mut mask = 0u32;
        for &f in factors {
            if !(1..=MAX_FACTORS).contains(&f) {
                return Err(Error::InvalidArgument(format!(
                    "factor index {f} out of range 1..={MAX_FACTORS}"
                )));
            }
            let bit = 1 << (f - 1);
            if mask & bit != 0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate factor index {f}"
                )));
            }
            mask |= bit;
        }
        Ok(EffectWord {
            mask,
            negative: false,
        })
    }

    pub(crate) fn from_mask(mask: u32, negative: bool) -> Self {
        EffectWord { mask, negative }
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn is_mean(&self) -> bool {
        self.mask == 0
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn sign(&self) -> i8 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    /// Number of factors in the word.
    pub fn len(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Ascending factor indices.
    pub fn factors(&self) -> Vec<u8> {
        (1..=MAX_FACTORS)
            .filter(|&f| self.mask & (1 << (f - 1)) != 0)
            .collect()
    }

    pub fn contains(&self, factor: u8) -> bool {
        factor >= 1 && self.mask & (1 << (factor - 1)) != 0
    }

    /// Signed product: symmetric difference of factor sets, signs multiply.
    pub fn product(&self, other: &EffectWord) -> EffectWord {
        EffectWord {
            mask: self.mask ^ other.mask,
            negative: self.negative != other.negative,
        }
    }

    pub fn negated(&self) -> EffectWord {
        EffectWord {
            mask: self.mask,
            negative: !self.negative,
        }
    }

    /// The same word with positive sign.
    pub fn unsigned(&self) -> EffectWord {
        EffectWord {
            mask: self.mask,
            negative: false,
        }
    }

    pub fn with_sign(&self, negative: bool) -> EffectWord {
        EffectWord {
            mask: self.mask,
            negative,
        }
    }

    /// Largest factor index used, or 0 for the mean.
    pub fn max_factor(&self) -> u8 {
        (32 - self.mask.leading_zeros()) as u8
    }

    /// Canonical order key: words grouped by length, lexicographic within
    /// length on the ascending factor sequence. Ignores sign.
    pub fn canonical_cmp(&self, other: &EffectWord) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.factors().cmp(&other.factors()))
    }

    /// All `2^k` positive words over `k` factors in canonical order:
    /// mean, mains ascending, then grouped by length and lexicographic.
    pub fn canonical_order(k: u8) -> Vec<EffectWord> {
        let mut words: Vec<EffectWord> = (0u32..1 << k)
            .map(|mask| EffectWord {
                mask,
                negative: false,
            })
            .collect();
        words.sort_by(|a, b| a.canonical_cmp(b));
        words
    }
}

impl PartialOrd for EffectWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EffectWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_cmp(other)
            .then_with(|| self.negative.cmp(&other.negative))
    }
}

fn factor_char(f: u8) -> char {
    if f <= 9 {
        (b'0' + f) as char
    } else {
        // factors 10..=20 print as a..k
        (b'a' + (f - 10)) as char
    }
}

pub(crate) fn factor_from_char(c: char) -> Option<u8> {
    match c {
        '1'..='9' => Some(c as u8 - b'0'),
        'a'..='k' => Some(c as u8 - b'a' + 10),
        _ => None,
    }
}

impl fmt::Display for EffectWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-")?;
        }
        if self.is_mean() {
            write!(f, "I")
        } else {
            for fac in self.factors() {
                write!(f, "{}", factor_char(fac))?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_identity() {
        let w = EffectWord::from_factors(&[1, 3]).unwrap();
        assert_eq!(w.product(&EffectWord::mean()), w);
        assert_eq!(EffectWord::mean().product(&w), w);
    }

    #[test]
    fn words_are_self_inverse() {
        let w = EffectWord::from_factors(&[2, 4, 5]).unwrap();
        assert_eq!(w.product(&w), EffectWord::mean());
        let neg = w.negated();
        assert_eq!(neg.product(&neg), EffectWord::mean());
        assert_eq!(w.product(&neg), EffectWord::mean().negated());
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(EffectWord::from_factors(&[0]).is_err());
        assert!(EffectWord::from_factors(&[21]).is_err());
        assert!(EffectWord::from_factors(&[1, 1]).is_err());
    }

    #[test]
    fn canonical_order_k3() {
        let order: Vec<String> = EffectWord::canonical_order(3)
            .iter()
            .map(|w| w.to_string())
            .collect();
        assert_eq!(order, ["I", "1", "2", "3", "12", "13", "23", "123"]);
    }

    #[test]
    fn canonical_order_is_lexicographic_within_length() {
        let order: Vec<String> = EffectWord::canonical_order(4)
            .iter()
            .filter(|w| w.len() == 2)
            .map(|w| w.to_string())
            .collect();
        assert_eq!(order, ["12", "13", "14", "23", "24", "34"]);
    }

    #[test]
    fn display_letters_for_high_factors() {
        let w = EffectWord::from_factors(&[9, 10, 20]).unwrap();
        assert_eq!(w.to_string(), "9ak");
        assert_eq!(w.negated().to_string(), "-9ak");
    }
}
