//! Contrast vectors, model matrices, and the partial-aliasing
//! decomposition of arbitrary per-run weight vectors.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::design::Run;
use crate::error::{Error, Result};
use crate::word::EffectWord;

/// Signed ±1 (or 0 for excluded runs) entries of an effect word evaluated
/// over an ordered run list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastVector(pub Vec<i8>);

impl ContrastVector {
    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &ContrastVector) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a as i64 * b as i64)
            .sum()
    }
}

/// Entry j is the product of run j's levels over the word's factors, times
/// the word's sign; the mean word yields all +1.
pub fn contrast_vector(word: &EffectWord, runs: &[Run]) -> Result<ContrastVector> {
    if let Some(run) = runs.first() {
        if word.max_factor() > run.k() {
            return Err(Error::InvalidArgument(format!(
                "word {word} uses a factor beyond the run dimension {}",
                run.k()
            )));
        }
    }
    Ok(ContrastVector(
        runs.iter().map(|r| r.word_level(word)).collect(),
    ))
}

/// The full-factorial model matrix G: rows are contrast vectors in
/// canonical word order, columns are runs in canonical run order.
#[derive(Debug, Clone)]
pub struct ModelMatrix {
    words: Vec<EffectWord>,
    rows: Vec<ContrastVector>,
}

impl ModelMatrix {
    pub fn words(&self) -> &[EffectWord] {
        &self.words
    }

    pub fn rows(&self) -> &[ContrastVector] {
        &self.rows
    }

    pub fn row(&self, word: &EffectWord) -> Option<&ContrastVector> {
        self.words
            .iter()
            .position(|w| w == &word.unsigned())
            .map(|i| &self.rows[i])
    }

    /// Column j of G, i.e. the vector h_j of the word levels of run j.
    pub fn column(&self, j: usize) -> Vec<i8> {
        self.rows.iter().map(|r| r.0[j]).collect()
    }

    pub fn dim(&self) -> usize {
        self.words.len()
    }
}

pub const MAX_DENSE_FACTORS: u8 = 12;

/// Dense `2^k x 2^k` model matrix; satisfies G Gᵀ = 2^k I.
pub fn model_matrix(k: u8) -> Result<ModelMatrix> {
    if !(1..=MAX_DENSE_FACTORS).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "dense model matrix requires 1..={MAX_DENSE_FACTORS} factors, got {k}"
        )));
    }
    let runs = crate::design::full_factorial_runs(k)?;
    let words = EffectWord::canonical_order(k);
    let rows = words
        .iter()
        .map(|w| contrast_vector(w, &runs))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelMatrix { words, rows })
}

/// An exact-rational coefficient on each effect word, in canonical order
/// with zero coefficients omitted.
pub type EstimandMap = BTreeMap<EffectWord, BigRational>;

/// Renders an estimand map in display style, e.g.
/// `t(1) + (-t(13)+t(23)+t(123))/3`.
pub fn format_estimand(map: &EstimandMap) -> String {
    if map.is_empty() {
        return "0".to_string();
    }
    let mut parts = Vec::new();
    for (w, c) in map {
        let name = if w.is_mean() {
            "t(0)".to_string()
        } else {
            format!("t({w})")
        };
        if c.is_one() {
            parts.push(format!("+ {name}"));
        } else if (-c.clone()).is_one() {
            parts.push(format!("- {name}"));
        } else if c.numer() >= &BigInt::zero() {
            parts.push(format!("+ {c}*{name}"));
        } else {
            parts.push(format!("- {}*{name}", -c.clone()));
        }
    }
    let joined = parts.join(" ");
    joined.strip_prefix("+ ").unwrap_or(&joined).to_string()
}

/// Expresses the weighted sum of mean potential outcomes,
/// `Σ_j w_j · Ȳ(z_j)` over the full `2^k` factorial runs, as a linear
/// combination of factorial effects. Returns exact rational coefficients;
/// the mean coefficient is on the τ(0) scale.
pub fn partial_alias_decomposition(weights: &[BigRational], k: u8) -> Result<EstimandMap> {
    let runs = crate::design::full_factorial_runs(k)?;
    if weights.len() != runs.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} weights for k={k}, got {}",
            runs.len(),
            weights.len()
        )));
    }
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut map = EstimandMap::new();
    for word in EffectWord::canonical_order(k) {
        let mut coeff = BigRational::zero();
        for (j, run) in runs.iter().enumerate() {
            if weights[j].is_zero() {
                continue;
            }
            let g = run.word_level(&word);
            if g > 0 {
                coeff += &weights[j];
            } else {
                coeff -= &weights[j];
            }
        }
        // Ȳ(z_j) = (1/2) h_j τ with the first τ entry being 2τ(0), so the
        // τ(0) coefficient is the plain weight sum.
        if !word.is_mean() {
            coeff *= &half;
        }
        if !coeff.is_zero() {
            map.insert(word, coeff);
        }
    }
    Ok(map)
}

/// Convenience: integer weights.
pub fn rationals(numers: &[i64], denom: i64) -> Vec<BigRational> {
    numers
        .iter()
        .map(|&n| BigRational::new(BigInt::from(n), BigInt::from(denom)))
        .collect()
}
