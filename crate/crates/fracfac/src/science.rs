//! Exact finite-population oracle over a complete science table.
//!
//! Everything here works in exact rational arithmetic so enumeration
//! identities can be checked without float tolerance. Science tables are
//! for simulation and oracle testing only; nothing in the estimation path
//! depends on them.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::design::{DesignSpec, Run};
use crate::error::{Error, Result};
use crate::word::EffectWord;

pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// Complete potential-outcome matrix: n units by the full `2^k` runs in
/// canonical run order.
#[derive(Debug, Clone)]
pub struct ScienceTable {
    k: u8,
    rows: Vec<Vec<BigRational>>,
}

impl ScienceTable {
    pub fn new(k: u8, rows: Vec<Vec<BigRational>>) -> Result<Self> {
        let j = 1usize << k;
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "science table must have units".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != j) {
            return Err(Error::InvalidArgument(format!(
                "every science-table row must have {j} outcomes"
            )));
        }
        Ok(ScienceTable { k, rows })
    }

    pub fn from_integers(k: u8, rows: &[Vec<i64>]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| BigRational::from(BigInt::from(v)))
                    .collect()
            })
            .collect();
        ScienceTable::new(k, rows)
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn n_units(&self) -> usize {
        self.rows.len()
    }

    pub fn run_count(&self) -> usize {
        1 << self.k
    }

    pub fn outcome(&self, unit: usize, run: usize) -> &BigRational {
        &self.rows[unit][run]
    }

    /// Mean potential outcome for one full-lattice run.
    pub fn column_mean(&self, run: usize) -> BigRational {
        let sum: BigRational = self.rows.iter().map(|r| r[run].clone()).sum();
        sum / BigRational::from(BigInt::from(self.n_units()))
    }

    /// Indices into the full lattice for each run of a design.
    pub fn design_columns(&self, design: &DesignSpec) -> Result<Vec<usize>> {
        if design.k() != self.k {
            return Err(Error::InvalidArgument("design dimension mismatch".into()));
        }
        Ok(design.runs()?.iter().map(Run::canonical_index).collect())
    }

    /// Aliased unit-level effect `2^-(K-p-1) g*ᵀ Y_{*i}` (mean word scale
    /// `2^-(K-p)`).
    pub fn unit_effect(
        &self,
        unit: usize,
        design: &DesignSpec,
        word: &EffectWord,
    ) -> Result<BigRational> {
        let runs = design.runs()?;
        let cols = self.design_columns(design)?;
        let mut acc = BigRational::zero();
        for (run, &col) in runs.iter().zip(&cols) {
            let level = run.word_level(word);
            if level > 0 {
                acc += &self.rows[unit][col];
            } else {
                acc -= &self.rows[unit][col];
            }
        }
        Ok(acc * rational_scale(design, word))
    }

    /// Finite-population effect `τ̃(word)` over the design.
    pub fn true_effect(&self, design: &DesignSpec, word: &EffectWord) -> Result<BigRational> {
        let mut sum = BigRational::zero();
        for i in 0..self.n_units() {
            sum += self.unit_effect(i, design, word)?;
        }
        Ok(sum / BigRational::from(BigInt::from(self.n_units())))
    }
}

fn rational_scale(design: &DesignSpec, word: &EffectWord) -> BigRational {
    let exp = design.k() as u32 - design.p() as u32 - if word.is_mean() { 0 } else { 1 };
    BigRational::new(BigInt::one(), BigInt::from(1u64 << exp))
}

fn big(n: usize) -> BigRational {
    BigRational::from(BigInt::from(n))
}

/// Finite-population variance components for a design: the per-run
/// variances `S²(z*_j)`, and the word-level `S̃²_k` and cross `S̃²_{k,k'}`
/// terms, all with divisor n - 1.
#[derive(Debug, Clone)]
pub struct PopulationComponents {
    design: DesignSpec,
    table: ScienceTable,
    cols: Vec<usize>,
}

pub fn finite_population_components(
    table: &ScienceTable,
    design: &DesignSpec,
) -> Result<PopulationComponents> {
    if table.n_units() < 2 {
        return Err(Error::UndefinedComponents);
    }
    let cols = table.design_columns(design)?;
    Ok(PopulationComponents {
        design: design.clone(),
        table: table.clone(),
        cols,
    })
}

impl PopulationComponents {
    /// `S²(z*_j)` for design run j.
    pub fn run_variance(&self, j: usize) -> BigRational {
        let col = self.cols[j];
        let mean = self.table.column_mean(col);
        let n = self.table.n_units();
        let ss: BigRational = (0..n)
            .map(|i| {
                let d = self.table.outcome(i, col) - &mean;
                &d * &d
            })
            .sum();
        ss / big(n - 1)
    }

    /// `S̃²_k`: variance of the aliased unit-level effects.
    pub fn effect_variance(&self, word: &EffectWord) -> Result<BigRational> {
        self.effect_covariance(word, word)
    }

    /// `S̃²_{k,k'}`: covariance of two sets of aliased unit-level effects.
    pub fn effect_covariance(
        &self,
        word_a: &EffectWord,
        word_b: &EffectWord,
    ) -> Result<BigRational> {
        let n = self.table.n_units();
        let ta = self.table.true_effect(&self.design, word_a)?;
        let tb = self.table.true_effect(&self.design, word_b)?;
        let mut acc = BigRational::zero();
        for i in 0..n {
            let da = self.table.unit_effect(i, &self.design, word_a)? - &ta;
            let db = self.table.unit_effect(i, &self.design, word_b)? - &tb;
            acc += da * db;
        }
        Ok(acc / big(n - 1))
    }

    /// The exact randomization variance from the closed form:
    /// `2^-2(K-p-1) Σ_j S²(z*_j)/n_j - S̃²_k/n`.
    pub fn closed_form_variance(
        &self,
        word: &EffectWord,
        group_sizes: &[usize],
    ) -> Result<BigRational> {
        let scale = rational_scale(&self.design, word);
        let sum: BigRational = (0..self.cols.len())
            .map(|j| self.run_variance(j) / big(group_sizes[j]))
            .sum();
        let n = self.table.n_units();
        Ok(&scale * &scale * sum - self.effect_variance(word)? / big(n))
    }

    /// The exact randomization covariance from the closed form.
    pub fn closed_form_covariance(
        &self,
        word_a: &EffectWord,
        word_b: &EffectWord,
        group_sizes: &[usize],
    ) -> Result<BigRational> {
        let scale = rational_scale(&self.design, word_a);
        let runs = self.design.runs()?;
        let mut sum = BigRational::zero();
        for (j, run) in runs.iter().enumerate() {
            let term = self.run_variance(j) / big(group_sizes[j]);
            if run.word_level(word_a) == run.word_level(word_b) {
                sum += term;
            } else {
                sum -= term;
            }
        }
        let n = self.table.n_units();
        Ok(&scale * &scale * sum - self.effect_covariance(word_a, word_b)? / big(n))
    }
}

fn multinomial(group_sizes: &[usize]) -> u128 {
    let n: usize = group_sizes.iter().sum();
    let mut count: u128 = 1;
    let mut remaining = n;
    for &g in group_sizes {
        // C(remaining, g)
        let mut c: u128 = 1;
        for i in 0..g {
            c = c * (remaining - i) as u128 / (i + 1) as u128;
        }
        count = count.saturating_mul(c);
        remaining -= g;
    }
    count
}

/// Visits every assignment of `n` units to groups with the given fixed
/// sizes exactly once. The visitor receives the group index per unit.
pub fn for_each_assignment<F: FnMut(&[usize])>(
    group_sizes: &[usize],
    mut visit: F,
) -> Result<u128> {
    let total = multinomial(group_sizes);
    if total > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(total));
    }
    let n: usize = group_sizes.iter().sum();
    let mut remaining = group_sizes.to_vec();
    let mut assignment = vec![0usize; n];
    let mut visited: u128 = 0;
    fn recurse<F: FnMut(&[usize])>(
        unit: usize,
        n: usize,
        remaining: &mut [usize],
        assignment: &mut [usize],
        visited: &mut u128,
        visit: &mut F,
    ) {
        if unit == n {
            *visited += 1;
            visit(assignment);
            return;
        }
        for g in 0..remaining.len() {
            if remaining[g] > 0 {
                remaining[g] -= 1;
                assignment[unit] = g;
                recurse(unit + 1, n, remaining, assignment, visited, visit);
                remaining[g] += 1;
            }
        }
    }
    recurse(
        0,
        n,
        &mut remaining,
        &mut assignment,
        &mut visited,
        &mut visit,
    );
    debug_assert_eq!(visited, total);
    Ok(visited)
}

/// The estimator value for one realized assignment, computed exactly from
/// the science table.
fn assignment_estimate(
    table: &ScienceTable,
    cols: &[usize],
    runs: &[Run],
    group_sizes: &[usize],
    word: &EffectWord,
    scale: &BigRational,
    assignment: &[usize],
) -> BigRational {
    let mut sums = vec![BigRational::zero(); cols.len()];
    for (unit, &g) in assignment.iter().enumerate() {
        sums[g] += table.outcome(unit, cols[g]);
    }
    let mut acc = BigRational::zero();
    for (j, run) in runs.iter().enumerate() {
        let mean = &sums[j] / big(group_sizes[j]);
        if run.word_level(word) > 0 {
            acc += mean;
        } else {
            acc -= mean;
        }
    }
    acc * scale.clone()
}

/// Exact expectation and variance of the effect estimator over every
/// assignment with the given group sizes.
pub fn oracle_randomization_moments(
    table: &ScienceTable,
    design: &DesignSpec,
    group_sizes: &[usize],
    word: &EffectWord,
) -> Result<(BigRational, BigRational)> {
    let runs = design.runs()?;
    if group_sizes.len() != runs.len() {
        return Err(Error::InvalidArgument(
            "group size vector length mismatch".into(),
        ));
    }
    if group_sizes.iter().sum::<usize>() != table.n_units() {
        return Err(Error::InvalidArgument(
            "group sizes must sum to the unit count".into(),
        ));
    }
    let cols = table.design_columns(design)?;
    let scale = rational_scale(design, word);
    let mut sum = BigRational::zero();
    let mut sum_sq = BigRational::zero();
    let count = for_each_assignment(group_sizes, |assignment| {
        let t = assignment_estimate(table, &cols, &runs, group_sizes, word, &scale, assignment);
        sum += &t;
        sum_sq += &t * &t;
    })?;
    let count = BigRational::from(BigInt::from(count));
    let mean = sum / &count;
    let var = sum_sq / &count - &mean * &mean;
    Ok((mean, var))
}

/// Exact covariance of two effect estimators over the assignment orbit.
pub fn oracle_randomization_covariance(
    table: &ScienceTable,
    design: &DesignSpec,
    group_sizes: &[usize],
    word_a: &EffectWord,
    word_b: &EffectWord,
) -> Result<BigRational> {
    let runs = design.runs()?;
    let cols = table.design_columns(design)?;
    let scale_a = rational_scale(design, word_a);
    let scale_b = rational_scale(design, word_b);
    let mut sum_a = BigRational::zero();
    let mut sum_b = BigRational::zero();
    let mut sum_ab = BigRational::zero();
    let count = for_each_assignment(group_sizes, |assignment| {
        let ta = assignment_estimate(
            table,
            &cols,
            &runs,
            group_sizes,
            word_a,
            &scale_a,
            assignment,
        );
        let tb = assignment_estimate(
            table,
            &cols,
            &runs,
            group_sizes,
            word_b,
            &scale_b,
            assignment,
        );
        sum_ab += &ta * &tb;
        sum_a += ta;
        sum_b += tb;
    })?;
    let count = BigRational::from(BigInt::from(count));
    Ok(sum_ab / &count - (sum_a / &count) * (sum_b / &count))
}

/// Exact expectation over the assignment orbit of the conservative Neyman
/// variance estimator (and of the covariance estimator when two distinct
/// words are given). All group sizes must be at least 2.
pub fn oracle_expected_neyman(
    table: &ScienceTable,
    design: &DesignSpec,
    group_sizes: &[usize],
    word_a: &EffectWord,
    word_b: &EffectWord,
) -> Result<BigRational> {
    if group_sizes.iter().any(|&g| g < 2) {
        return Err(Error::VarianceUnavailable(
            "group with fewer than 2 units".into(),
        ));
    }
    let runs = design.runs()?;
    let cols = table.design_columns(design)?;
    let scale = rational_scale(design, word_a);
    let mut sum = BigRational::zero();
    let count = for_each_assignment(group_sizes, |assignment| {
        // per-group sample variances for this assignment
        let mut acc = BigRational::zero();
        for (j, run) in runs.iter().enumerate() {
            let members: Vec<usize> = assignment
                .iter()
                .enumerate()
                .filter(|(_, &g)| g == j)
                .map(|(u, _)| u)
                .collect();
            let mean: BigRational = members
                .iter()
                .map(|&u| table.outcome(u, cols[j]).clone())
                .sum::<BigRational>()
                / big(members.len());
            let ss: BigRational = members
                .iter()
                .map(|&u| {
                    let d = table.outcome(u, cols[j]) - &mean;
                    &d * &d
                })
                .sum();
            let s2 = ss / big(members.len() - 1);
            let term = s2 / big(group_sizes[j]);
            let agree = run.word_level(word_a) == run.word_level(word_b);
            if agree {
                acc += term;
            } else {
                acc -= term;
            }
        }
        sum += &scale * &scale * acc;
    })?;
    Ok(sum / BigRational::from(BigInt::from(count)))
}

/// Converts an exact rational to f64 for reporting.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_positive() {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    })
}
