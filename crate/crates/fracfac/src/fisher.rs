//! Fisher randomization tests of the sharp null of no treatment effect.
//!
//! Under the sharp null every unit's outcome is fixed across runs, so the
//! null distribution of any estimator is generated by re-assigning the
//! observed outcomes to runs with the observed group sizes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::Dataset;
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::science::for_each_assignment;
use crate::word::EffectWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMode {
    /// Enumerate the full assignment orbit; the p-value is the plain
    /// proportion of null statistics at least as extreme as observed.
    Exact,
    /// Sample `replicates` re-assignments with a seeded generator; the
    /// p-value is `(1 + count) / (replicates + 1)`.
    MonteCarlo { replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// Extremeness measured by |statistic|.
    TwoSided,
    Greater,
    Less,
}

/// Result of a randomization test.
#[derive(Debug, Clone)]
pub struct RandomizationTest {
    pub observed: f64,
    pub p_value: f64,
    /// Orbit size (exact) or replicate count (Monte Carlo).
    pub draws: u128,
    pub exact: bool,
    /// Null draws at least as extreme as the observed statistic.
    pub exceed_count: u128,
    /// The sampled null statistics (Monte Carlo only; empty for exact
    /// enumeration to keep orbit sweeps cheap).
    pub null_statistics: Vec<f64>,
    pub seed: Option<u64>,
}

/// Tie-tolerant comparison: permuted statistics within float noise of the
/// observed value count as "at least as extreme".
fn at_least(value: f64, observed: f64) -> bool {
    value >= observed - 1e-12 * (1.0 + observed.abs())
}

struct TestFrame {
    outcomes: Vec<f64>,
    labels: Vec<usize>,
    group_sizes: Vec<usize>,
    /// signs[w][j]: contrast sign of word w on design run j.
    signs: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl TestFrame {
    fn build(dataset: &Dataset, design: &DesignSpec, words: &[EffectWord]) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::CannotTest("no effect words given".into()));
        }
        let runs = design.runs()?;
        let mut labels = Vec::with_capacity(dataset.len());
        let mut outcomes = Vec::with_capacity(dataset.len());
        for unit in dataset.units() {
            let j = runs
                .iter()
                .position(|r| r == unit.run())
                .ok_or_else(|| Error::ForeignRun {
                    unit: unit.id().to_string(),
                    run: unit.run().to_string(),
                })?;
            labels.push(j);
            outcomes.push(unit.outcome());
        }
        let mut group_sizes = vec![0usize; runs.len()];
        for &j in &labels {
            group_sizes[j] += 1;
        }
        if let Some(j) = group_sizes.iter().position(|&n| n == 0) {
            return Err(Error::EmptyRun(runs[j].to_string()));
        }
        let mut signs = Vec::with_capacity(words.len());
        let mut scales = Vec::with_capacity(words.len());
        for word in words {
            signs.push(runs.iter().map(|r| r.word_level(word) as f64).collect());
            let exp = design.k() as i32 - design.p() as i32 - if word.is_mean() { 0 } else { 1 };
            scales.push(0.5f64.powi(exp));
        }
        Ok(TestFrame {
            outcomes,
            labels,
            group_sizes,
            signs,
            scales,
        })
    }

    /// The estimator for word index w under the given assignment labels.
    fn estimate(&self, labels: &[usize], w: usize) -> f64 {
        let mut sums = vec![0.0; self.group_sizes.len()];
        for (&j, &y) in labels.iter().zip(&self.outcomes) {
            sums[j] += y;
        }
        let mut acc = 0.0;
        for (j, &sum) in sums.iter().enumerate() {
            acc += self.signs[w][j] * sum / self.group_sizes[j] as f64;
        }
        self.scales[w] * acc
    }

    /// Test statistic across all words, directed by the alternative.
    fn statistic(&self, labels: &[usize], alternative: Alternative) -> f64 {
        let per_word = (0..self.signs.len()).map(|w| self.estimate(labels, w));
        match alternative {
            Alternative::TwoSided => per_word.map(f64::abs).fold(f64::NEG_INFINITY, f64::max),
            Alternative::Greater => per_word.fold(f64::NEG_INFINITY, f64::max),
            Alternative::Less => per_word.map(|t| -t).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn run_test(
    frame: &TestFrame,
    mode: TestMode,
    alternative: Alternative,
) -> Result<RandomizationTest> {
    let observed = frame.statistic(&frame.labels, alternative);
    match mode {
        TestMode::Exact => {
            let mut exceed: u128 = 0;
            let draws = for_each_assignment(&frame.group_sizes, |assignment| {
                if at_least(frame.statistic(assignment, alternative), observed) {
                    exceed += 1;
                }
            })?;
            Ok(RandomizationTest {
                observed,
                p_value: exceed as f64 / draws as f64,
                draws,
                exact: true,
                exceed_count: exceed,
                null_statistics: Vec::new(),
                seed: None,
            })
        }
        TestMode::MonteCarlo { replicates, seed } => {
            if replicates == 0 {
                return Err(Error::CannotTest("replicate count must be positive".into()));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut labels = frame.labels.clone();
            let mut exceed: u128 = 0;
            let mut null_statistics = Vec::with_capacity(replicates);
            for _ in 0..replicates {
                labels.shuffle(&mut rng);
                let t = frame.statistic(&labels, alternative);
                if at_least(t, observed) {
                    exceed += 1;
                }
                null_statistics.push(t);
            }
            Ok(RandomizationTest {
                observed,
                p_value: (1 + exceed) as f64 / (replicates as u128 + 1) as f64,
                draws: replicates as u128,
                exact: false,
                exceed_count: exceed,
                null_statistics,
                seed: Some(seed),
            })
        }
    }
}

/// Randomization test of the sharp null using one effect estimator as the
/// test statistic.
pub fn fisher_test(
    dataset: &Dataset,
    design: &DesignSpec,
    word: &EffectWord,
    mode: TestMode,
    alternative: Alternative,
) -> Result<RandomizationTest> {
    let frame = TestFrame::build(dataset, design, std::slice::from_ref(word))?;
    run_test(&frame, mode, alternative)
}

/// Joint randomization test: the statistic is the maximum |estimate| over
/// the given words, so a single extreme effect drives rejection.
pub fn joint_fisher_test(
    dataset: &Dataset,
    design: &DesignSpec,
    words: &[EffectWord],
    mode: TestMode,
) -> Result<RandomizationTest> {
    let frame = TestFrame::build(dataset, design, words)?;
    run_test(&frame, mode, Alternative::TwoSided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Unit;
    use crate::design::Run;
    use approx::assert_relative_eq;

    fn w(factors: &[u8]) -> EffectWord {
        EffectWord::from_factors(factors).unwrap()
    }

    /// K=1 dataset: outcomes by level of the single factor.
    fn two_group_dataset(low: &[f64], high: &[f64]) -> Dataset {
        let mut units = Vec::new();
        for (i, &y) in low.iter().enumerate() {
            units.push(Unit::new(
                format!("l{i}"),
                Run::new(vec![-1]).unwrap(),
                y,
                Vec::new(),
            ));
        }
        for (i, &y) in high.iter().enumerate() {
            units.push(Unit::new(
                format!("h{i}"),
                Run::new(vec![1]).unwrap(),
                y,
                Vec::new(),
            ));
        }
        Dataset::new(1, Vec::new(), units).unwrap()
    }

    #[test]
    fn exact_two_sided_p_by_hand() {
        // outcomes {0,0} vs {1,1}: of the 6 assignments, |τ̂| = 1 twice
        let ds = two_group_dataset(&[0.0, 0.0], &[1.0, 1.0]);
        let design = DesignSpec::full(1).unwrap();
        let t = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::Exact,
            Alternative::TwoSided,
        )
        .unwrap();
        assert_relative_eq!(t.observed, 1.0, epsilon = 1e-12);
        assert_eq!(t.draws, 6);
        assert_eq!(t.exceed_count, 2);
        assert_relative_eq!(t.p_value, 1.0 / 3.0, epsilon = 1e-12);
        assert!(t.exact);
    }

    #[test]
    fn exact_one_sided_p_by_hand() {
        let ds = two_group_dataset(&[0.0, 0.0], &[1.0, 1.0]);
        let design = DesignSpec::full(1).unwrap();
        let t = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::Exact,
            Alternative::Greater,
        )
        .unwrap();
        assert_relative_eq!(t.p_value, 1.0 / 6.0, epsilon = 1e-12);
        let t = fisher_test(&ds, &design, &w(&[1]), TestMode::Exact, Alternative::Less).unwrap();
        // τ̂ <= -1 happens only for the flipped assignment... plus the
        // observed tie rule counts -(-1) >= -1? statistic is -τ̂ = -1;
        // assignments with -τ̂ >= -1 are all 6
        assert_relative_eq!(t.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_outcomes_never_reject() {
        let ds = two_group_dataset(&[2.0, 2.0, 2.0], &[2.0, 2.0]);
        let design = DesignSpec::full(1).unwrap();
        let t = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::Exact,
            Alternative::TwoSided,
        )
        .unwrap();
        assert_relative_eq!(t.p_value, 1.0, epsilon = 1e-12);
        let t = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::MonteCarlo {
                replicates: 200,
                seed: 7,
            },
            Alternative::TwoSided,
        )
        .unwrap();
        assert_relative_eq!(t.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_is_seed_reproducible() {
        let ds = two_group_dataset(&[0.0, 1.0, 2.0, 0.5], &[3.0, 4.0, 2.5, 3.5]);
        let design = DesignSpec::full(1).unwrap();
        let mode = TestMode::MonteCarlo {
            replicates: 500,
            seed: 42,
        };
        let a = fisher_test(&ds, &design, &w(&[1]), mode, Alternative::TwoSided).unwrap();
        let b = fisher_test(&ds, &design, &w(&[1]), mode, Alternative::TwoSided).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.null_statistics, b.null_statistics);
        assert_eq!(a.seed, Some(42));
        let c = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::MonteCarlo {
                replicates: 500,
                seed: 43,
            },
            Alternative::TwoSided,
        )
        .unwrap();
        assert_ne!(a.null_statistics, c.null_statistics);
    }

    #[test]
    fn monte_carlo_p_has_add_one_floor() {
        let ds = two_group_dataset(&[0.0, 0.0, 0.0, 0.0], &[10.0, 10.0, 10.0, 10.0]);
        let design = DesignSpec::full(1).unwrap();
        let t = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::MonteCarlo {
                replicates: 99,
                seed: 1,
            },
            Alternative::TwoSided,
        )
        .unwrap();
        assert!(t.p_value >= 1.0 / 100.0);
        assert!(t.p_value <= 1.0);
        assert_eq!(t.draws, 99);
    }

    #[test]
    fn monte_carlo_tracks_exact_p() {
        let ds = two_group_dataset(&[0.0, 1.0, 0.5], &[3.0, 4.0, 3.5]);
        let design = DesignSpec::full(1).unwrap();
        let exact = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::Exact,
            Alternative::TwoSided,
        )
        .unwrap();
        let mc = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::MonteCarlo {
                replicates: 4000,
                seed: 11,
            },
            Alternative::TwoSided,
        )
        .unwrap();
        assert!((mc.p_value - exact.p_value).abs() < 0.03);
    }

    #[test]
    fn joint_test_on_factorial_design() {
        // 2² design with a large factor-1 effect only
        let mut units = Vec::new();
        let runs = crate::design::full_factorial_runs(2).unwrap();
        let group_outcomes = [[0.0, 0.1], [0.1, 0.0], [5.0, 5.1], [5.1, 5.0]];
        for (j, r) in runs.iter().enumerate() {
            for (i, &y) in group_outcomes[j].iter().enumerate() {
                units.push(Unit::new(format!("u{j}{i}"), r.clone(), y, Vec::new()));
            }
        }
        let ds = Dataset::new(2, Vec::new(), units).unwrap();
        let design = DesignSpec::full(2).unwrap();
        let words = [w(&[1]), w(&[2]), w(&[1, 2])];
        let t = joint_fisher_test(&ds, &design, &words, TestMode::Exact).unwrap();
        assert_relative_eq!(t.observed, 5.0, epsilon = 1e-12);
        // extreme draws are exactly those placing the four large outcomes in
        // two whole groups: 6 group pairs × 36 within-side arrangements
        assert_eq!(t.exceed_count, 216);
        assert_relative_eq!(t.p_value, 216.0 / 2520.0, epsilon = 1e-12);
        // single-word count: only the two group pairs aligned with factor 1
        let single = fisher_test(
            &ds,
            &design,
            &w(&[1]),
            TestMode::Exact,
            Alternative::TwoSided,
        )
        .unwrap();
        assert_eq!(single.exceed_count, 72);
        assert!(t.p_value >= single.p_value - 1e-12);
    }

    #[test]
    fn empty_group_and_budget_errors() {
        let ds = two_group_dataset(&[1.0, 2.0], &[]);
        let design = DesignSpec::full(1).unwrap();
        assert!(matches!(
            fisher_test(
                &ds,
                &design,
                &w(&[1]),
                TestMode::Exact,
                Alternative::TwoSided
            ),
            Err(Error::EmptyRun(_))
        ));
        let low: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let high: Vec<f64> = (0..20).map(|i| i as f64 + 0.5).collect();
        let ds = two_group_dataset(&low, &high);
        assert!(matches!(
            fisher_test(
                &ds,
                &design,
                &w(&[1]),
                TestMode::Exact,
                Alternative::TwoSided
            ),
            Err(Error::BudgetExceeded(_))
        ));
        assert!(matches!(
            fisher_test(
                &ds,
                &design,
                &w(&[1]),
                TestMode::MonteCarlo {
                    replicates: 0,
                    seed: 0
                },
                Alternative::TwoSided
            ),
            Err(Error::CannotTest(_))
        ));
    }
}
