//! Property tests for the structural invariants of the design algebra.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::collection::vec;
use proptest::prelude::*;

use fracfac::algebra::{contrast_vector, partial_alias_decomposition};
use fracfac::design::{full_factorial_runs, DesignSpec, Generator};
use fracfac::science::ScienceTable;
use fracfac::word::EffectWord;

/// A random consistent regular fraction: generated factors are defined by
/// words over the base factors only, so the subgroup can never contain -I.
fn arb_design() -> impl Strategy<Value = DesignSpec> {
    (2u8..=6)
        .prop_flat_map(|k| (Just(k), 1u8..k))
        .prop_flat_map(|(k, p)| {
            let base = k - p;
            let gens = (0..p)
                .map(|i| {
                    (1u32..(1u32 << base), any::<bool>()).prop_map(move |(mask, neg)| {
                        let factors: Vec<u8> =
                            (1..=base).filter(|f| mask & (1 << (f - 1)) != 0).collect();
                        let word = EffectWord::from_factors(&factors).unwrap();
                        Generator {
                            factor: base + i + 1,
                            word: if neg { word.negated() } else { word },
                        }
                    })
                })
                .collect::<Vec<_>>();
            (Just(k), gens)
        })
        .prop_map(|(k, gens)| DesignSpec::new(k, gens).unwrap())
}

proptest! {
    /// The text grammar round-trips every consistent design.
    #[test]
    fn spec_text_round_trips(design in arb_design()) {
        let text = design.to_text();
        let reparsed = DesignSpec::parse(&text).unwrap();
        prop_assert_eq!(reparsed, design);
    }

    /// Every signed defining word evaluates to +1 on every design run.
    #[test]
    fn defining_words_are_constant_on_the_fraction(design in arb_design()) {
        let table = design.alias_table().unwrap();
        for run in design.runs().unwrap() {
            for word in table.subgroup() {
                if !word.is_mean() {
                    prop_assert_eq!(run.word_level(word), 1);
                }
            }
        }
    }

    /// The defining contrast subgroup is closed under multiplication.
    #[test]
    fn subgroup_is_closed(design in arb_design()) {
        let table = design.alias_table().unwrap();
        let subgroup = table.subgroup();
        prop_assert_eq!(subgroup.len(), 1 << design.p());
        for a in subgroup {
            for b in subgroup {
                prop_assert!(subgroup.contains(&a.product(b)));
            }
        }
    }

    /// Resolution is the shortest non-identity defining word length.
    #[test]
    fn resolution_is_min_word_length(design in arb_design()) {
        let table = design.alias_table().unwrap();
        let min = table
            .subgroup()
            .iter()
            .filter(|w| !w.is_mean())
            .map(|w| w.len())
            .min()
            .unwrap();
        prop_assert_eq!(table.resolution(), Some(min));
    }

    /// Contrast vectors over the full lattice are mutually orthogonal and
    /// have squared norm 2^k.
    #[test]
    fn contrasts_are_orthogonal(k in 1u8..=8, seed in any::<u64>()) {
        let runs = full_factorial_runs(k).unwrap();
        let words = EffectWord::canonical_order(k);
        let i = (seed % words.len() as u64) as usize;
        let j = ((seed >> 32) % words.len() as u64) as usize;
        let gi = contrast_vector(&words[i], &runs).unwrap();
        let gj = contrast_vector(&words[j], &runs).unwrap();
        let expect = if i == j { 1i64 << k } else { 0 };
        prop_assert_eq!(gi.dot(&gj), expect);
    }

    /// Evaluating a weight vector's decomposition against any science
    /// table reproduces the weighted sum of mean potential outcomes.
    #[test]
    fn decomposition_round_trips_through_effects(
        k in 1u8..=3,
        numerators in vec(-6i64..=6, 8),
        cells in vec(-9i64..=9, 32),
    ) {
        let lattice = 1usize << k;
        let weights: Vec<BigRational> = numerators[..lattice]
            .iter()
            .map(|&n| BigRational::new(BigInt::from(n), BigInt::from(3)))
            .collect();
        let rows: Vec<Vec<i64>> =
            cells.chunks(lattice).take(4).map(|c| c.to_vec()).collect();
        let table = ScienceTable::from_integers(k, &rows).unwrap();
        let full = DesignSpec::full(k).unwrap();

        let lhs: BigRational = (0..lattice)
            .map(|j| &weights[j] * table.column_mean(j))
            .sum();
        let map = partial_alias_decomposition(&weights, k).unwrap();
        let mut rhs = BigRational::zero();
        for (word, coeff) in &map {
            rhs += coeff * table.true_effect(&full, word).unwrap();
        }
        prop_assert_eq!(lhs, rhs);
    }

    /// Canonical run order and canonical index agree.
    #[test]
    fn canonical_index_matches_enumeration_order(k in 1u8..=8) {
        for (j, run) in full_factorial_runs(k).unwrap().iter().enumerate() {
            prop_assert_eq!(run.canonical_index(), j);
        }
    }
}
