//! Runs, design specifications, and the aliasing algebra of regular
//! two-level fractional factorial designs.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::word::{factor_from_char, EffectWord, MAX_FACTORS};

pub const MAX_ENUMERABLE_FACTORS: u8 = 20;

/// One treatment combination: a level in {-1, +1} for each factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Run(Vec<i8>);

impl Run {
    pub fn new(levels: Vec<i8>) -> Result<Self> {
        if levels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::InvalidArgument("run levels must be +1 or -1".into()));
        }
        Ok(Run(levels))
    }

    pub fn k(&self) -> u8 {
        self.0.len() as u8
    }

    /// Level of a 1-based factor.
    pub fn level(&self, factor: u8) -> i8 {
        self.0[factor as usize - 1]
    }

    pub fn levels(&self) -> &[i8] {
        &self.0
    }

    /// Product of levels over the factors of `word`, times the word's sign.
    pub fn word_level(&self, word: &EffectWord) -> i8 {
        let mut v = word.sign();
        for f in 1..=self.k() {
            if word.contains(f) {
                v *= self.level(f);
            }
        }
        v
    }

    /// Index of this run in the canonical full-factorial enumeration.
    pub fn canonical_index(&self) -> usize {
        let k = self.k();
        let mut idx = 0usize;
        for f in 1..=k {
            idx <<= 1;
            if self.level(f) > 0 {
                idx |= 1;
            }
        }
        idx
    }
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", if *l > 0 { "+1" } else { "-1" })?;
        }
        write!(f, ")")
    }
}

/// All `2^k` runs in canonical order: last factor varies fastest, first run
/// all -1.
pub fn full_factorial_runs(k: u8) -> Result<Vec<Run>> {
    if !(1..=MAX_ENUMERABLE_FACTORS).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "factor count {k} out of range 1..={MAX_ENUMERABLE_FACTORS}"
        )));
    }
    let n = 1usize << k;
    let mut runs = Vec::with_capacity(n);
    for j in 0..n {
        let levels = (1..=k)
            .map(|f| if (j >> (k - f)) & 1 == 1 { 1 } else { -1 })
            .collect();
        runs.push(Run(levels));
    }
    Ok(runs)
}

/// A generator equation `factor = ±word`, with the word over base factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub factor: u8,
    pub word: EffectWord,
}

/// A `2^(k-p)` regular design; `p = 0` is the full factorial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    k: u8,
    generators: Vec<Generator>,
}

impl DesignSpec {
    pub fn full(k: u8) -> Result<Self> {
        DesignSpec::new(k, Vec::new())
    }

    pub fn new(k: u8, generators: Vec<Generator>) -> Result<Self> {
        if !(1..=MAX_FACTORS).contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "factor count {k} out of range 1..={MAX_FACTORS}"
            )));
        }
        if generators.len() >= k as usize {
            return Err(Error::InvalidArgument(format!(
                "fraction exponent {} must be below factor count {k}",
                generators.len()
            )));
        }
        let generated: BTreeSet<u8> = generators.iter().map(|g| g.factor).collect();
        if generated.len() != generators.len() {
            return Err(Error::InvalidGenerator(
                "each generated factor may appear in exactly one generator".into(),
            ));
        }
        for g in &generators {
            if g.factor < 1 || g.factor > k {
                return Err(Error::InvalidGenerator(format!(
                    "generated factor {} out of range 1..={k}",
                    g.factor
                )));
            }
            if g.word.max_factor() > k {
                return Err(Error::InvalidGenerator(format!(
                    "generator word {} uses a factor beyond {k}",
                    g.word
                )));
            }
            for f in g.word.factors() {
                if generated.contains(&f) {
                    return Err(Error::InvalidGenerator(format!(
                        "generator for factor {} references generated factor {f}",
                        g.factor
                    )));
                }
            }
            if g.word.contains(g.factor) {
                return Err(Error::InvalidGenerator(format!(
                    "generator for factor {} references itself",
                    g.factor
                )));
            }
        }
        Ok(DesignSpec { k, generators })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn p(&self) -> u8 {
        self.generators.len() as u8
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn run_count(&self) -> usize {
        1 << (self.k - self.p())
    }

    pub fn is_full(&self) -> bool {
        self.generators.is_empty()
    }

    /// Base (non-generated) factors in ascending order.
    pub fn base_factors(&self) -> Vec<u8> {
        let generated: BTreeSet<u8> = self.generators.iter().map(|g| g.factor).collect();
        (1..=self.k).filter(|f| !generated.contains(f)).collect()
    }

    /// The runs of the design. For a fraction, the base-factor block follows
    /// the full-factorial order over the base factors and each generated
    /// factor is the signed product of its generator word's levels.
    pub fn runs(&self) -> Result<Vec<Run>> {
        if self.is_full() {
            return full_factorial_runs(self.k);
        }
        let base = self.base_factors();
        let base_runs = full_factorial_runs(base.len() as u8)?;
        let mut runs = Vec::with_capacity(base_runs.len());
        for br in &base_runs {
            let mut levels = vec![0i8; self.k as usize];
            for (i, &f) in base.iter().enumerate() {
                levels[f as usize - 1] = br.level(i as u8 + 1);
            }
            for g in &self.generators {
                let mut v = g.word.sign();
                for f in g.word.factors() {
                    v *= levels[f as usize - 1];
                }
                levels[g.factor as usize - 1] = v;
            }
            runs.push(Run(levels));
        }
        Ok(runs)
    }

    /// The defining words `I = ±(word · factor)` derived from the generators.
    pub fn defining_words(&self) -> Vec<EffectWord> {
        self.generators
            .iter()
            .map(|g| g.word.product(&EffectWord::main(g.factor)))
            .collect()
    }

    pub fn alias_table(&self) -> Result<AliasTable> {
        AliasTable::from_defining_words(self.k, &self.defining_words())
    }

    /// Compact text form, e.g. `2^(4-1): 4=-123`.
    pub fn to_text(&self) -> String {
        let mut s = format!("2^({}-{})", self.k, self.p());
        if !self.generators.is_empty() {
            s.push_str(": ");
            let gens: Vec<String> = self
                .generators
                .iter()
                .map(|g| format!("{}={}", EffectWord::main(g.factor), g.word))
                .collect();
            s.push_str(&gens.join(", "));
        }
        s
    }

    /// Parses the compact grammar `2^(k-p): f=±word, ...` with factor digits
    /// 1-9 and letters a-k for factors 10-20.
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse_spec()
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            chars: text.chars().collect(),
            pos: 0,
            text,
        }
    }

    fn err(&self, message: &str) -> Error {
        let _ = self.text;
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            _ => Err(self.err(&format!("expected '{want}'"))),
        }
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        self.chars[start..self.pos]
            .iter()
            .collect::<String>()
            .parse()
            .map_err(|_| self.err("number too large"))
    }

    fn factor(&mut self) -> Result<u8> {
        match self.peek().and_then(factor_from_char) {
            Some(f) => {
                self.pos += 1;
                Ok(f)
            }
            None => Err(self.err("expected a factor (1-9, a-k)")),
        }
    }

    /// A word: optional sign then one or more factor characters.
    fn word(&mut self) -> Result<EffectWord> {
        let negative = if self.peek() == Some('-') {
            self.pos += 1;
            true
        } else {
            if self.peek() == Some('+') {
                self.pos += 1;
            }
            false
        };
        let mut factors = Vec::new();
        while let Some(f) = self.peek().and_then(factor_from_char) {
            factors.push(f);
            self.pos += 1;
            // allow an explicit product dot between factors
            if self.peek() == Some('.') || self.peek() == Some('*') {
                self.pos += 1;
            }
        }
        if factors.is_empty() {
            return Err(self.err("expected a word (factor characters)"));
        }
        let w = EffectWord::from_factors(&factors).map_err(|e| self.err(&e.to_string()))?;
        Ok(w.with_sign(negative))
    }

    fn parse_spec(&mut self) -> Result<DesignSpec> {
        self.skip_ws();
        self.expect('2')?;
        self.expect('^')?;
        self.expect('(')?;
        let k = self.number()?;
        self.expect('-')?;
        let p = self.number()?;
        self.expect(')')?;
        if k < 1 || k > MAX_FACTORS as u32 {
            return Err(self.err(&format!("factor count must be in 1..={MAX_FACTORS}")));
        }
        if p >= k {
            return Err(self.err("fraction exponent must be below the factor count"));
        }
        let k = k as u8;
        let mut generators = Vec::new();
        self.skip_ws();
        if p > 0 {
            self.expect(':')?;
            for i in 0..p {
                self.skip_ws();
                if i > 0 {
                    self.expect(',')?;
                    self.skip_ws();
                }
                let factor = self.factor()?;
                self.skip_ws();
                self.expect('=')?;
                self.skip_ws();
                let word = self.word()?;
                generators.push(Generator { factor, word });
            }
        }
        self.skip_ws();
        if self.peek().is_some() {
            return Err(self.err("unexpected trailing input"));
        }
        DesignSpec::new(k, generators).map_err(|e| match e {
            Error::Parse { .. } => e,
            other => Error::Parse {
                position: self.pos,
                message: other.to_string(),
            },
        })
    }
}

/// The defining-contrast subgroup and the induced partition of all words
/// into signed alias classes.
#[derive(Debug, Clone)]
pub struct AliasTable {
    k: u8,
    subgroup: Vec<EffectWord>,
}

impl AliasTable {
    /// Closes the given defining words under the signed product. Errors if
    /// the closure contains `-I` (contradictory generators).
    pub fn from_defining_words(k: u8, defining: &[EffectWord]) -> Result<Self> {
        let mut subgroup: BTreeSet<EffectWord> = BTreeSet::new();
        subgroup.insert(EffectWord::mean());
        for w in defining {
            let products: Vec<EffectWord> = subgroup.iter().map(|d| d.product(w)).collect();
            subgroup.extend(products);
        }
        if subgroup.contains(&EffectWord::mean().negated()) {
            return Err(Error::InconsistentDesign);
        }
        let mut subgroup: Vec<EffectWord> = subgroup.into_iter().collect();
        subgroup.sort();
        Ok(AliasTable { k, subgroup })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    /// `log2` of the subgroup size.
    pub fn p(&self) -> u8 {
        self.subgroup.len().trailing_zeros() as u8
    }

    /// The `2^p` signed words of the defining-contrast subgroup.
    pub fn subgroup(&self) -> &[EffectWord] {
        &self.subgroup
    }

    /// The signed alias class of `word`: `{word · d : d in subgroup}`.
    pub fn alias_set(&self, word: &EffectWord) -> Vec<EffectWord> {
        let mut class: Vec<EffectWord> = self.subgroup.iter().map(|d| word.product(d)).collect();
        class.sort();
        class
    }

    /// Minimum factor count over the non-identity subgroup words.
    pub fn resolution(&self) -> Option<u32> {
        self.subgroup
            .iter()
            .filter(|w| !w.is_mean())
            .map(|w| w.len())
            .min()
    }

    /// All alias classes, one per class, keyed by the class representative
    /// (shortest word, lexicographic tie-break, normalized to positive sign).
    pub fn classes(&self) -> Vec<Vec<EffectWord>> {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        let mut classes = Vec::new();
        for w in EffectWord::canonical_order(self.k) {
            if seen.contains(&w.mask()) {
                continue;
            }
            let mut class = self.alias_set(&w);
            for m in &class {
                seen.insert(m.mask());
            }
            // normalize so the representative (first member in canonical
            // order) carries a positive sign
            if class[0].is_negative() {
                class = class.into_iter().map(|m| m.negated()).collect();
            }
            classes.push(class);
        }
        classes
    }

    /// Serializes the alias classes in the `1=23` display style: the
    /// identity class first, main-effect classes with the highest factor
    /// first, then the remaining classes in canonical order of their
    /// representatives.
    pub fn display_lines(&self) -> Vec<String> {
        let mut classes = self.classes();
        classes.sort_by(|a, b| {
            let rank = |c: &[EffectWord]| -> (u8, i32) {
                let rep = &c[0];
                if rep.is_mean() {
                    (0, 0)
                } else if rep.len() == 1 {
                    (1, -(rep.max_factor() as i32))
                } else {
                    (2, 0)
                }
            };
            rank(a)
                .cmp(&rank(b))
                .then_with(|| a[0].canonical_cmp(&b[0]))
        });
        classes
            .iter()
            .map(|class| {
                class
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join("=")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(s: &str) -> EffectWord {
        let negative = s.starts_with('-');
        let body = s.trim_start_matches(['-', '+']);
        if body == "I" {
            return EffectWord::mean().with_sign(negative);
        }
        let factors: Vec<u8> = body.chars().map(|c| factor_from_char(c).unwrap()).collect();
        EffectWord::from_factors(&factors)
            .unwrap()
            .with_sign(negative)
    }

    #[test]
    fn full_factorial_k3_matches_canonical_order() {
        let runs = full_factorial_runs(3).unwrap();
        assert_eq!(runs.len(), 8);
        assert_eq!(runs[0].levels(), [-1, -1, -1]);
        assert_eq!(runs[1].levels(), [-1, -1, 1]);
        assert_eq!(runs[2].levels(), [-1, 1, -1]);
        assert_eq!(runs[3].levels(), [-1, 1, 1]);
        for (j, r) in runs.iter().enumerate() {
            assert_eq!(r.canonical_index(), j);
        }
    }

    #[test]
    fn full_factorial_base_cases() {
        let runs = full_factorial_runs(1).unwrap();
        assert_eq!(runs[0].levels(), [-1]);
        assert_eq!(runs[1].levels(), [1]);
        let runs = full_factorial_runs(4).unwrap();
        assert_eq!(runs.len(), 16);
        assert_eq!(runs.iter().filter(|r| r.level(1) == -1).count(), 8);
        assert!(full_factorial_runs(0).is_err());
        assert!(full_factorial_runs(21).is_err());
    }

    #[test]
    fn fraction_runs_half_of_2_3() {
        let spec = DesignSpec::parse("2^(3-1): 3=12").unwrap();
        let runs = spec.runs().unwrap();
        let levels: Vec<&[i8]> = runs.iter().map(|r| r.levels()).collect();
        assert_eq!(
            levels,
            [&[-1, -1, 1], &[-1, 1, -1], &[1, -1, -1], &[1, 1, 1]]
        );
    }

    #[test]
    fn fraction_runs_negative_generator() {
        let spec = DesignSpec::parse("2^(4-1): 4=-123").unwrap();
        let runs = spec.runs().unwrap();
        assert_eq!(runs.len(), 8);
        assert_eq!(runs[0].levels(), [-1, -1, -1, 1]);
    }

    #[test]
    fn two_run_fraction() {
        let spec = DesignSpec::parse("2^(2-1): 2=1").unwrap();
        let runs = spec.runs().unwrap();
        let levels: Vec<&[i8]> = runs.iter().map(|r| r.levels()).collect();
        assert_eq!(levels, [&[-1, -1], &[1, 1]]);
    }

    #[test]
    fn generator_referencing_generated_factor_is_rejected() {
        let err = DesignSpec::new(
            4,
            vec![
                Generator {
                    factor: 3,
                    word: word("12"),
                },
                Generator {
                    factor: 4,
                    word: word("13"),
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGenerator(_)));
    }

    #[test]
    fn defining_subgroup_examples() {
        let spec = DesignSpec::parse("2^(3-1): 3=12").unwrap();
        let table = spec.alias_table().unwrap();
        assert_eq!(table.subgroup(), [word("I"), word("123")]);

        let spec = DesignSpec::parse("2^(4-1): 4=-123").unwrap();
        let table = spec.alias_table().unwrap();
        assert_eq!(table.subgroup(), [word("I"), word("-1234")]);

        let spec = DesignSpec::parse("2^(4-2): 3=12, 4=1").unwrap();
        let table = spec.alias_table().unwrap();
        assert_eq!(
            table.subgroup(),
            [word("I"), word("14"), word("123"), word("234")]
        );
    }

    #[test]
    fn contradictory_generators_are_an_error() {
        let defining = [word("123"), word("-123")];
        let err = AliasTable::from_defining_words(3, &defining).unwrap_err();
        assert!(matches!(err, Error::InconsistentDesign));
    }

    #[test]
    fn alias_set_examples() {
        let table = AliasTable::from_defining_words(3, &[word("123")]).unwrap();
        assert_eq!(table.alias_set(&word("1")), [word("1"), word("23")]);
        assert_eq!(table.alias_set(&word("I")), table.subgroup());

        let table = AliasTable::from_defining_words(4, &[word("-1234")]).unwrap();
        assert_eq!(table.alias_set(&word("12")), [word("12"), word("-34")]);
    }

    #[test]
    fn resolution_examples() {
        let t = AliasTable::from_defining_words(3, &[word("123")]).unwrap();
        assert_eq!(t.resolution(), Some(3));
        let t = AliasTable::from_defining_words(4, &[word("-1234")]).unwrap();
        assert_eq!(t.resolution(), Some(4));
        let t = AliasTable::from_defining_words(4, &[word("123"), word("14")]).unwrap();
        assert_eq!(t.resolution(), Some(2));
    }

    #[test]
    fn subgroup_closure_property() {
        let t = AliasTable::from_defining_words(5, &[word("123"), word("-2345")]).unwrap();
        assert_eq!(t.subgroup().len(), 4);
        for a in t.subgroup() {
            for b in t.subgroup() {
                assert!(t.subgroup().contains(&a.product(b)));
            }
        }
    }

    #[test]
    fn display_matches_textbook_style() {
        let spec = DesignSpec::parse("2^(3-1): 3=12").unwrap();
        let lines = spec.alias_table().unwrap().display_lines();
        assert_eq!(lines, ["I=123", "3=12", "2=13", "1=23"]);

        let spec = DesignSpec::parse("2^(4-1): 4=-123").unwrap();
        let lines = spec.alias_table().unwrap().display_lines();
        assert_eq!(
            lines,
            ["I=-1234", "4=-123", "3=-124", "2=-134", "1=-234", "12=-34", "13=-24", "14=-23"]
        );
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let spec = DesignSpec::parse("2^(5-2): 4=12, 5=-13").unwrap();
        assert_eq!(spec.to_text(), "2^(5-2): 4=12, 5=-13");
        assert_eq!(DesignSpec::parse(&spec.to_text()).unwrap(), spec);
        assert!(DesignSpec::parse("2^(2-0)").is_ok());
        assert!(matches!(
            DesignSpec::parse("2^(3-3)"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            DesignSpec::parse("2^(3-1) 3=12"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            DesignSpec::parse("2^(3-1): 3=3"),
            Err(Error::Parse { .. })
        ));
    }
}
