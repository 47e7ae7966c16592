//! Dataset ingestion, factor dichotomization, treatment-combination
//! counting, and design-embedding selection.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::design::{full_factorial_runs, DesignSpec, Generator, Run};
use crate::error::{Error, Result};
use crate::word::EffectWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateType {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(String),
}

#[derive(Debug, Clone)]
pub struct CovariateInfo {
    pub name: String,
    pub kind: CovariateType,
    /// Baseline level for indicator coding; defaults to the first level in
    /// sorted order when absent.
    pub baseline: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Unit {
    id: String,
    run: Run,
    outcome: f64,
    covariates: Vec<CovariateValue>,
}

impl Unit {
    pub fn new(id: String, run: Run, outcome: f64, covariates: Vec<CovariateValue>) -> Self {
        Unit {
            id,
            run,
            outcome,
            covariates,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn run(&self) -> &Run {
        &self.run
    }

    pub fn outcome(&self) -> f64 {
        self.outcome
    }

    pub fn covariates(&self) -> &[CovariateValue] {
        &self.covariates
    }

    pub fn covariate(&self, idx: usize) -> &CovariateValue {
        &self.covariates[idx]
    }
}

/// Observational input: per-unit outcome, assigned run, covariate record.
#[derive(Debug, Clone)]
pub struct Dataset {
    k: u8,
    covariate_info: Vec<CovariateInfo>,
    units: Vec<Unit>,
}

impl Dataset {
    pub fn new(k: u8, covariate_info: Vec<CovariateInfo>, units: Vec<Unit>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for u in &units {
            if u.run.k() != k {
                return Err(Error::InvalidArgument(format!(
                    "unit {} has run length {} but the dataset has {k} factors",
                    u.id,
                    u.run.k()
                )));
            }
            if u.covariates.len() != covariate_info.len() {
                return Err(Error::InvalidArgument(format!(
                    "unit {} has {} covariates but the schema declares {}",
                    u.id,
                    u.covariates.len(),
                    covariate_info.len()
                )));
            }
            if !ids.insert(u.id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate unit id {}",
                    u.id
                )));
            }
        }
        Ok(Dataset {
            k,
            covariate_info,
            units,
        })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn covariate_info(&self) -> &[CovariateInfo] {
        &self.covariate_info
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_info.iter().position(|c| c.name == name)
    }

    /// Keeps only units assigned to the given runs; returns the restricted
    /// dataset and the number of units dropped.
    pub fn restrict_to(&self, design: &DesignSpec) -> Result<(Dataset, usize)> {
        let runs: BTreeSet<Vec<i8>> = design.runs()?.iter().map(|r| r.levels().to_vec()).collect();
        let kept: Vec<Unit> = self
            .units
            .iter()
            .filter(|u| runs.contains(u.run.levels()))
            .cloned()
            .collect();
        let dropped = self.units.len() - kept.len();
        Ok((
            Dataset {
                k: self.k,
                covariate_info: self.covariate_info.clone(),
                units: kept,
            },
            dropped,
        ))
    }

    /// Removes one unit by position.
    pub fn without_unit(&self, idx: usize) -> Dataset {
        let mut units = self.units.clone();
        units.remove(idx);
        Dataset {
            k: self.k,
            covariate_info: self.covariate_info.clone(),
            units,
        }
    }
}

// ---------------------------------------------------------------------------
// Schema configuration

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub column: String,
    /// Apply a natural-log transform to the outcome.
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub column: String,
    /// Detection-limit threshold; values >= limit map to +1, below to -1.
    /// Absent means the column is read directly as ±1.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub column: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub baseline: Option<String>,
    /// Level remapping for categorical covariates (e.g. folding
    /// "Don't know" into another level).
    #[serde(default)]
    pub map: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub column: String,
    /// Drop rows whose value equals this.
    pub exclude: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub outcome: OutcomeConfig,
    pub factors: Vec<FactorConfig>,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
    /// Column holding unit identifiers; row numbers are used when absent.
    pub id_column: Option<String>,
    #[serde(default = "default_true")]
    pub header: bool,
}

impl SchemaConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Load {
            row: 0,
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        SchemaConfig::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Per-reason drop counts from ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestionReport {
    pub units_loaded: usize,
    pub dropped_missing_outcome: usize,
    pub dropped_missing_factor: usize,
    pub dropped_by_filter: usize,
}

impl fmt::Display for IngestionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "units_loaded\t{}", self.units_loaded)?;
        writeln!(
            f,
            "dropped_missing_outcome\t{}",
            self.dropped_missing_outcome
        )?;
        writeln!(f, "dropped_missing_factor\t{}", self.dropped_missing_factor)?;
        write!(f, "dropped_by_filter\t{}", self.dropped_by_filter)
    }
}

fn is_missing(v: &str) -> bool {
    let t = v.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_level(raw: &str) -> Option<i8> {
    match raw.trim() {
        "1" | "+1" => Some(1),
        "-1" => Some(-1),
        _ => None,
    }
}

/// Loads a delimited text file (comma or tab, auto-detected from the
/// header) against a schema. Complete-case policy: rows missing the
/// outcome or any factor are dropped and counted.
pub fn load_dataset(path: &Path, schema: &SchemaConfig) -> Result<(Dataset, IngestionReport)> {
    let text = std::fs::read_to_string(path)?;
    load_dataset_str(&text, schema)
}

pub fn load_dataset_str(text: &str, schema: &SchemaConfig) -> Result<(Dataset, IngestionReport)> {
    let first_line = text.lines().next().unwrap_or("");
    let delimiter = if first_line.contains('\t') {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(schema.header)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Load {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Load {
                row: 0,
                message: format!("unknown column '{name}'"),
            })
    };

    let outcome_col = col(&schema.outcome.column)?;
    let factor_cols: Vec<usize> = schema
        .factors
        .iter()
        .map(|f| col(&f.column))
        .collect::<Result<_>>()?;
    let covariate_cols: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| col(&c.column))
        .collect::<Result<_>>()?;
    let filter_cols: Vec<usize> = schema
        .filters
        .iter()
        .map(|f| col(&f.column))
        .collect::<Result<_>>()?;
    let id_col = schema.id_column.as_deref().map(col).transpose()?;

    let covariate_info: Vec<CovariateInfo> = schema
        .covariates
        .iter()
        .map(|c| {
            let kind = match c.kind.as_str() {
                "numeric" => CovariateType::Numeric,
                "categorical" => CovariateType::Categorical,
                other => {
                    return Err(Error::Load {
                        row: 0,
                        message: format!("covariate '{}' has unknown type '{other}'", c.column),
                    })
                }
            };
            Ok(CovariateInfo {
                name: c.column.clone(),
                kind,
                baseline: c.baseline.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let mut units = Vec::new();
    let mut report = IngestionReport::default();
    let k = schema.factors.len() as u8;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based with header
        let record = record.map_err(|e| Error::Load {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();

        if filter_cols
            .iter()
            .zip(&schema.filters)
            .any(|(&c, f)| field(c) == f.exclude)
        {
            report.dropped_by_filter += 1;
            continue;
        }

        let raw_outcome = field(outcome_col);
        if is_missing(raw_outcome) {
            report.dropped_missing_outcome += 1;
            continue;
        }
        let mut outcome: f64 = raw_outcome.parse().map_err(|_| Error::Load {
            row,
            message: format!("non-numeric outcome '{raw_outcome}'"),
        })?;
        if schema.outcome.log {
            if outcome <= 0.0 {
                return Err(Error::Load {
                    row,
                    message: format!("cannot log-transform nonpositive outcome {outcome}"),
                });
            }
            outcome = outcome.ln();
        }

        let mut levels = Vec::with_capacity(factor_cols.len());
        let mut missing_factor = false;
        for (fc, fcfg) in factor_cols.iter().zip(&schema.factors) {
            let raw = field(*fc);
            if is_missing(raw) {
                missing_factor = true;
                break;
            }
            let level = match fcfg.limit {
                Some(limit) => {
                    let v: f64 = raw.parse().map_err(|_| Error::Load {
                        row,
                        message: format!(
                            "unparseable factor value '{raw}' in column '{}'",
                            fcfg.column
                        ),
                    })?;
                    if v >= limit {
                        1
                    } else {
                        -1
                    }
                }
                None => parse_level(raw).ok_or_else(|| Error::Load {
                    row,
                    message: format!(
                        "factor column '{}' must hold +1/-1, got '{raw}'",
                        fcfg.column
                    ),
                })?,
            };
            levels.push(level);
        }
        if missing_factor {
            report.dropped_missing_factor += 1;
            continue;
        }

        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for ((cc, ccfg), info) in covariate_cols
            .iter()
            .zip(&schema.covariates)
            .zip(&covariate_info)
        {
            let raw = field(*cc);
            let value = match info.kind {
                CovariateType::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| Error::Load {
                        row,
                        message: format!(
                            "non-numeric value '{raw}' in numeric covariate '{}'",
                            ccfg.column
                        ),
                    })?;
                    CovariateValue::Numeric(v)
                }
                CovariateType::Categorical => {
                    let level = ccfg
                        .map
                        .get(raw)
                        .cloned()
                        .unwrap_or_else(|| raw.to_string());
                    CovariateValue::Categorical(level)
                }
            };
            covariates.push(value);
        }

        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => format!("row{row}"),
        };
        units.push(Unit::new(id, Run::new(levels)?, outcome, covariates));
    }
    report.units_loaded = units.len();
    let dataset = Dataset::new(k, covariate_info, units)?;
    Ok((dataset, report))
}

// ---------------------------------------------------------------------------
// Counts tables

/// Observed unit counts over the full `2^k` lattice in canonical run order.
#[derive(Debug, Clone)]
pub struct CountsTable {
    k: u8,
    counts: Vec<usize>,
}

impl CountsTable {
    pub fn new(k: u8, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != 1 << k {
            return Err(Error::InvalidArgument("counts length must be 2^k".into()));
        }
        Ok(CountsTable { k, counts })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Runs with no observations.
    pub fn zero_runs(&self) -> Vec<usize> {
        (0..self.counts.len())
            .filter(|&j| self.counts[j] == 0)
            .collect()
    }

    /// Runs with exactly one observation (Neyman-variance hazard).
    pub fn singleton_runs(&self) -> Vec<usize> {
        (0..self.counts.len())
            .filter(|&j| self.counts[j] == 1)
            .collect()
    }
}

/// Counts units per full-factorial run.
pub fn counts_table(dataset: &Dataset, k: u8) -> Result<CountsTable> {
    if dataset.k() != k {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} factors, expected {k}",
            dataset.k()
        )));
    }
    let mut counts = vec![0usize; 1 << k];
    for unit in dataset.units() {
        counts[unit.run().canonical_index()] += 1;
    }
    CountsTable::new(k, counts)
}

// ---------------------------------------------------------------------------
// Design embedding: which fractions fit the observed support

#[derive(Debug, Clone)]
pub struct FeasibleFraction {
    pub spec: DesignSpec,
    pub resolution: u32,
    /// Canonical full-lattice indices of the fraction's runs.
    pub run_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FractionSearch {
    pub feasible: Vec<FeasibleFraction>,
    /// Runs below the minimum count that constrained the search.
    pub blocked_runs: Vec<usize>,
}

const SUBSPACE_ENUMERATION_LIMIT: u128 = 2_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul(n - i) / (i + 1);
    }
    c
}

/// Reduced basis over GF(2): each returned mask has a pivot bit (its
/// highest bit) that appears in no other row.
fn reduced_basis(masks: &[u32]) -> Vec<u32> {
    let mut basis: Vec<u32> = Vec::new();
    for &m in masks {
        let mut v = m;
        for &b in &basis {
            if v & (1 << (31 - b.leading_zeros())) != 0 {
                v ^= b;
            }
        }
        if v != 0 {
            basis.push(v);
        }
    }
    basis.sort_by_key(|b| std::cmp::Reverse(*b));
    // full reduction: clear each pivot from every other row
    for i in 0..basis.len() {
        let pivot = 1u32 << (31 - basis[i].leading_zeros());
        for j in 0..basis.len() {
            if i != j && basis[j] & pivot != 0 {
                basis[j] ^= basis[i];
            }
        }
    }
    basis
}

fn span(basis: &[u32]) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for sel in 0u32..(1 << basis.len()) {
        let mut v = 0u32;
        for (i, &b) in basis.iter().enumerate() {
            if sel & (1 << i) != 0 {
                v ^= b;
            }
        }
        out.insert(v);
    }
    out
}

/// Builds a DesignSpec from signed defining words given by a reduced basis
/// and a sign for each basis word.
fn spec_from_basis(k: u8, basis: &[u32], negatives: &[bool]) -> Result<DesignSpec> {
    let mut generators = Vec::new();
    for (&mask, &negative) in basis.iter().zip(negatives) {
        let pivot_bit = 31 - mask.leading_zeros();
        let factor = pivot_bit as u8 + 1;
        let word_mask = mask & !(1 << pivot_bit);
        // I = ±(word · factor)  =>  factor = ±word
        generators.push(Generator {
            factor,
            word: EffectWord::from_mask(word_mask, negative),
        });
    }
    generators.sort_by_key(|g| g.factor);
    DesignSpec::new(k, generators)
}

/// Enumerates all regular `2^(k-p)` fractions whose run set avoids every
/// run with fewer than `min_count` observations, ranked by resolution
/// descending. Resolution ties are adjacent in the output; no tie-break is
/// applied beyond a deterministic text ordering.
pub fn feasible_fractions(counts: &CountsTable, p: u8, min_count: usize) -> Result<FractionSearch> {
    let k = counts.k();
    if p == 0 || p >= k {
        return Err(Error::InvalidArgument(
            "fraction exponent must satisfy 1 <= p < k".into(),
        ));
    }
    let word_count = (1u128 << k) - 1;
    if binomial(word_count, p as u128) > SUBSPACE_ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded(binomial(word_count, p as u128)));
    }
    let blocked: Vec<usize> = (0..counts.counts().len())
        .filter(|&j| counts.counts()[j] < min_count)
        .collect();
    let runs = full_factorial_runs(k)?;

    // enumerate p-dimensional subspaces of nonzero words, deduplicated by
    // their span; skip subspaces containing a one-letter word (a constant
    // factor is not a usable design and has no generator form)
    let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut subspaces: Vec<Vec<u32>> = Vec::new();
    let max_mask = (1u32 << k) - 1;
    let p = p as usize;
    let mut combo: Vec<u32> = (1..=p as u32).collect();
    'combos: loop {
        let basis = reduced_basis(&combo);
        if basis.len() == p {
            let signature: Vec<u32> = span(&basis).into_iter().collect();
            let degenerate = signature.iter().any(|&m| m.count_ones() == 1);
            if !degenerate && seen.insert(signature) {
                subspaces.push(basis);
            }
        }
        let mut i = p;
        loop {
            if i == 0 {
                break 'combos;
            }
            i -= 1;
            if combo[i] < max_mask - (p as u32 - 1 - i as u32) {
                combo[i] += 1;
                for j in i + 1..p {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
    let p = p as u8;

    let mut feasible = Vec::new();
    for basis in &subspaces {
        for signs in 0u32..(1 << p) {
            let negatives: Vec<bool> = (0..p as usize).map(|i| signs & (1 << i) != 0).collect();
            let spec = match spec_from_basis(k, basis, &negatives) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let table = match spec.alias_table() {
                Ok(t) => t,
                Err(_) => continue,
            };
            let resolution = match table.resolution() {
                Some(r) => r,
                None => continue,
            };
            // run membership: every signed defining word evaluates to +1
            let run_indices: Vec<usize> = runs
                .iter()
                .enumerate()
                .filter(|(_, r)| {
                    table
                        .subgroup()
                        .iter()
                        .all(|d| d.is_mean() || r.word_level(d) == 1)
                })
                .map(|(j, _)| j)
                .collect();
            if run_indices.iter().any(|j| blocked.contains(j)) {
                continue;
            }
            feasible.push(FeasibleFraction {
                spec,
                resolution,
                run_indices,
            });
        }
    }
    feasible.sort_by(|a, b| {
        b.resolution
            .cmp(&a.resolution)
            .then_with(|| a.spec.to_text().cmp(&b.spec.to_text()))
    });
    Ok(FractionSearch {
        feasible,
        blocked_runs: blocked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
        [outcome]
        column = "y"

        [[factors]]
        column = "f1"

        [[factors]]
        column = "f2"
    "#;

    #[test]
    fn load_drops_missing_outcome() {
        let csv = "y,f1,f2\n1.0,1,1\n,1,-1\n2.0,-1,1\n3.0,-1,-1\n";
        let schema = SchemaConfig::from_toml(SCHEMA).unwrap();
        let (ds, report) = load_dataset_str(csv, &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(report.units_loaded, 3);
        assert_eq!(report.dropped_missing_outcome, 1);
        assert_eq!(report.dropped_missing_factor, 0);
    }

    #[test]
    fn load_dichotomizes_at_limit() {
        let schema = SchemaConfig::from_toml(
            r#"
            [outcome]
            column = "y"
            [[factors]]
            column = "conc"
            limit = 0.5
            "#,
        )
        .unwrap();
        let csv = "y,conc\n1.0,0.2\n2.0,0.7\n3.0,0.5\n";
        let (ds, _) = load_dataset_str(csv, &schema).unwrap();
        let levels: Vec<i8> = ds.units().iter().map(|u| u.run().level(1)).collect();
        // >= limit maps to +1, including values exactly at the limit
        assert_eq!(levels, [-1, 1, 1]);
    }

    #[test]
    fn load_applies_log_transform() {
        let schema = SchemaConfig::from_toml(
            r#"
            [outcome]
            column = "y"
            log = true
            [[factors]]
            column = "f1"
            "#,
        )
        .unwrap();
        let csv = format!("y,f1\n1.0,1\n{},-1\n", std::f64::consts::E);
        let (ds, _) = load_dataset_str(&csv, &schema).unwrap();
        assert!((ds.units()[0].outcome() - 0.0).abs() < 1e-12);
        assert!((ds.units()[1].outcome() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn load_errors_name_the_row() {
        let schema = SchemaConfig::from_toml(SCHEMA).unwrap();
        let csv = "y,f1,f2\n1.0,1,1\nnope,1,-1\n";
        match load_dataset_str(csv, &schema) {
            Err(Error::Load { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected load error, got {other:?}"),
        }
        let csv = "y,f1,f2\n1.0,1,2\n";
        assert!(matches!(
            load_dataset_str(csv, &schema),
            Err(Error::Load { row: 2, .. })
        ));
        let bad = SchemaConfig::from_toml(
            r#"
            [outcome]
            column = "missing"
            [[factors]]
            column = "f1"
            "#,
        )
        .unwrap();
        assert!(matches!(
            load_dataset_str("y,f1\n1.0,1\n", &bad),
            Err(Error::Load { row: 0, .. })
        ));
    }

    #[test]
    fn load_detects_tab_delimiter_and_filters() {
        let schema = SchemaConfig::from_toml(
            r#"
            [outcome]
            column = "y"
            [[factors]]
            column = "f1"
            [[filters]]
            column = "farmer"
            exclude = "yes"
            "#,
        )
        .unwrap();
        let tsv = "y\tf1\tfarmer\n1.0\t1\tno\n2.0\t-1\tyes\n";
        let (ds, report) = load_dataset_str(tsv, &schema).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(report.dropped_by_filter, 1);
    }

    #[test]
    fn categorical_level_mapping() {
        let schema = SchemaConfig::from_toml(
            r#"
            [outcome]
            column = "y"
            [[factors]]
            column = "f1"
            [[covariates]]
            column = "smoker"
            type = "categorical"
            [covariates.map]
            "Don't know" = "Yes"
            "#,
        )
        .unwrap();
        let csv = "y,f1,smoker\n1.0,1,Don't know\n2.0,-1,No\n";
        let (ds, _) = load_dataset_str(csv, &schema).unwrap();
        assert_eq!(
            ds.units()[0].covariate(0),
            &CovariateValue::Categorical("Yes".into())
        );
    }

    #[test]
    fn counts_table_basics() {
        let schema = SchemaConfig::from_toml(SCHEMA).unwrap();
        let csv = "y,f1,f2\n1.0,1,1\n2.0,1,1\n3.0,-1,-1\n";
        let (ds, _) = load_dataset_str(csv, &schema).unwrap();
        let table = counts_table(&ds, 2).unwrap();
        assert_eq!(table.counts(), [1, 0, 0, 2]);
        assert_eq!(table.total(), 3);
        assert_eq!(table.zero_runs(), [1, 2]);
        assert_eq!(table.singleton_runs(), [0]);
    }

    #[test]
    fn feasible_fractions_k3_avoid_z7() {
        // z7 = (+1,+1,-1) empty: it satisfies I = -123, so only the
        // I = +123 half (generator 3=12) stays feasible
        let counts = CountsTable::new(3, vec![5, 5, 5, 5, 5, 5, 0, 5]).unwrap();
        let search = feasible_fractions(&counts, 1, 1).unwrap();
        assert_eq!(search.blocked_runs, [6]);
        let texts: Vec<String> = search.feasible.iter().map(|f| f.spec.to_text()).collect();
        assert!(texts.contains(&"2^(3-1): 3=12".to_string()));
        assert!(!texts.contains(&"2^(3-1): 3=-12".to_string()));
        for f in &search.feasible {
            assert!(!f.run_indices.contains(&6));
        }
    }

    #[test]
    fn feasible_fractions_resolution_ranked() {
        let counts = CountsTable::new(3, vec![5; 8]).unwrap();
        let search = feasible_fractions(&counts, 1, 2).unwrap();
        // four non-degenerate defining words (12, 13, 23, 123) times two
        // signs; the two resolution-III fractions come first
        assert_eq!(search.feasible.len(), 8);
        assert_eq!(search.feasible[0].resolution, 3);
        assert_eq!(search.feasible[1].resolution, 3);
        assert!(search.feasible[2].resolution < 3);
        assert!(search.blocked_runs.is_empty());
    }

    #[test]
    fn feasible_fraction_specs_reproduce_their_run_sets() {
        let counts = CountsTable::new(4, vec![3; 16]).unwrap();
        let search = feasible_fractions(&counts, 2, 2).unwrap();
        for f in &search.feasible {
            let runs = f.spec.runs().unwrap();
            let mut indices: Vec<usize> = runs.iter().map(Run::canonical_index).collect();
            indices.sort_unstable();
            assert_eq!(indices, f.run_indices);
            let rederived = f.spec.alias_table().unwrap().resolution().unwrap();
            assert_eq!(rederived, f.resolution);
        }
    }
}
