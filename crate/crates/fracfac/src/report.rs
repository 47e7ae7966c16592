//! Tab-delimited report rendering and science-table file I/O.
//!
//! All renderers are pure string builders so the same bytes can go to a
//! terminal, a file, or a test assertion.

use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use sha2::{Digest, Sha256};

use crate::algebra::format_estimand;
use crate::balance::{BalanceReport, StandardizedDifference, TrimResult};
use crate::data::{CountsTable, FractionSearch, IngestionReport};
use crate::design::{AliasTable, DesignSpec};
use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::fisher::RandomizationTest;
use crate::science::ScienceTable;

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

/// One row per effect: word, estimate, variance, stderr, CI bounds, the
/// alias class, method tag, and the exact estimand record when present.
pub fn effect_report(estimates: &[EffectEstimate]) -> String {
    let mut out = String::from(
        "word\testimate\tvariance\tstderr\tci_low\tci_high\talias_class\tmethod\testimand\n",
    );
    for e in estimates {
        let class = e
            .alias_class
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("=");
        let estimand = e
            .estimand
            .as_ref()
            .map(format_estimand)
            .unwrap_or_else(|| "NA".to_string());
        let (lo, hi) = match e.ci {
            Some((lo, hi)) => (fmt_f64(lo), fmt_f64(hi)),
            None => ("NA".to_string(), "NA".to_string()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.word,
            fmt_f64(e.estimate),
            fmt_opt(e.variance),
            fmt_opt(e.stderr()),
            lo,
            hi,
            class,
            e.method.as_str(),
            estimand
        );
    }
    out
}

/// Alias structure of a design, one class per line in display order.
pub fn alias_report(design: &DesignSpec, table: &AliasTable) -> String {
    let mut out = format!("design\t{}\n", design.to_text());
    let _ = writeln!(
        out,
        "resolution\t{}",
        table
            .resolution()
            .map(|r| r.to_string())
            .unwrap_or_else(|| "NA".to_string())
    );
    for line in table.display_lines() {
        let _ = writeln!(out, "{line}");
    }
    out
}

/// Per-run unit counts with hazard flags.
pub fn counts_report(counts: &CountsTable) -> String {
    let runs = crate::design::full_factorial_runs(counts.k()).expect("valid k");
    let mut out = String::from("run\tlevels\tcount\tflag\n");
    for (j, run) in runs.iter().enumerate() {
        let n = counts.counts()[j];
        let flag = match n {
            0 => "empty",
            1 => "single",
            _ => "",
        };
        let _ = writeln!(out, "z{}\t{}\t{}\t{}", j + 1, run, n, flag);
    }
    let _ = writeln!(out, "total\t\t{}\t", counts.total());
    out
}

/// Ranked feasible fractions from a design-embedding search.
pub fn fraction_search_report(search: &FractionSearch) -> String {
    let mut out = String::from("rank\tdesign\tresolution\truns\n");
    for (rank, f) in search.feasible.iter().enumerate() {
        let runs = f
            .run_indices
            .iter()
            .map(|j| format!("z{}", j + 1))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            rank + 1,
            f.spec.to_text(),
            f.resolution,
            runs
        );
    }
    if !search.blocked_runs.is_empty() {
        let blocked = search
            .blocked_runs
            .iter()
            .map(|j| format!("z{}", j + 1))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "blocked\t\t\t{blocked}");
    }
    out
}

/// Key-value balance summary.
pub fn balance_report_text(r: &BalanceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "wilks_lambda\t{}", fmt_f64(r.wilks_lambda));
    let _ = writeln!(out, "bartlett_statistic\t{}", fmt_f64(r.bartlett_statistic));
    let _ = writeln!(out, "bartlett_dof\t{}", r.bartlett_dof);
    let _ = writeln!(out, "bartlett_p\t{}", fmt_f64(r.bartlett_p));
    let _ = writeln!(out, "bartlett_reliable\t{}", r.bartlett_reliable);
    let _ = writeln!(out, "permutation_p\t{}", fmt_f64(r.permutation_p));
    let _ = writeln!(out, "replicates\t{}", r.replicates);
    let _ = writeln!(out, "seed\t{}", r.seed);
    let sizes = r
        .group_sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(out, "group_sizes\t{sizes}");
    let _ = writeln!(out, "covariates\t{}", r.covariates.join(","));
    out
}

/// Standardized-difference table.
pub fn standardized_difference_report(diffs: &[StandardizedDifference]) -> String {
    let mut out = String::from("covariate\tfactor\tstd_diff\n");
    for d in diffs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            d.covariate,
            d.factor,
            fmt_f64(d.difference)
        );
    }
    out
}

/// Trimming audit log: one removal per line.
pub fn trim_report(r: &TrimResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "initial_p\t{}", fmt_f64(r.initial_p));
    let _ = writeln!(out, "final_p\t{}", fmt_f64(r.final_p));
    let _ = writeln!(out, "converged\t{}", r.converged);
    let _ = writeln!(out, "removed\t{}", r.audit.len());
    let _ = writeln!(out, "step\tunit\tp_after\tlambda_after");
    for (i, step) in r.audit.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            i + 1,
            step.removed_unit,
            fmt_f64(step.p_after),
            fmt_f64(step.lambda_after)
        );
    }
    out
}

/// Randomization-test summary.
pub fn fisher_report(t: &RandomizationTest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "statistic\t{}", fmt_f64(t.observed));
    let _ = writeln!(out, "p_value\t{}", fmt_f64(t.p_value));
    let _ = writeln!(
        out,
        "mode\t{}",
        if t.exact { "exact" } else { "monte-carlo" }
    );
    let _ = writeln!(out, "draws\t{}", t.draws);
    let _ = writeln!(out, "exceed_count\t{}", t.exceed_count);
    match t.seed {
        Some(s) => {
            let _ = writeln!(out, "seed\t{s}");
        }
        None => {
            let _ = writeln!(out, "seed\tNA");
        }
    }
    out
}

/// Null-distribution export: one statistic per line (Monte Carlo only).
pub fn null_distribution_report(t: &RandomizationTest) -> String {
    let mut out = String::from("statistic\n");
    for s in &t.null_statistics {
        let _ = writeln!(out, "{}", fmt_f64(*s));
    }
    out
}

/// Drop-count summary from ingestion.
pub fn ingestion_report_text(r: &IngestionReport) -> String {
    format!("{r}\n")
}

// ---------------------------------------------------------------------------
// Science-table file format

fn run_header(levels: &[i8]) -> String {
    let body = levels
        .iter()
        .map(|&l| if l > 0 { "+1" } else { "-1" })
        .collect::<Vec<_>>()
        .join(",");
    format!("y[{body}]")
}

/// Writes a science table: `unit` column then one `y[-1,...,+1]` column per
/// full-lattice run in canonical order, exact rationals as `a` or `a/b`.
pub fn write_science_table(table: &ScienceTable) -> String {
    let runs = crate::design::full_factorial_runs(table.k()).expect("valid k");
    let mut out = String::from("unit");
    for run in &runs {
        out.push('\t');
        out.push_str(&run_header(run.levels()));
    }
    out.push('\n');
    for i in 0..table.n_units() {
        let _ = write!(out, "{}", i + 1);
        for j in 0..table.run_count() {
            let _ = write!(out, "\t{}", table.outcome(i, j));
        }
        out.push('\n');
    }
    out
}

fn parse_rational(text: &str, row: usize) -> Result<BigRational> {
    let t = text.trim();
    if let Ok(r) = BigRational::from_str(t) {
        return Ok(r);
    }
    if let Ok(i) = BigInt::from_str(t) {
        return Ok(BigRational::from(i));
    }
    // decimal form: mantissa over a power of ten
    if let Some((whole, frac)) = t.split_once('.') {
        let digits = format!("{whole}{frac}");
        if let Ok(numer) = BigInt::from_str(&digits) {
            let denom = BigInt::from(10u32).pow(frac.len() as u32);
            return Ok(BigRational::new(numer, denom));
        }
    }
    Err(Error::Load {
        row,
        message: format!("unparseable outcome '{t}'"),
    })
}

/// Parses the science-table format written by [`write_science_table`].
/// Columns may appear in any order; every full-lattice run must be present.
pub fn parse_science_table(text: &str) -> Result<ScienceTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::Load {
        row: 0,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols.first() != Some(&"unit") {
        return Err(Error::Load {
            row: 1,
            message: "first column must be 'unit'".into(),
        });
    }
    let run_count = cols.len() - 1;
    if run_count == 0 || run_count & (run_count - 1) != 0 {
        return Err(Error::Load {
            row: 1,
            message: format!("expected a power-of-2 run count, got {run_count}"),
        });
    }
    let k = run_count.trailing_zeros() as u8;
    let runs = crate::design::full_factorial_runs(k)?;
    // map each header column to its canonical lattice position
    let mut position = vec![usize::MAX; run_count];
    for (c, name) in cols[1..].iter().enumerate() {
        let expected: Vec<usize> = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| run_header(r.levels()) == *name)
            .map(|(j, _)| j)
            .collect();
        match expected.as_slice() {
            [j] => {
                if position.contains(j) {
                    return Err(Error::Load {
                        row: 1,
                        message: format!("duplicate run column '{name}'"),
                    });
                }
                position[c] = *j;
            }
            _ => {
                return Err(Error::Load {
                    row: 1,
                    message: format!("unknown run column '{name}'"),
                })
            }
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::Load {
                row: row_no,
                message: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let mut row = vec![BigRational::from(BigInt::from(0)); run_count];
        for (c, field) in fields[1..].iter().enumerate() {
            row[position[c]] = parse_rational(field, row_no)?;
        }
        rows.push(row);
    }
    ScienceTable::new(k, rows)
}

// ---------------------------------------------------------------------------
// Output manifest

/// `sha256<tab>name` lines for a set of named outputs, sorted by name so
/// reruns are byte-identical.
pub fn manifest(entries: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (name, content) in sorted {
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(out, "{hex}\t{name}");
    }
    out
}
