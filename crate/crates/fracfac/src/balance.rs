//! Covariate balance diagnostics: MANOVA with Wilks' lambda, permutation
//! p-values, standardized differences, and greedy trimming toward balance.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::algebra::{partial_alias_decomposition, EstimandMap};
use crate::data::{CovariateType, CovariateValue, Dataset};
use crate::design::DesignSpec;
use crate::error::{Error, Result};

/// Monte Carlo settings for permutation p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        BalanceOptions {
            replicates: 2000,
            seed: 0,
        }
    }
}

/// MANOVA balance summary for one grouping of the units.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub wilks_lambda: f64,
    /// Cross-check: `Π 1/(1+θ)` over the eigenvalues of `H E⁻¹`.
    pub eigenvalue_lambda: f64,
    pub bartlett_statistic: f64,
    pub bartlett_dof: usize,
    pub bartlett_p: f64,
    /// Whether the chi-square approximation is trustworthy here (large
    /// total n, no tiny group).
    pub bartlett_reliable: bool,
    pub permutation_p: f64,
    pub replicates: usize,
    pub seed: u64,
    pub group_sizes: Vec<usize>,
    pub covariates: Vec<String>,
}

/// Expands the dataset's covariates to a numeric matrix. Categorical
/// covariates become baseline-omitted indicator columns named
/// `name=level`; the baseline is the declared level or the first level in
/// sorted order.
pub fn covariate_matrix(dataset: &Dataset) -> Result<(DMatrix<f64>, Vec<String>)> {
    let n = dataset.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (idx, info) in dataset.covariate_info().iter().enumerate() {
        match info.kind {
            CovariateType::Numeric => {
                let col = dataset
                    .units()
                    .iter()
                    .map(|u| match u.covariate(idx) {
                        CovariateValue::Numeric(v) => Ok(*v),
                        CovariateValue::Categorical(_) => Err(Error::InvalidArgument(format!(
                            "covariate {} declared numeric but holds a level",
                            info.name
                        ))),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                columns.push(col);
                names.push(info.name.clone());
            }
            CovariateType::Categorical => {
                let mut levels: Vec<String> = dataset
                    .units()
                    .iter()
                    .map(|u| match u.covariate(idx) {
                        CovariateValue::Categorical(l) => Ok(l.clone()),
                        CovariateValue::Numeric(_) => Err(Error::InvalidArgument(format!(
                            "covariate {} declared categorical but holds a number",
                            info.name
                        ))),
                    })
                    .collect::<Result<Vec<String>>>()?;
                let mut unique = levels.clone();
                unique.sort();
                unique.dedup();
                let baseline = info
                    .baseline
                    .clone()
                    .unwrap_or_else(|| unique.first().cloned().unwrap_or_default());
                for level in unique.iter().filter(|l| **l != baseline) {
                    columns.push(levels.iter().map(|l| f64::from(l == level)).collect());
                    names.push(format!("{}={}", info.name, level));
                }
                levels.clear();
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidArgument("no covariate columns".into()));
    }
    let q = columns.len();
    let x = DMatrix::from_fn(n, q, |i, j| columns[j][i]);
    Ok((x, names))
}

/// Group labels by design run, in `design.runs()` order.
fn group_labels(dataset: &Dataset, design: &DesignSpec) -> Result<(Vec<usize>, usize)> {
    let runs = design.runs()?;
    let mut labels = Vec::with_capacity(dataset.len());
    for unit in dataset.units() {
        let j = runs
            .iter()
            .position(|r| r == unit.run())
            .ok_or_else(|| Error::ForeignRun {
                unit: unit.id().to_string(),
                run: unit.run().to_string(),
            })?;
        labels.push(j);
    }
    Ok((labels, runs.len()))
}

struct Scatter {
    wilks: f64,
    eigen: f64,
    group_sizes: Vec<usize>,
}

/// Between-group scatter `H = Σ n_k (X̄_k - X̄)(X̄_k - X̄)ᵀ` and within
/// scatter `E = Σ (n_k - 1) S_k`; Wilks' lambda is `|E| / |H + E|`.
fn wilks_scatter(x: &DMatrix<f64>, labels: &[usize], g: usize) -> Result<Scatter> {
    let n = x.nrows();
    let q = x.ncols();
    let mut group_sizes = vec![0usize; g];
    for &l in labels {
        group_sizes[l] += 1;
    }
    if group_sizes.contains(&0) {
        return Err(Error::CannotTest("a group has no units".into()));
    }
    let grand = DVector::from_fn(q, |j, _| x.column(j).sum() / n as f64);
    let mut group_means = vec![DVector::zeros(q); g];
    for (i, &l) in labels.iter().enumerate() {
        group_means[l] += x.row(i).transpose();
    }
    for (m, &s) in group_means.iter_mut().zip(&group_sizes) {
        *m /= s as f64;
    }
    let mut h = DMatrix::zeros(q, q);
    for (m, &s) in group_means.iter().zip(&group_sizes) {
        let d = m - &grand;
        h += &d * d.transpose() * s as f64;
    }
    let mut e = DMatrix::zeros(q, q);
    for (i, &l) in labels.iter().enumerate() {
        let d = x.row(i).transpose() - &group_means[l];
        e += &d * d.transpose();
    }
    let chol_e = Cholesky::new(e.clone()).ok_or(Error::SingularWithinScatter)?;
    let total = &h + &e;
    let chol_t = Cholesky::new(total).ok_or(Error::SingularWithinScatter)?;
    let det_ratio = {
        // |E|/|H+E| from the Cholesky diagonals, in log space
        let mut log = 0.0;
        for j in 0..q {
            log += chol_e.l()[(j, j)].ln() - chol_t.l()[(j, j)].ln();
        }
        (2.0 * log).exp()
    };
    // cross-check via the eigenvalues of L⁻¹ H L⁻ᵀ (E = LLᵀ), which equal
    // those of H E⁻¹
    let l = chol_e.l();
    let a = l
        .solve_lower_triangular(&h)
        .ok_or(Error::SingularWithinScatter)?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or(Error::SingularWithinScatter)?;
    let sym = (&m + m.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|&theta| 1.0 / (1.0 + theta.max(0.0)))
        .product();
    Ok(Scatter {
        wilks: det_ratio,
        eigen,
        group_sizes,
    })
}

fn bartlett(wilks: f64, n: usize, q: usize, g: usize) -> Result<(f64, usize, f64)> {
    let m = n as f64 - 1.0 - (q as f64 + g as f64) / 2.0;
    let statistic = -m * wilks.ln();
    let dof = q * (g - 1);
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p = 1.0 - chi.cdf(statistic.max(0.0));
    Ok((statistic, dof, p))
}

fn balance_from_labels(
    x: &DMatrix<f64>,
    labels: &[usize],
    g: usize,
    covariates: Vec<String>,
    options: BalanceOptions,
) -> Result<BalanceReport> {
    if options.replicates == 0 {
        return Err(Error::CannotTest("replicate count must be positive".into()));
    }
    let n = x.nrows();
    let q = x.ncols();
    let observed = wilks_scatter(x, labels, g)?;
    let (bartlett_statistic, bartlett_dof, bartlett_p) = bartlett(observed.wilks, n, q, g)?;
    let bartlett_reliable = n >= 20 && observed.group_sizes.iter().all(|&s| s >= 5);

    // permutation p: proportion of shuffled labelings at least as
    // imbalanced (smaller lambda), with the add-one correction
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let mut shuffled = labels.to_vec();
    let mut exceed = 0usize;
    let tol = 1e-12 * (1.0 + observed.wilks.abs());
    for _ in 0..options.replicates {
        shuffled.shuffle(&mut rng);
        match wilks_scatter(x, &shuffled, g) {
            Ok(s) => {
                if s.wilks <= observed.wilks + tol {
                    exceed += 1;
                }
            }
            // a singular permuted scatter counts as not more extreme
            Err(Error::SingularWithinScatter) => {}
            Err(e) => return Err(e),
        }
    }
    let permutation_p = (1 + exceed) as f64 / (options.replicates + 1) as f64;
    Ok(BalanceReport {
        wilks_lambda: observed.wilks,
        eigenvalue_lambda: observed.eigen,
        bartlett_statistic,
        bartlett_dof,
        bartlett_p,
        bartlett_reliable,
        permutation_p,
        replicates: options.replicates,
        seed: options.seed,
        group_sizes: observed.group_sizes,
        covariates,
    })
}

/// MANOVA balance check of the covariates across the design's runs.
pub fn manova_balance(
    dataset: &Dataset,
    design: &DesignSpec,
    options: BalanceOptions,
) -> Result<BalanceReport> {
    let (x, names) = covariate_matrix(dataset)?;
    let (labels, g) = group_labels(dataset, design)?;
    balance_from_labels(&x, &labels, g, names, options)
}

/// A standardized mean difference on one covariate column for one factor.
#[derive(Debug, Clone)]
pub struct StandardizedDifference {
    pub covariate: String,
    pub factor: u8,
    pub difference: f64,
}

/// For each expanded covariate column and each factor: the difference of
/// high- and low-level means over `sqrt((s²_hi + s²_lo)/2)`.
pub fn standardized_differences(
    dataset: &Dataset,
    design: &DesignSpec,
) -> Result<Vec<StandardizedDifference>> {
    let (x, names) = covariate_matrix(dataset)?;
    let mut out = Vec::new();
    for factor in 1..=design.k() {
        let hi: Vec<usize> = dataset
            .units()
            .iter()
            .enumerate()
            .filter(|(_, u)| u.run().level(factor) > 0)
            .map(|(i, _)| i)
            .collect();
        let lo: Vec<usize> = (0..dataset.len()).filter(|i| !hi.contains(i)).collect();
        if hi.len() < 2 || lo.len() < 2 {
            return Err(Error::CannotTest(format!(
                "factor {factor} needs at least 2 units at each level"
            )));
        }
        for (j, name) in names.iter().enumerate() {
            let stats = |idx: &[usize]| -> (f64, f64) {
                let mean = idx.iter().map(|&i| x[(i, j)]).sum::<f64>() / idx.len() as f64;
                let ss = idx.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>();
                (mean, ss / (idx.len() - 1) as f64)
            };
            let (m_hi, v_hi) = stats(&hi);
            let (m_lo, v_lo) = stats(&lo);
            let pooled = (v_hi + v_lo) / 2.0;
            if pooled == 0.0 {
                return Err(Error::UndefinedDifference);
            }
            out.push(StandardizedDifference {
                covariate: name.clone(),
                factor,
                difference: (m_hi - m_lo) / pooled.sqrt(),
            });
        }
    }
    Ok(out)
}

/// Balance test between two specific runs of the full lattice, with the
/// exact record of what the corresponding outcome contrast would estimate.
#[derive(Debug, Clone)]
pub struct GlobalTest {
    pub balance: BalanceReport,
    /// Decomposition of `Ȳ(run_a) - Ȳ(run_b)` into factorial effects.
    pub estimand: EstimandMap,
}

pub fn two_group_global_test(
    dataset: &Dataset,
    run_a: usize,
    run_b: usize,
    options: BalanceOptions,
) -> Result<GlobalTest> {
    let k = dataset.k();
    let lattice = 1usize << k;
    if run_a >= lattice || run_b >= lattice || run_a == run_b {
        return Err(Error::InvalidArgument("invalid run pair".into()));
    }
    let keep: Vec<usize> = dataset
        .units()
        .iter()
        .enumerate()
        .filter(|(_, u)| {
            let idx = u.run().canonical_index();
            idx == run_a || idx == run_b
        })
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::CannotTest("no units in the two runs".into()));
    }
    let (x_all, names) = covariate_matrix(dataset)?;
    let x = DMatrix::from_fn(keep.len(), x_all.ncols(), |i, j| x_all[(keep[i], j)]);
    let labels: Vec<usize> = keep
        .iter()
        .map(|&i| usize::from(dataset.units()[i].run().canonical_index() == run_b))
        .collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::CannotTest("both runs need units".into()));
    }
    let balance = balance_from_labels(&x, &labels, 2, names, options)?;
    let mut weights = vec![BigRational::zero(); lattice];
    weights[run_a] = BigRational::from(BigInt::from(1));
    weights[run_b] = BigRational::from(BigInt::from(-1));
    let estimand = partial_alias_decomposition(&weights, k)?;
    Ok(GlobalTest { balance, estimand })
}

/// One step of the trimming audit log.
#[derive(Debug, Clone)]
pub struct TrimStep {
    pub removed_unit: String,
    pub p_after: f64,
    pub lambda_after: f64,
}

#[derive(Debug, Clone)]
pub struct TrimResult {
    pub dataset: Dataset,
    pub audit: Vec<TrimStep>,
    pub initial_p: f64,
    pub final_p: f64,
    /// True when the target p-value was reached.
    pub converged: bool,
}

/// Greedy sequential trimming: while the permutation balance p-value is
/// below `p_star`, remove the single unit whose removal maximizes the
/// p-value (ties: smaller unit id), never shrinking a group below
/// `min_group_size`.
pub fn sequential_trim(
    dataset: &Dataset,
    design: &DesignSpec,
    options: BalanceOptions,
    p_star: f64,
    min_group_size: usize,
) -> Result<TrimResult> {
    if !(0.0 < p_star && p_star < 1.0) {
        return Err(Error::InvalidArgument("p* must be in (0, 1)".into()));
    }
    let mut current = dataset.clone();
    let initial = manova_balance(&current, design, options)?;
    let mut current_p = initial.permutation_p;
    let mut current_lambda = initial.wilks_lambda;
    let mut audit = Vec::new();
    while current_p < p_star {
        let (labels, g) = group_labels(&current, design)?;
        let mut sizes = vec![0usize; g];
        for &l in &labels {
            sizes[l] += 1;
        }
        // best single-unit removal, ties broken by smaller unit id
        let mut best: Option<(f64, f64, usize)> = None;
        for i in 0..current.len() {
            if sizes[labels[i]] <= min_group_size {
                continue;
            }
            let candidate = current.without_unit(i);
            let report = match manova_balance(&candidate, design, options) {
                Ok(r) => r,
                Err(Error::SingularWithinScatter) => continue,
                Err(e) => return Err(e),
            };
            let replace = match &best {
                None => true,
                Some((p, _, j)) => {
                    report.permutation_p > *p
                        || (report.permutation_p == *p
                            && current.units()[i].id() < current.units()[*j].id())
                }
            };
            if replace {
                best = Some((report.permutation_p, report.wilks_lambda, i));
            }
        }
        let Some((p, lambda, i)) = best else {
            break; // every removal is blocked or singular
        };
        let removed_unit = current.units()[i].id().to_string();
        current = current.without_unit(i);
        current_p = p;
        current_lambda = lambda;
        audit.push(TrimStep {
            removed_unit,
            p_after: p,
            lambda_after: lambda,
        });
    }
    let _ = current_lambda;
    Ok(TrimResult {
        dataset: current,
        audit,
        initial_p: initial.permutation_p,
        final_p: current_p,
        converged: current_p >= p_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateInfo, Unit};
    use crate::design::Run;
    use crate::word::EffectWord;
    use approx::assert_relative_eq;

    fn numeric_info(names: &[&str]) -> Vec<CovariateInfo> {
        names
            .iter()
            .map(|n| CovariateInfo {
                name: n.to_string(),
                kind: CovariateType::Numeric,
                baseline: None,
            })
            .collect()
    }

    fn unit(id: &str, levels: &[i8], covs: &[f64]) -> Unit {
        Unit::new(
            id.to_string(),
            Run::new(levels.to_vec()).unwrap(),
            0.0,
            covs.iter().map(|&v| CovariateValue::Numeric(v)).collect(),
        )
    }

    /// K=1 two-group dataset with one numeric covariate.
    fn two_groups(low: &[f64], high: &[f64]) -> Dataset {
        let mut units = Vec::new();
        for (i, &v) in low.iter().enumerate() {
            units.push(unit(&format!("l{i}"), &[-1], &[v]));
        }
        for (i, &v) in high.iter().enumerate() {
            units.push(unit(&format!("h{i}"), &[1], &[v]));
        }
        Dataset::new(1, numeric_info(&["x"]), units).unwrap()
    }

    #[test]
    fn wilks_lambda_by_hand() {
        // groups {0,2} and {1,3}: H = 1, E = 4, lambda = 4/5
        let ds = two_groups(&[0.0, 2.0], &[1.0, 3.0]);
        let design = DesignSpec::full(1).unwrap();
        let r = manova_balance(
            &ds,
            &design,
            BalanceOptions {
                replicates: 50,
                seed: 3,
            },
        )
        .unwrap();
        assert_relative_eq!(r.wilks_lambda, 0.8, epsilon = 1e-10);
        assert_relative_eq!(r.eigenvalue_lambda, 0.8, epsilon = 1e-10);
        assert_eq!(r.group_sizes, [2, 2]);
        // Bartlett: m = 4 - 1 - (1+2)/2 = 1.5, stat = -1.5 ln(0.8)
        assert_relative_eq!(r.bartlett_statistic, -1.5 * 0.8f64.ln(), epsilon = 1e-10);
        assert_eq!(r.bartlett_dof, 1);
        assert!(!r.bartlett_reliable);
    }

    #[test]
    fn lambda_is_affine_invariant() {
        let mut units = Vec::new();
        let data = [
            ([-1i8, -1i8], [1.2, 0.4]),
            ([-1, -1], [0.8, 1.1]),
            ([-1, 1], [2.0, 0.2]),
            ([-1, 1], [1.4, 0.9]),
            ([1, -1], [0.3, 2.2]),
            ([1, -1], [0.9, 1.8]),
            ([1, 1], [1.7, 1.3]),
            ([1, 1], [2.4, 0.5]),
        ];
        for (i, (levels, covs)) in data.iter().enumerate() {
            units.push(unit(&format!("u{i}"), levels, covs));
        }
        let ds = Dataset::new(2, numeric_info(&["a", "b"]), units).unwrap();
        let design = DesignSpec::full(2).unwrap();
        let opts = BalanceOptions {
            replicates: 30,
            seed: 1,
        };
        let base = manova_balance(&ds, &design, opts).unwrap();
        assert_relative_eq!(base.wilks_lambda, base.eigenvalue_lambda, epsilon = 1e-8);

        // affine transform of the covariates: x -> A x + b
        let transformed: Vec<Unit> = ds
            .units()
            .iter()
            .map(|u| {
                let (a, b) = match (u.covariate(0), u.covariate(1)) {
                    (CovariateValue::Numeric(a), CovariateValue::Numeric(b)) => (*a, *b),
                    _ => unreachable!(),
                };
                Unit::new(
                    u.id().to_string(),
                    u.run().clone(),
                    0.0,
                    vec![
                        CovariateValue::Numeric(2.0 * a - 0.7 * b + 3.0),
                        CovariateValue::Numeric(0.5 * a + 1.3 * b - 1.0),
                    ],
                )
            })
            .collect();
        let ds2 = Dataset::new(2, numeric_info(&["a", "b"]), transformed).unwrap();
        let r2 = manova_balance(&ds2, &design, opts).unwrap();
        assert_relative_eq!(r2.wilks_lambda, base.wilks_lambda, epsilon = 1e-8);
        // identical labels are permuted identically, so the p agrees too
        assert_eq!(r2.permutation_p, base.permutation_p);
    }

    #[test]
    fn permutation_p_is_reproducible_and_sane() {
        let ds = two_groups(&[0.1, 0.4, 0.2, 0.3], &[5.0, 5.3, 5.1, 5.2]);
        let design = DesignSpec::full(1).unwrap();
        let opts = BalanceOptions {
            replicates: 400,
            seed: 9,
        };
        let a = manova_balance(&ds, &design, opts).unwrap();
        let b = manova_balance(&ds, &design, opts).unwrap();
        assert_eq!(a.permutation_p, b.permutation_p);
        // grossly imbalanced: small p
        assert!(a.permutation_p < 0.05);
        // balanced data: large p
        let ds = two_groups(&[0.0, 1.0, 2.0, 3.0], &[0.1, 1.1, 2.1, 2.9]);
        let r = manova_balance(&ds, &design, opts).unwrap();
        assert!(r.permutation_p > 0.2);
    }

    #[test]
    fn singular_within_scatter_is_an_error() {
        // duplicated covariate columns make E singular
        let mut units = Vec::new();
        for (i, &v) in [0.0, 1.0, 2.0, 3.0].iter().enumerate() {
            units.push(unit(
                &format!("u{i}"),
                &[if i % 2 == 0 { -1 } else { 1 }],
                &[v, v],
            ));
        }
        let ds = Dataset::new(1, numeric_info(&["x", "x2"]), units).unwrap();
        let design = DesignSpec::full(1).unwrap();
        assert!(matches!(
            manova_balance(&ds, &design, BalanceOptions::default()),
            Err(Error::SingularWithinScatter)
        ));
    }

    #[test]
    fn categorical_expansion() {
        let info = vec![CovariateInfo {
            name: "smoke".into(),
            kind: CovariateType::Categorical,
            baseline: Some("No".into()),
        }];
        let units = vec![
            Unit::new(
                "a".into(),
                Run::new(vec![-1]).unwrap(),
                0.0,
                vec![CovariateValue::Categorical("No".into())],
            ),
            Unit::new(
                "b".into(),
                Run::new(vec![1]).unwrap(),
                0.0,
                vec![CovariateValue::Categorical("Yes".into())],
            ),
            Unit::new(
                "c".into(),
                Run::new(vec![1]).unwrap(),
                0.0,
                vec![CovariateValue::Categorical("Former".into())],
            ),
        ];
        let ds = Dataset::new(1, info, units).unwrap();
        let (x, names) = covariate_matrix(&ds).unwrap();
        assert_eq!(names, ["smoke=Former", "smoke=Yes"]);
        assert_eq!(
            x.column(0).iter().copied().collect::<Vec<_>>(),
            [0.0, 0.0, 1.0]
        );
        assert_eq!(
            x.column(1).iter().copied().collect::<Vec<_>>(),
            [0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn standardized_difference_by_hand() {
        let ds = two_groups(&[0.0, 2.0], &[3.0, 5.0]);
        let design = DesignSpec::full(1).unwrap();
        let diffs = standardized_differences(&ds, &design).unwrap();
        assert_eq!(diffs.len(), 1);
        // means 1 and 4, both variances 2: (4-1)/sqrt(2) = 3/sqrt(2)
        assert_relative_eq!(diffs[0].difference, 3.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(diffs[0].factor, 1);

        let ds = two_groups(&[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(
            standardized_differences(&ds, &design),
            Err(Error::UndefinedDifference)
        ));
    }

    #[test]
    fn global_test_decomposes_corner_contrast() {
        // K=3 units in runs z1 (index 0) and z8 (index 7)
        let mut units = Vec::new();
        for (i, &v) in [0.2, 0.5, 0.9].iter().enumerate() {
            units.push(unit(&format!("a{i}"), &[-1, -1, -1], &[v]));
        }
        for (i, &v) in [0.4, 0.6, 1.0].iter().enumerate() {
            units.push(unit(&format!("b{i}"), &[1, 1, 1], &[v]));
        }
        let ds = Dataset::new(3, numeric_info(&["x"]), units).unwrap();
        let t = two_group_global_test(
            &ds,
            7,
            0,
            BalanceOptions {
                replicates: 60,
                seed: 5,
            },
        )
        .unwrap();
        let w = |f: &[u8]| EffectWord::from_factors(f).unwrap();
        let keys: Vec<EffectWord> = t.estimand.keys().copied().collect();
        assert_eq!(keys, [w(&[1]), w(&[2]), w(&[3]), w(&[1, 2, 3])]);
        let one = BigRational::from(BigInt::from(1));
        assert!(t.estimand.values().all(|c| *c == one));
        assert_eq!(t.balance.group_sizes, [3, 3]);
    }

    #[test]
    fn trim_is_greedy_over_single_removals() {
        // clearly separated groups: the initial p sits at the Monte Carlo
        // floor, so trimming runs until the minimum group sizes bind
        let ds = two_groups(&[0.0, 0.1, 0.2, 0.3], &[5.0, 5.1, 5.2, 5.3]);
        let design = DesignSpec::full(1).unwrap();
        let opts = BalanceOptions {
            replicates: 200,
            seed: 13,
        };
        let r = sequential_trim(&ds, &design, opts, 0.5, 2).unwrap();
        assert!(!r.audit.is_empty());
        assert!(!r.converged);
        // both groups end at the minimum size
        assert_eq!(r.dataset.len(), 4);
        assert_eq!(r.dataset.len(), ds.len() - r.audit.len());
        // the first removal is the argmax over single-unit removals,
        // ties broken by the smaller unit id
        let mut best: Option<(f64, String)> = None;
        for i in 0..ds.len() {
            let report = manova_balance(&ds.without_unit(i), &design, opts).unwrap();
            let id = ds.units()[i].id().to_string();
            let better = match &best {
                None => true,
                Some((p, b)) => {
                    report.permutation_p > *p || (report.permutation_p == *p && id < *b)
                }
            };
            if better {
                best = Some((report.permutation_p, id));
            }
        }
        assert_eq!(r.audit[0].removed_unit, best.unwrap().1);
    }

    #[test]
    fn trim_respects_min_group_size() {
        let ds = two_groups(&[0.0, 0.1], &[8.0, 9.0]);
        let design = DesignSpec::full(1).unwrap();
        let opts = BalanceOptions {
            replicates: 100,
            seed: 2,
        };
        let r = sequential_trim(&ds, &design, opts, 0.99, 2).unwrap();
        // no unit may be removed: both groups are at the minimum already
        assert!(r.audit.is_empty());
        assert!(!r.converged);
        assert_eq!(r.dataset.len(), 4);
    }

    #[test]
    fn trim_noop_when_already_balanced() {
        let ds = two_groups(&[0.0, 1.0, 2.0, 3.0], &[0.1, 1.1, 2.1, 2.9]);
        let design = DesignSpec::full(1).unwrap();
        let opts = BalanceOptions {
            replicates: 150,
            seed: 4,
        };
        let r = sequential_trim(&ds, &design, opts, 0.1, 2).unwrap();
        assert!(r.audit.is_empty());
        assert!(r.converged);
        assert_eq!(r.initial_p, r.final_p);
    }
}
