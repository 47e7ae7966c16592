//! The regression bridge: OLS with ±1 contrast regressors reproduces the
//! Neymanian estimators (`2β̂ = τ̂*`, `4·HC2 = v̂`), and the rows of
//! `B = (XᵀX)⁻¹Xᵀ` expose what each coefficient estimates when the design
//! is incomplete.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::algebra::{partial_alias_decomposition, EstimandMap};
use crate::data::Dataset;
use crate::design::{DesignSpec, Run};
use crate::error::{Error, Result};
use crate::estimate::{confidence_interval, EffectEstimate, Method};
use crate::word::EffectWord;

/// A design-matrix column: an effect-word contrast or a named covariate.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Word(EffectWord),
    Covariate(String),
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Word(w) => write!(f, "{w}"),
            Column::Covariate(name) => write!(f, "{name}"),
        }
    }
}

/// Relative pivot threshold for dropping collinear columns.
const PIVOT_TOLERANCE: f64 = 1e-10;

/// An OLS fit with the collinearity bookkeeping needed for the bridge.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    labels: Vec<Column>,
    dropped: Vec<Column>,
    x: DMatrix<f64>,
    coefficients: DVector<f64>,
    residuals: DVector<f64>,
    leverages: Vec<f64>,
    /// `B = (XᵀX)⁻¹Xᵀ` over the retained columns.
    weights: DMatrix<f64>,
}

impl RegressionFit {
    pub fn labels(&self) -> &[Column] {
        &self.labels
    }

    pub fn dropped(&self) -> &[Column] {
        &self.dropped
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn coefficient(&self, label: &Column) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn leverages(&self) -> &[f64] {
        &self.leverages
    }

    /// The weight matrix `B = (XᵀX)⁻¹Xᵀ`; row r holds the per-unit weights
    /// whose inner product with the outcomes gives coefficient r.
    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    /// Classical `σ̂²(XᵀX)⁻¹` covariance with `σ̂² = êᵀê/(n-r)`.
    pub fn classical_covariance(&self) -> Result<DMatrix<f64>> {
        let df = self.n() as i64 - self.rank() as i64;
        if df <= 0 {
            return Err(Error::InvalidArgument(
                "no residual degrees of freedom for the classical variance".into(),
            ));
        }
        let sigma2 = self.residuals.dot(&self.residuals) / df as f64;
        Ok(&self.weights * self.weights.transpose() * sigma2)
    }

    /// HC2 covariance `B Ω̂ Bᵀ` with `Ω̂ = diag(ê²/(1-h))`; errors when a
    /// unit has leverage one.
    pub fn hc2_covariance(&self) -> Result<DMatrix<f64>> {
        let r = self.rank();
        let mut cov = DMatrix::zeros(r, r);
        for (i, &h) in self.leverages.iter().enumerate() {
            if 1.0 - h <= PIVOT_TOLERANCE {
                return Err(Error::Hc2Unavailable(i));
            }
            let omega = self.residuals[i].powi(2) / (1.0 - h);
            let col = self.weights.column(i);
            cov += col * col.transpose() * omega;
        }
        Ok(cov)
    }

    /// The exact estimand identified by a coefficient when every retained
    /// column is an effect-word contrast over the given unit runs. Non-mean
    /// words are reported on the factorial-effect scale (`2β̂`).
    pub fn implied_estimand(&self, unit_runs: &[Run], word: &EffectWord) -> Result<EstimandMap> {
        let words: Vec<EffectWord> = self
            .labels
            .iter()
            .map(|l| match l {
                Column::Word(w) => Ok(*w),
                Column::Covariate(_) => Err(Error::UnsupportedModel),
            })
            .collect::<Result<_>>()?;
        if unit_runs.len() != self.n() {
            return Err(Error::InvalidArgument(
                "unit run list length mismatch".into(),
            ));
        }
        let target = words
            .iter()
            .position(|w| w == &word.unsigned())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("word {word} is not a retained column"))
            })?;
        let k = unit_runs
            .first()
            .map(Run::k)
            .ok_or_else(|| Error::InvalidArgument("no units".into()))?;

        let b_row = exact_weight_row(&words, unit_runs, target)?;
        // aggregate per-unit weights into per-run weights on the 2^k lattice
        let mut run_weights = vec![BigRational::zero(); 1 << k];
        for (i, run) in unit_runs.iter().enumerate() {
            run_weights[run.canonical_index()] += &b_row[i];
        }
        if !word.is_mean() {
            let two = BigRational::from(BigInt::from(2));
            for w in &mut run_weights {
                *w *= &two;
            }
        }
        partial_alias_decomposition(&run_weights, k)
    }
}

/// Greedy OLS: columns are taken left to right and a column whose residual
/// norm after projection falls below `1e-10` times the largest column norm
/// is dropped as collinear with its predecessors.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], labels: &[Column]) -> Result<RegressionFit> {
    let n = x.nrows();
    let c = x.ncols();
    if labels.len() != c {
        return Err(Error::InvalidArgument(
            "label count must match column count".into(),
        ));
    }
    if y.len() != n {
        return Err(Error::InvalidArgument(
            "outcome length must match row count".into(),
        ));
    }
    if n == 0 || c == 0 {
        return Err(Error::InvalidArgument("empty design matrix".into()));
    }
    let max_norm = (0..c).map(|j| x.column(j).norm()).fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return Err(Error::InvalidArgument("design matrix is zero".into()));
    }
    let threshold = PIVOT_TOLERANCE * max_norm;

    // modified Gram-Schmidt with column rejection
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new(); // column j of R (len = #accepted)
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped: Vec<Column> = Vec::new();
    for (j, label) in labels.iter().enumerate() {
        let mut v: DVector<f64> = x.column(j).into();
        let mut coeffs = Vec::with_capacity(q_cols.len());
        for q in &q_cols {
            let r = q.dot(&v);
            v -= q * r;
            coeffs.push(r);
        }
        // second orthogonalization pass for numerical safety
        for (q, coeff) in q_cols.iter().zip(coeffs.iter_mut()) {
            let r = q.dot(&v);
            v -= q * r;
            *coeff += r;
        }
        let pivot = v.norm();
        if pivot < threshold {
            dropped.push(label.clone());
            continue;
        }
        coeffs.push(pivot);
        q_cols.push(v / pivot);
        r_cols.push(coeffs);
        kept.push(j);
    }
    let r = kept.len();

    // B = R⁻¹Qᵀ via back substitution on R·B = Qᵀ
    let qt = {
        let mut m = DMatrix::zeros(r, n);
        for (i, q) in q_cols.iter().enumerate() {
            m.set_row(i, &q.transpose());
        }
        m
    };
    let mut weights = qt.clone();
    for i in (0..r).rev() {
        for (below, r_col) in r_cols.iter().enumerate().skip(i + 1) {
            let rib = r_col[i];
            if rib != 0.0 {
                let scaled = weights.row(below) * rib;
                let updated = weights.row(i) - scaled;
                weights.set_row(i, &updated);
            }
        }
        let diag = r_cols[i][i];
        let scaled = weights.row(i) / diag;
        weights.set_row(i, &scaled);
    }

    let yv = DVector::from_column_slice(y);
    let coefficients = &weights * &yv;
    let x_kept = {
        let mut m = DMatrix::zeros(n, r);
        for (col, &j) in kept.iter().enumerate() {
            m.set_column(col, &x.column(j));
        }
        m
    };
    let residuals = &yv - &x_kept * &coefficients;
    let leverages: Vec<f64> = (0..n)
        .map(|i| q_cols.iter().map(|q| q[i] * q[i]).sum())
        .collect();
    let labels = kept.iter().map(|&j| labels[j].clone()).collect();
    Ok(RegressionFit {
        labels,
        dropped,
        x: x_kept,
        coefficients,
        residuals,
        leverages,
        weights,
    })
}

/// Rejects word lists that request two members of the same alias class.
pub fn check_alias_distinct(words: &[EffectWord], design: &DesignSpec) -> Result<()> {
    let table = design.alias_table()?;
    for (i, a) in words.iter().enumerate() {
        for b in &words[i + 1..] {
            if a.unsigned() == b.unsigned()
                || table
                    .alias_set(a)
                    .iter()
                    .any(|m| m.unsigned() == b.unsigned())
            {
                return Err(Error::RedundantColumn(a.to_string(), b.to_string()));
            }
        }
    }
    Ok(())
}

/// Builds the ±1 design matrix whose columns evaluate the given words at
/// each unit's run.
pub fn word_design_matrix(
    unit_runs: &[Run],
    words: &[EffectWord],
) -> Result<(DMatrix<f64>, Vec<Column>)> {
    if unit_runs.is_empty() || words.is_empty() {
        return Err(Error::InvalidArgument("empty design matrix request".into()));
    }
    let k = unit_runs[0].k();
    for w in words {
        if w.max_factor() > k {
            return Err(Error::InvalidArgument(format!(
                "word {w} uses a factor beyond the run dimension {k}"
            )));
        }
    }
    let x = DMatrix::from_fn(unit_runs.len(), words.len(), |i, j| {
        unit_runs[i].word_level(&words[j]) as f64
    });
    let labels = words.iter().map(|w| Column::Word(*w)).collect();
    Ok((x, labels))
}

/// Fits the factorial regression of outcomes on the given word contrasts,
/// refusing word lists that alias each other under the design.
pub fn factorial_regression(
    dataset: &Dataset,
    design: &DesignSpec,
    words: &[EffectWord],
) -> Result<RegressionFit> {
    check_alias_distinct(words, design)?;
    let runs: Vec<Run> = dataset.units().iter().map(|u| u.run().clone()).collect();
    let y: Vec<f64> = dataset.units().iter().map(|u| u.outcome()).collect();
    let (x, labels) = word_design_matrix(&runs, words)?;
    ols_fit(&x, &y, &labels)
}

/// Bridges a fitted coefficient back to the factorial-effect scale:
/// estimate `2β̂`, variance `4·HC2`.
pub fn effect_from_fit(
    fit: &RegressionFit,
    design: &DesignSpec,
    word: &EffectWord,
    alpha: f64,
) -> Result<EffectEstimate> {
    let label = Column::Word(word.unsigned());
    let idx =
        fit.labels.iter().position(|l| l == &label).ok_or_else(|| {
            Error::InvalidArgument(format!("word {word} is not a retained column"))
        })?;
    let scale = if word.is_mean() { 1.0 } else { 2.0 };
    let estimate = scale * fit.coefficients[idx];
    let variance = match fit.hc2_covariance() {
        Ok(cov) => Some(scale * scale * cov[(idx, idx)]),
        Err(Error::Hc2Unavailable(_)) => None,
        Err(e) => return Err(e),
    };
    let ci = match variance {
        Some(v) => Some(confidence_interval(estimate, v, alpha)?),
        None => None,
    };
    let alias_class = if design.is_full() {
        vec![word.unsigned()]
    } else {
        design.alias_table()?.alias_set(word)
    };
    Ok(EffectEstimate {
        word: word.unsigned(),
        estimate,
        variance,
        ci,
        alias_class,
        estimand: None,
        method: Method::Regression,
    })
}

/// Row `target` of `B = (XᵀX)⁻¹Xᵀ` in exact rational arithmetic, for a
/// ±1 word design matrix.
fn exact_weight_row(
    words: &[EffectWord],
    unit_runs: &[Run],
    target: usize,
) -> Result<Vec<BigRational>> {
    let n = unit_runs.len();
    let r = words.len();
    // integer X entries
    let x: Vec<Vec<i64>> = unit_runs
        .iter()
        .map(|run| words.iter().map(|w| run.word_level(w) as i64).collect())
        .collect();
    // XᵀX
    let mut gram: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); r]; r];
    for (a, row) in gram.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let s: i64 = x.iter().map(|xi| xi[a] * xi[b]).sum();
            *cell = BigRational::from(BigInt::from(s));
        }
    }
    // solve (XᵀX) v = e_target by Gauss-Jordan, giving row target of the
    // inverse (the Gram matrix is symmetric)
    let mut aug = gram;
    let mut rhs: Vec<BigRational> = (0..r)
        .map(|i| {
            if i == target {
                BigRational::from(BigInt::from(1))
            } else {
                BigRational::zero()
            }
        })
        .collect();
    for col in 0..r {
        let pivot_row = (col..r)
            .find(|&i| !aug[i][col].is_zero())
            .ok_or(Error::SingularCovariance)?;
        aug.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = aug[col][col].clone();
        for cell in &mut aug[col] {
            *cell /= &pivot;
        }
        rhs[col] /= &pivot;
        let pivot_cells = aug[col].clone();
        for i in 0..r {
            if i == col || aug[i][col].is_zero() {
                continue;
            }
            let factor = aug[i][col].clone();
            for (cell, p) in aug[i].iter_mut().zip(&pivot_cells) {
                *cell -= &factor * p;
            }
            let sub = &factor * &rhs[col];
            rhs[i] -= sub;
        }
    }
    // row of B: vᵀXᵀ
    let mut out = Vec::with_capacity(n);
    for xi in &x {
        let mut acc = BigRational::zero();
        for (a, v) in rhs.iter().enumerate() {
            acc += v * BigRational::from(BigInt::from(xi[a]));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Convenience: the exact weight matrix `B` as floats, rows in label order.
pub fn exact_weight_matrix(words: &[EffectWord], unit_runs: &[Run]) -> Result<DMatrix<f64>> {
    let r = words.len();
    let n = unit_runs.len();
    let mut m = DMatrix::zeros(r, n);
    for target in 0..r {
        let row = exact_weight_row(words, unit_runs, target)?;
        for (i, v) in row.iter().enumerate() {
            m[(target, i)] = v.to_f64().expect("finite weight");
        }
    }
    Ok(m)
}
