//! Neymanian point estimation, variance/covariance estimation, confidence
//! intervals, Wald regions, and incomplete-design estimators.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::algebra::{partial_alias_decomposition, EstimandMap};
use crate::data::Dataset;
use crate::design::{DesignSpec, Run};
use crate::error::{Error, Result};
use crate::word::EffectWord;

/// Per-run counts, observed means, and sample variances for a design.
#[derive(Debug, Clone)]
pub struct GroupSummary {
    design: DesignSpec,
    runs: Vec<Run>,
    counts: Vec<usize>,
    means: Vec<f64>,
    variances: Vec<Option<f64>>,
}

impl GroupSummary {
    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, j: usize) -> usize {
        self.counts[j]
    }

    /// Observed mean for run j; NaN when the run is empty.
    pub fn mean(&self, j: usize) -> f64 {
        self.means[j]
    }

    /// Sample variance (divisor n_j - 1); None when n_j < 2.
    pub fn variance(&self, j: usize) -> Option<f64> {
        self.variances[j]
    }

    pub fn total_units(&self) -> usize {
        self.counts.iter().sum()
    }

    fn require_occupied(&self) -> Result<()> {
        for (j, &n) in self.counts.iter().enumerate() {
            if n == 0 {
                return Err(Error::EmptyRun(self.runs[j].to_string()));
            }
        }
        Ok(())
    }

    fn require_variances(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.runs.len());
        for (j, v) in self.variances.iter().enumerate() {
            match v {
                Some(s2) => out.push(*s2),
                None => return Err(Error::VarianceUnavailable(self.runs[j].to_string())),
            }
        }
        Ok(out)
    }

    /// Builds a summary directly from per-run outcome lists, in the order of
    /// `design.runs()`. Intended for tests and simulation.
    pub fn from_groups(design: DesignSpec, groups: Vec<Vec<f64>>) -> Result<Self> {
        let runs = design.runs()?;
        if groups.len() != runs.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} groups, got {}",
                runs.len(),
                groups.len()
            )));
        }
        let mut counts = Vec::new();
        let mut means = Vec::new();
        let mut variances = Vec::new();
        for ys in &groups {
            let n = ys.len();
            counts.push(n);
            if n == 0 {
                means.push(f64::NAN);
                variances.push(None);
                continue;
            }
            let mean = ys.iter().sum::<f64>() / n as f64;
            means.push(mean);
            if n >= 2 {
                let ss: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
                variances.push(Some(ss / (n - 1) as f64));
            } else {
                variances.push(None);
            }
        }
        Ok(GroupSummary {
            design,
            runs,
            counts,
            means,
            variances,
        })
    }
}

/// Groups a dataset's units by design run. Units assigned to a run outside
/// the design are an error; design runs with no units are reported empty.
pub fn summarize_groups(dataset: &Dataset, design: &DesignSpec) -> Result<GroupSummary> {
    let runs = design.runs()?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); runs.len()];
    for unit in dataset.units() {
        match runs.iter().position(|r| r == unit.run()) {
            Some(j) => groups[j].push(unit.outcome()),
            None => {
                return Err(Error::ForeignRun {
                    unit: unit.id().to_string(),
                    run: unit.run().to_string(),
                })
            }
        }
    }
    GroupSummary::from_groups(design.clone(), groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Neyman,
    Regression,
    Incomplete,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Neyman => "neyman",
            Method::Regression => "regression",
            Method::Incomplete => "incomplete",
        }
    }
}

/// Point estimate, variance, and interval for one effect word.
#[derive(Debug, Clone)]
pub struct EffectEstimate {
    pub word: EffectWord,
    pub estimate: f64,
    pub variance: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub alias_class: Vec<EffectWord>,
    /// Exact identification record for incomplete-design estimators.
    pub estimand: Option<EstimandMap>,
    pub method: Method,
}

impl EffectEstimate {
    pub fn stderr(&self) -> Option<f64> {
        self.variance.map(f64::sqrt)
    }
}

fn contrast_scale(design: &DesignSpec, word: &EffectWord) -> f64 {
    let exp = design.k() as i32 - design.p() as i32 - if word.is_mean() { 0 } else { 1 };
    0.5f64.powi(exp)
}

/// Point estimate `2^-(K-p-1) g*ᵀ Ȳ_obs` (mean word: `2^-(K-p)`).
pub fn estimate_effect(summary: &GroupSummary, word: &EffectWord) -> Result<f64> {
    summary.require_occupied()?;
    let scale = contrast_scale(summary.design(), word);
    let mut acc = 0.0;
    for (j, run) in summary.runs().iter().enumerate() {
        acc += run.word_level(word) as f64 * summary.mean(j);
    }
    Ok(scale * acc)
}

/// Conservative Neyman variance estimate; the same value for every
/// non-mean word of a given design and dataset.
pub fn neyman_variance(summary: &GroupSummary, word: &EffectWord) -> Result<f64> {
    let s2 = summary.require_variances()?;
    let scale = contrast_scale(summary.design(), word);
    let sum: f64 = s2
        .iter()
        .zip(summary.counts())
        .map(|(s2, &n)| s2 / n as f64)
        .sum();
    Ok(scale * scale * sum)
}

/// Neyman covariance estimate between two non-mean effect estimators.
/// Not guaranteed conservative.
pub fn neyman_covariance(
    summary: &GroupSummary,
    word_a: &EffectWord,
    word_b: &EffectWord,
) -> Result<f64> {
    let s2 = summary.require_variances()?;
    let scale = contrast_scale(summary.design(), word_a);
    let mut acc = 0.0;
    for (j, run) in summary.runs().iter().enumerate() {
        let agree = run.word_level(word_a) == run.word_level(word_b);
        let term = s2[j] / summary.count(j) as f64;
        acc += if agree { term } else { -term };
    }
    Ok(scale * scale * acc)
}

/// Normal-approximation interval `estimate ± z_{α/2} sqrt(v)`.
pub fn confidence_interval(estimate: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if variance < 0.0 {
        return Err(Error::InvalidArgument(
            "variance must be nonnegative".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(1.0 - alpha / 2.0);
    let half = z * variance.sqrt();
    Ok((estimate - half, estimate + half))
}

/// Full Neymanian estimate for one word: point, variance, CI, alias class.
pub fn effect_estimate(
    summary: &GroupSummary,
    word: &EffectWord,
    alpha: f64,
) -> Result<EffectEstimate> {
    let estimate = estimate_effect(summary, word)?;
    let variance = neyman_variance(summary, word)?;
    let ci = confidence_interval(estimate, variance, alpha)?;
    let alias_class = if summary.design().is_full() {
        vec![*word]
    } else {
        summary.design().alias_table()?.alias_set(word)
    };
    Ok(EffectEstimate {
        word: *word,
        estimate,
        variance: Some(variance),
        ci: Some(ci),
        alias_class,
        estimand: None,
        method: Method::Neyman,
    })
}

/// Wald-type confidence region for a vector of effect estimates.
#[derive(Debug, Clone)]
pub struct WaldRegion {
    pub estimates: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub statistic: f64,
    pub threshold: f64,
    pub dof: usize,
    pub inside: bool,
}

/// Evaluates `(τ̂ - μ₀)ᵀ V̂⁻¹ (τ̂ - μ₀)` against the chi-square
/// `1 - α` quantile with `len` degrees of freedom. `null` defaults to zero.
pub fn wald_region(
    estimates: &[f64],
    covariance: &DMatrix<f64>,
    alpha: f64,
    null: Option<&[f64]>,
) -> Result<WaldRegion> {
    let d = estimates.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::InvalidArgument(
            "covariance dimension mismatch".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)".into()));
    }
    let sym_tol = 1e-8 * covariance.amax().max(1.0);
    if (covariance - covariance.transpose()).amax() > sym_tol {
        return Err(Error::InvalidArgument(
            "covariance must be symmetric".into(),
        ));
    }
    let chol = Cholesky::new(covariance.clone()).ok_or(Error::SingularCovariance)?;
    let mut diff = DVector::from_column_slice(estimates);
    if let Some(mu) = null {
        if mu.len() != d {
            return Err(Error::InvalidArgument(
                "null vector dimension mismatch".into(),
            ));
        }
        diff -= DVector::from_column_slice(mu);
    }
    let solved = chol.solve(&diff);
    let statistic = diff.dot(&solved);
    let chi = ChiSquared::new(d as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let threshold = chi.inverse_cdf(1.0 - alpha);
    Ok(WaldRegion {
        estimates: estimates.to_vec(),
        covariance: covariance.clone(),
        statistic,
        threshold,
        dof: d,
        inside: statistic <= threshold,
    })
}

/// Builds the ±1/2^(m-1) dot-g weight vector over the full `2^k` lattice
/// for estimating `word` from the given subset of run indices. The subset
/// must split evenly on the word's contrast.
pub fn dot_g_weights(
    word: &EffectWord,
    included_runs: &[usize],
    k: u8,
) -> Result<Vec<BigRational>> {
    let runs = crate::design::full_factorial_runs(k)?;
    let m = included_runs.len();
    if m == 0 || m & (m - 1) != 0 {
        return Err(Error::InvalidArgument(format!(
            "included run count {m} must be a power of 2"
        )));
    }
    let half_m = (m / 2) as i64;
    let mut weights = vec![BigRational::zero(); runs.len()];
    let mut pos = 0usize;
    for &j in included_runs {
        if j >= runs.len() {
            return Err(Error::InvalidArgument(format!(
                "run index {j} out of range"
            )));
        }
        let level = runs[j].word_level(word);
        if level > 0 {
            pos += 1;
        }
        weights[j] = BigRational::new(level.into(), half_m.into());
    }
    if pos * 2 != m {
        return Err(Error::InvalidArgument(format!(
            "word {word} is not balanced on the included runs"
        )));
    }
    Ok(weights)
}

/// Estimator `Σ_j w_j Ȳ_obs(z_j)` for an incomplete design, with the
/// variance estimate `Σ_j w_j² s²(z_j)/n_j` and the exact identification
/// record from the partial-aliasing decomposition.
pub fn incomplete_estimate(
    summary: &GroupSummary,
    weights: &[BigRational],
    word: &EffectWord,
    alpha: f64,
) -> Result<EffectEstimate> {
    let design = summary.design().clone();
    if !design.is_full() {
        return Err(Error::InvalidArgument(
            "incomplete estimators are defined over the full 2^K lattice".into(),
        ));
    }
    if weights.len() != summary.runs().len() {
        return Err(Error::InvalidArgument(
            "weight vector length mismatch".into(),
        ));
    }
    let mut estimate = 0.0;
    let mut variance = Some(0.0);
    for (j, w) in weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let wf = w.to_f64().expect("finite weight");
        if summary.count(j) == 0 {
            return Err(Error::EmptyRun(summary.runs()[j].to_string()));
        }
        estimate += wf * summary.mean(j);
        variance = match (variance, summary.variance(j)) {
            (Some(acc), Some(s2)) => Some(acc + wf * wf * s2 / summary.count(j) as f64),
            _ => None,
        };
    }
    let estimand = partial_alias_decomposition(weights, design.k())?;
    let ci = match variance {
        Some(v) => Some(confidence_interval(estimate, v, alpha)?),
        None => None,
    };
    Ok(EffectEstimate {
        word: *word,
        estimate,
        variance,
        ci,
        alias_class: vec![*word],
        estimand: Some(estimand),
        method: Method::Incomplete,
    })
}
