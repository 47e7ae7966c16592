//! End-to-end analysis pipeline: load → counts → (trim) → restrict →
//! estimate → Fisher → comparison, rendered as an in-memory report bundle
//! so a failed stage never leaves partial files behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fracfac::balance::BalanceOptions;
use fracfac::data::{counts_table, feasible_fractions, load_dataset, Dataset, SchemaConfig};
use fracfac::design::DesignSpec;
use fracfac::estimate::{
    dot_g_weights, effect_estimate, incomplete_estimate, summarize_groups, EffectEstimate, Method,
};
use fracfac::fisher::{fisher_test, Alternative, TestMode};
use fracfac::regression::{effect_from_fit, factorial_regression};
use fracfac::report;
use fracfac::word::EffectWord;
use fracfac::{Error, Result};

/// Everything one pipeline run needs; flags mirror these fields.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    /// A design spec in the `2^(k-p): ...` grammar, or `auto` to pick the
    /// highest-resolution feasible fraction from the counts table.
    pub design: String,
    /// Fraction exponent searched under `auto`.
    pub auto_p: u8,
    /// Runs with fewer units are off-limits to `auto` fractions.
    pub min_count: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    /// Monte Carlo draws per Fisher test; 0 skips the Fisher stage.
    pub fisher_draws: usize,
    pub seed: Option<u64>,
    /// Balance p-value target; `Some` enables the trimming stage.
    pub trim: Option<f64>,
    pub min_group_size: usize,
    /// Permutation replicates for balance tests during trimming.
    pub replicates: usize,
    pub out: PathBuf,
}

impl AnalysisConfig {
    /// Path existence and the seed-with-Monte-Carlo rule.
    pub fn validate(&self) -> Result<()> {
        for path in [&self.data, &self.schema] {
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.seed.is_none() && (self.fisher_draws > 0 || self.trim.is_some()) {
            return Err(Error::InvalidArgument(
                "--seed is required when Fisher draws or trimming are enabled".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one method is required".into(),
            ));
        }
        Ok(())
    }
}

pub fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for part in text.split(',') {
        let m = match part.trim() {
            "neyman" => Method::Neyman,
            "regression" => Method::Regression,
            "incomplete" => Method::Incomplete,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method '{other}' (expected neyman, regression, or incomplete)"
                )))
            }
        };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

/// Parses an effect word written with factor digits 1-9 and letters a-k
/// for factors 10-20; `I` or `0` is the mean.
pub fn parse_word(text: &str) -> Result<EffectWord> {
    let t = text.trim();
    if t == "I" || t == "0" {
        return Ok(EffectWord::mean());
    }
    let mut factors = Vec::new();
    for c in t.chars() {
        let f = match c {
            '1'..='9' => c as u8 - b'0',
            'a'..='k' => c as u8 - b'a' + 10,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "invalid factor character '{c}' in word '{t}'"
                )))
            }
        };
        factors.push(f);
    }
    EffectWord::from_factors(&factors)
}

fn stage<T>(name: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// One representative per estimable alias class: every non-mean word for a
/// full design, otherwise the shortest word of each non-identity class.
pub fn representative_words(design: &DesignSpec) -> Result<Vec<EffectWord>> {
    if design.is_full() {
        return Ok(EffectWord::canonical_order(design.k())
            .into_iter()
            .skip(1)
            .collect());
    }
    let table = design.alias_table()?;
    let mut reps: Vec<EffectWord> = table
        .classes()
        .into_iter()
        .filter(|class| !class.iter().any(|w| w.is_mean()))
        .map(|class| {
            class
                .iter()
                .map(|w| w.unsigned())
                .min_by(|a, b| a.canonical_cmp(b))
                .expect("nonempty class")
        })
        .collect();
    reps.sort_by(|a, b| a.canonical_cmp(b));
    Ok(reps)
}

pub fn estimates_for_method(
    dataset: &Dataset,
    design: &DesignSpec,
    reps: &[EffectWord],
    method: Method,
    alpha: f64,
) -> Result<Vec<EffectEstimate>> {
    match method {
        Method::Neyman => {
            let summary = summarize_groups(dataset, design)?;
            reps.iter()
                .map(|w| effect_estimate(&summary, w, alpha))
                .collect()
        }
        Method::Regression => {
            let mut words = vec![EffectWord::mean()];
            words.extend_from_slice(reps);
            let fit = factorial_regression(dataset, design, &words)?;
            reps.iter()
                .map(|w| effect_from_fit(&fit, design, w, alpha))
                .collect()
        }
        Method::Incomplete => {
            let full = DesignSpec::full(dataset.k())?;
            let summary = summarize_groups(dataset, &full)?;
            let included: Vec<usize> = summary
                .counts()
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(j, _)| j)
                .collect();
            let mut out = Vec::new();
            for w in reps {
                // words the occupied runs cannot balance are not estimable
                // by the dot-g weighting and are omitted from the report
                match dot_g_weights(w, &included, dataset.k()) {
                    Ok(weights) => out.push(incomplete_estimate(&summary, &weights, w, alpha)?),
                    Err(Error::InvalidArgument(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        }
    }
}

/// The report bundle: file name → file content, in emission order.
pub type Bundle = Vec<(String, String)>;

struct MethodColumn {
    method: Method,
    by_word: BTreeMap<EffectWord, (f64, Option<f64>)>,
}

fn comparison_table(
    reps: &[EffectWord],
    columns: &[MethodColumn],
    fisher_p: &BTreeMap<EffectWord, f64>,
    have_fisher: bool,
) -> String {
    let mut header = String::from("word");
    for col in columns {
        let m = col.method.as_str();
        header.push_str(&format!("\t{m}_estimate\t{m}_stderr"));
    }
    if have_fisher {
        header.push_str("\tfisher_p");
    }
    let mut out = header;
    out.push('\n');
    for w in reps {
        out.push_str(&w.to_string());
        for col in columns {
            match col.by_word.get(w) {
                Some((est, se)) => {
                    out.push_str(&format!("\t{est}"));
                    match se {
                        Some(se) => out.push_str(&format!("\t{se}")),
                        None => out.push_str("\tNA"),
                    }
                }
                None => out.push_str("\tNA\tNA"),
            }
        }
        if have_fisher {
            match fisher_p.get(w) {
                Some(p) => out.push_str(&format!("\t{p}")),
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

fn resolve_design(
    config: &AnalysisConfig,
    counts: &fracfac::data::CountsTable,
    bundle: &mut Bundle,
) -> Result<DesignSpec> {
    if config.design.trim() != "auto" {
        return DesignSpec::parse(&config.design);
    }
    let search = feasible_fractions(counts, config.auto_p, config.min_count)?;
    bundle.push((
        "fractions.txt".to_string(),
        report::fraction_search_report(&search),
    ));
    match search.feasible.as_slice() {
        [] => Err(Error::InvalidArgument(format!(
            "no feasible 2^({}-{}) fraction avoids runs with fewer than {} units",
            counts.k(),
            config.auto_p,
            config.min_count
        ))),
        [best] => Ok(best.spec.clone()),
        [best, next, ..] => {
            if best.resolution == next.resolution {
                Err(Error::InvalidArgument(format!(
                    "resolution tie between {} and {}; pass an explicit design",
                    best.spec.to_text(),
                    next.spec.to_text()
                )))
            } else {
                Ok(best.spec.clone())
            }
        }
    }
}

/// Runs every stage and returns the bundle; no file is touched here.
pub fn run_pipeline(config: &AnalysisConfig) -> Result<Bundle> {
    stage("config", config.validate())?;
    let mut bundle = Bundle::new();

    let (mut dataset, ingestion) = stage("load", {
        SchemaConfig::from_file(&config.schema)
            .and_then(|schema| load_dataset(&config.data, &schema))
    })?;
    bundle.push((
        "ingestion.txt".to_string(),
        report::ingestion_report_text(&ingestion),
    ));

    let counts = stage("counts", counts_table(&dataset, dataset.k()))?;
    bundle.push(("counts.txt".to_string(), report::counts_report(&counts)));

    let design = stage("design", resolve_design(config, &counts, &mut bundle))?;
    let alias = stage("design", design.alias_table())?;
    bundle.push((
        "design.txt".to_string(),
        report::alias_report(&design, &alias),
    ));

    if let Some(p_star) = config.trim {
        let options = BalanceOptions {
            replicates: config.replicates,
            seed: config.seed.expect("validated"),
        };
        let trimmed = stage(
            "trim",
            fracfac::balance::sequential_trim(
                &dataset,
                &design,
                options,
                p_star,
                config.min_group_size,
            ),
        )?;
        bundle.push(("trim.txt".to_string(), report::trim_report(&trimmed)));
        dataset = trimmed.dataset;
        let post = stage("trim", counts_table(&dataset, dataset.k()))?;
        bundle.push((
            "counts_trimmed.txt".to_string(),
            report::counts_report(&post),
        ));
    }

    let (restricted, dropped) = stage("restrict", dataset.restrict_to(&design))?;
    bundle.push((
        "restrict.txt".to_string(),
        format!(
            "design\t{}\nunits_kept\t{}\nunits_dropped\t{}\n",
            design.to_text(),
            restricted.len(),
            dropped
        ),
    ));
    let dataset = restricted;

    let reps = stage("estimate", representative_words(&design))?;
    let mut columns = Vec::new();
    for &method in &config.methods {
        let estimates = stage(
            "estimate",
            estimates_for_method(&dataset, &design, &reps, method, config.alpha),
        )?;
        bundle.push((
            format!("effects_{}.txt", method.as_str()),
            report::effect_report(&estimates),
        ));
        let by_word = estimates
            .iter()
            .map(|e| (e.word, (e.estimate, e.stderr())))
            .collect();
        columns.push(MethodColumn { method, by_word });
    }

    let mut fisher_p = BTreeMap::new();
    if config.fisher_draws > 0 {
        let mode = TestMode::MonteCarlo {
            replicates: config.fisher_draws,
            seed: config.seed.expect("validated"),
        };
        let mut out = String::from("word\tstatistic\tp_value\tdraws\tseed\n");
        for w in &reps {
            let test = stage(
                "fisher",
                fisher_test(&dataset, &design, w, mode, Alternative::TwoSided),
            )?;
            out.push_str(&format!(
                "{w}\t{}\t{}\t{}\t{}\n",
                test.observed,
                test.p_value,
                test.draws,
                config.seed.expect("validated")
            ));
            fisher_p.insert(*w, test.p_value);
        }
        bundle.push(("fisher.txt".to_string(), out));
    }

    bundle.push((
        "comparison.txt".to_string(),
        comparison_table(&reps, &columns, &fisher_p, config.fisher_draws > 0),
    ));

    let manifest = report::manifest(&bundle);
    bundle.push(("manifest.txt".to_string(), manifest));
    Ok(bundle)
}

/// Writes the bundle under the output directory; on any write failure the
/// files emitted so far are removed before the error is returned.
pub fn write_bundle(out_dir: &Path, bundle: &Bundle) -> Result<()> {
    let write_all = || -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(out_dir)?;
        let mut written = Vec::new();
        for (name, content) in bundle {
            let path = out_dir.join(name);
            fs::write(&path, content)?;
            written.push(path);
        }
        Ok(written)
    };
    match write_all() {
        Ok(_) => Ok(()),
        Err(e) => {
            for (name, _) in bundle {
                let _ = fs::remove_file(out_dir.join(name));
            }
            Err(Error::Stage {
                stage: "write".to_string(),
                source: Box::new(Error::Io(e)),
            })
        }
    }
}

/// A convenience used by tests and the `pipeline` subcommand: run, write,
/// and return the bundle.
pub fn cmd_pipeline(config: &AnalysisConfig) -> Result<Bundle> {
    let bundle = run_pipeline(config)?;
    write_bundle(&config.out, &bundle)?;
    Ok(bundle)
}
