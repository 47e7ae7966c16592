//! `fracfac`: design-based analysis of two-level factorial experiments
//! from the command line.

mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracfac::balance::{manova_balance, sequential_trim, standardized_differences, BalanceOptions};
use fracfac::data::{counts_table, feasible_fractions, load_dataset, Dataset, SchemaConfig};
use fracfac::design::DesignSpec;
use fracfac::fisher::{fisher_test, Alternative, TestMode};
use fracfac::report;
use fracfac::Result;

use pipeline::{parse_methods, parse_word, AnalysisConfig};

#[derive(Parser)]
#[command(name = "fracfac", version, about = "Factorial design analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Delimited data file (tab or comma separated).
    #[arg(long)]
    data: PathBuf,
    /// TOML schema describing outcome, factors, and covariates.
    #[arg(long)]
    schema: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let schema = SchemaConfig::from_file(&self.schema)?;
        let (dataset, _) = load_dataset(&self.data, &schema)?;
        Ok(dataset)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the runs and alias structure of a design spec.
    Design {
        /// Spec in the grammar `2^(k-p): f=word, ...`, e.g. `2^(3-1): 3=12`.
        spec: String,
    },
    /// Per-run unit counts, optionally with a feasible-fraction search.
    Counts {
        #[command(flatten)]
        data: DataArgs,
        /// Search for feasible 2^(k-p) fractions with this exponent.
        #[arg(long)]
        fractions: Option<u8>,
        /// Runs with fewer units than this block a fraction.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// MANOVA covariate balance across the design's runs.
    Balance {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        design: String,
        /// Seed for the permutation p-value (required: Monte Carlo).
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
    },
    /// Greedy sequential trimming toward covariate balance.
    Trim {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        design: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        /// Balance p-value target.
        #[arg(long, default_value_t = 0.1)]
        p_star: f64,
        /// Never shrink a treatment group below this size.
        #[arg(long, default_value_t = 2)]
        min_group_size: usize,
    },
    /// Effect estimates for each requested method.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        design: String,
        /// Comma-separated subset of neyman, regression, incomplete.
        #[arg(long, default_value = "neyman")]
        methods: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Randomization test of the sharp null for one effect word.
    Fisher {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        design: String,
        /// Effect word, e.g. `1`, `12`, `123`.
        #[arg(long)]
        word: String,
        /// Enumerate the full assignment orbit instead of sampling.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 999)]
        draws: usize,
        /// Required unless --exact.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full pipeline: load, counts, trim, restrict, estimate, Fisher,
    /// comparison table, and a hashed manifest, written to --out.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        /// Design spec text, or `auto` to search feasible fractions.
        #[arg(long)]
        design: String,
        /// Fraction exponent used by `auto`.
        #[arg(long, default_value_t = 1)]
        auto_p: u8,
        /// Minimum per-run count a fraction chosen by `auto` may touch.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long, default_value = "neyman")]
        methods: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Monte Carlo draws per Fisher test; 0 skips Fisher.
        #[arg(long, default_value_t = 0)]
        fisher_draws: usize,
        /// Required when Fisher draws or trimming are enabled.
        #[arg(long)]
        seed: Option<u64>,
        /// Enable trimming with this balance p-value target.
        #[arg(long)]
        trim: Option<f64>,
        #[arg(long, default_value_t = 2)]
        min_group_size: usize,
        /// Permutation replicates for balance tests while trimming.
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        /// Output directory for the report bundle.
        #[arg(long)]
        out: PathBuf,
    },
}

fn cmd_design(spec_text: &str) -> Result<()> {
    let spec = DesignSpec::parse(spec_text)?;
    println!("run\tlevels");
    for (j, run) in spec.runs()?.iter().enumerate() {
        println!("z{}\t{run}", j + 1);
    }
    let table = spec.alias_table()?;
    print!("{}", report::alias_report(&spec, &table));
    Ok(())
}

fn cmd_counts(data: &DataArgs, fractions: Option<u8>, min_count: usize) -> Result<()> {
    let dataset = data.load()?;
    let counts = counts_table(&dataset, dataset.k())?;
    print!("{}", report::counts_report(&counts));
    if let Some(p) = fractions {
        let search = feasible_fractions(&counts, p, min_count)?;
        print!("{}", report::fraction_search_report(&search));
    }
    Ok(())
}

fn cmd_balance(data: &DataArgs, design: &str, seed: u64, replicates: usize) -> Result<()> {
    let dataset = data.load()?;
    let design = DesignSpec::parse(design)?;
    let (dataset, _) = dataset.restrict_to(&design)?;
    let balance = manova_balance(&dataset, &design, BalanceOptions { replicates, seed })?;
    print!("{}", report::balance_report_text(&balance));
    let diffs = standardized_differences(&dataset, &design)?;
    print!("{}", report::standardized_difference_report(&diffs));
    Ok(())
}

fn cmd_trim(
    data: &DataArgs,
    design: &str,
    seed: u64,
    replicates: usize,
    p_star: f64,
    min_group_size: usize,
) -> Result<()> {
    let dataset = data.load()?;
    let design = DesignSpec::parse(design)?;
    let (dataset, _) = dataset.restrict_to(&design)?;
    let options = BalanceOptions { replicates, seed };
    let result = sequential_trim(&dataset, &design, options, p_star, min_group_size)?;
    print!("{}", report::trim_report(&result));
    Ok(())
}

fn cmd_estimate(data: &DataArgs, design: &str, methods: &str, alpha: f64) -> Result<()> {
    let dataset = data.load()?;
    let design = DesignSpec::parse(design)?;
    let (dataset, _) = dataset.restrict_to(&design)?;
    let reps = pipeline::representative_words(&design)?;
    for method in parse_methods(methods)? {
        let estimates = pipeline::estimates_for_method(&dataset, &design, &reps, method, alpha)?;
        print!("{}", report::effect_report(&estimates));
    }
    Ok(())
}

fn cmd_fisher(
    data: &DataArgs,
    design: &str,
    word: &str,
    exact: bool,
    draws: usize,
    seed: Option<u64>,
) -> Result<()> {
    let dataset = data.load()?;
    let design = DesignSpec::parse(design)?;
    let (dataset, _) = dataset.restrict_to(&design)?;
    let word = parse_word(word)?;
    let mode = if exact {
        TestMode::Exact
    } else {
        let seed = seed.ok_or_else(|| {
            fracfac::Error::InvalidArgument("--seed is required for Monte Carlo mode".into())
        })?;
        TestMode::MonteCarlo {
            replicates: draws,
            seed,
        }
    };
    let test = fisher_test(&dataset, &design, &word, mode, Alternative::TwoSided)?;
    print!("{}", report::fisher_report(&test));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design { spec } => cmd_design(&spec),
        Command::Counts {
            data,
            fractions,
            min_count,
        } => cmd_counts(&data, fractions, min_count),
        Command::Balance {
            data,
            design,
            seed,
            replicates,
        } => cmd_balance(&data, &design, seed, replicates),
        Command::Trim {
            data,
            design,
            seed,
            replicates,
            p_star,
            min_group_size,
        } => cmd_trim(&data, &design, seed, replicates, p_star, min_group_size),
        Command::Estimate {
            data,
            design,
            methods,
            alpha,
        } => cmd_estimate(&data, &design, &methods, alpha),
        Command::Fisher {
            data,
            design,
            word,
            exact,
            draws,
            seed,
        } => cmd_fisher(&data, &design, &word, exact, draws, seed),
        Command::Pipeline {
            data,
            design,
            auto_p,
            min_count,
            methods,
            alpha,
            fisher_draws,
            seed,
            trim,
            min_group_size,
            replicates,
            out,
        } => {
            let config = AnalysisConfig {
                data: data.data,
                schema: data.schema,
                design,
                auto_p,
                min_count,
                methods: parse_methods(&methods)?,
                alpha,
                fisher_draws,
                seed,
                trim,
                min_group_size,
                replicates,
                out,
            };
            let bundle = pipeline::cmd_pipeline(&config)?;
            for (name, _) in &bundle {
                println!("wrote {}", config.out.join(name).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
