use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use negfactor::dataset::{
    generate_synthetic, load_csv_with, summarize, write_csv_path, LoadOptions, PlantedSpec,
    ResponseTable, RowErrorPolicy,
};
use negfactor::evaluation::{bootstrap_compare, cross_validate, parse_grid, CvConfig, EvalReport};
use negfactor::factorization::Hyperparams;
use negfactor::normalization::{normalize, ScoreLink};
use negfactor::optim::{fit, FitConfig};
use negfactor::report::analyze;
use negfactor::FittedModel;

/// Fit and evaluate factorization models of neg-raising judgments.
#[derive(Parser)]
#[command(name = "negfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or generate judgment data.
    #[command(subcommand)]
    Data(DataCommand),
    /// Fit one model.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "n-lexical")]
        n_lexical: usize,
        #[arg(long = "n-structural")]
        n_structural: usize,
        /// JSON fit configuration; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a hyperparameter grid.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        /// `all`, or `I,T` pairs separated by spaces or `;`.
        #[arg(long, default_value = "all")]
        grid: String,
        /// JSON cross-validation configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap comparison of two grid points of a report.
    Compare {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        a: Hyperparams,
        #[arg(long)]
        b: Hyperparams,
        #[arg(long = "n-boot", default_value_t = negfactor::evaluation::DEFAULT_BOOTSTRAP)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-sentence normalized neg-raising scores.
    Normalize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "literal")]
        link: Link,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write analysis tables for a fitted model.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Print verb counts per tense and frame, and records per participant.
    Summarize {
        path: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Generate a synthetic table from a planted-factor spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the spec with its realized effects.
        #[arg(long = "spec-out")]
        spec_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    load: LoadArgs,
}

#[derive(Args)]
struct LoadArgs {
    /// Skip malformed rows with a warning instead of failing.
    #[arg(long = "skip-bad-rows")]
    skip_bad_rows: bool,
    /// Comma-separated participants to drop.
    #[arg(long = "drop-participants", value_delimiter = ',')]
    drop_participants: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Link {
    Literal,
    Inside,
}

impl LoadArgs {
    fn load(&self, path: &Path) -> Result<ResponseTable> {
        let options = LoadOptions {
            on_error: if self.skip_bad_rows {
                RowErrorPolicy::Skip
            } else {
                RowErrorPolicy::Fail
            },
            drop_participants: self
                .drop_participants
                .iter()
                .cloned()
                .collect::<BTreeSet<_>>(),
            ..LoadOptions::default()
        };
        let (table, stats) =
            load_csv_with(path, &options).with_context(|| format!("loading {}", path.display()))?;
        if stats.skipped > 0 || stats.dropped > 0 {
            log::warn!(
                "skipped {} rows, dropped {} rows",
                stats.skipped,
                stats.dropped
            );
        }
        Ok(table)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Data(DataCommand::Summarize { path, load }) => {
            let table = load.load(&path)?;
            print!("{}", summarize(&table)?);
        }
        Command::Data(DataCommand::Synth {
            spec,
            out,
            spec_out,
        }) => {
            let spec: PlantedSpec = read_json(&spec)?;
            let (table, realized) = generate_synthetic(&spec)?;
            write_csv_path(&table, &out)?;
            if let Some(path) = spec_out {
                write_json(&path, &realized)?;
            }
            println!("wrote {} records to {}", table.len(), out.display());
        }
        Command::Fit {
            data,
            n_lexical,
            n_structural,
            config,
            seed,
            out,
        } => {
            let table = data.load.load(&data.data)?;
            let mut config: FitConfig = match config {
                Some(path) => read_json(&path)?,
                None => FitConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let hyper = Hyperparams::new(n_lexical, n_structural)?;
            let result = fit(&table, hyper, &config)?;
            result.model.save(&out)?;
            println!(
                "{hyper}: loss {:.6} after {} iterations ({})",
                result.model.loss,
                result.iterations_run,
                if result.converged {
                    "converged"
                } else {
                    "not converged"
                }
            );
        }
        Command::Cv {
            data,
            grid,
            config,
            out,
        } => {
            let table = data.load.load(&data.data)?;
            let config: CvConfig = match config {
                Some(path) => read_json(&path)?,
                None => CvConfig::default(),
            };
            let grid = parse_grid(&grid)?;
            let report = cross_validate(&table, &grid, &config)?;
            report.save(&out)?;
            for g in &report.grid {
                match g.total {
                    Some(t) => println!("{}\t{t:.6}", g.hyperparams),
                    None => println!("{}\tfailed", g.hyperparams),
                }
            }
        }
        Command::Compare {
            report,
            a,
            b,
            n_boot,
            seed,
        } => {
            let report = EvalReport::load(&report)?;
            let record = bootstrap_compare(&report, a, b, n_boot, seed)?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Normalize {
            data,
            config,
            link,
            out,
        } => {
            let table = data.load.load(&data.data)?;
            let config: FitConfig = match config {
                Some(path) => read_json(&path)?,
                None => FitConfig::default(),
            };
            let link = match link {
                Link::Literal => ScoreLink::Literal,
                Link::Inside => ScoreLink::Inside,
            };
            let scores = normalize(&table, &config, link)?;
            scores.write_csv_path(&out)?;
            println!(
                "wrote {} sentence scores to {}",
                scores.rows.len(),
                out.display()
            );
        }
        Command::Report { model, out_dir } => {
            let model = FittedModel::load(&model)?;
            let bundle = analyze(&model)?;
            bundle.write_dir(&out_dir)?;
            if let Some(rho) = bundle.psi_lambda_spearman {
                println!("spearman(psi, lambda) = {rho:.4}");
            }
            println!("wrote tables to {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
