use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radsurv_core::pipeline::{self, FeatureSet, Layout, ProviderKind, RunConfig};
use radsurv_core::{Error, Exec};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "radsurv", version, about = "Survival prediction after radiotherapy with LLM-structured clinical features")]
struct Cli {
    #[command(flatten)]
    opts: Opts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Opts {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restricts training and evaluation to one feature set.
    #[arg(long, global = true, value_name = "structured|structured+llm")]
    feature_set: Option<FeatureSet>,

    #[arg(long, global = true, value_name = "mock|http")]
    provider: Option<ProviderKind>,

    #[arg(long, global = true)]
    endpoint: Option<String>,

    #[arg(long, global = true)]
    model: Option<String>,

    #[arg(long, global = true)]
    tau_threshold: Option<f64>,

    /// Structurization requests in flight.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    #[arg(long, global = true)]
    max_attempts: Option<u32>,

    /// Input cohort (line-delimited records).
    #[arg(long, global = true)]
    cohort: Option<PathBuf>,

    /// Gold labels for the accuracy table and the mock provider.
    #[arg(long, global = true)]
    gold: Option<PathBuf>,

    /// Runs every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort and gold labels into --out.
    Synth,
    /// Window, exclude and split the cohort.
    Ingest,
    /// Kendall tau-b screening against 30-day mortality.
    Screen,
    /// Structure clinical documents into the seven categories.
    Structurize,
    /// Fit the survival models.
    Train,
    /// C-index, IBS and NBLL with bootstrap intervals.
    Evaluate,
    /// Permutation importance.
    Importance,
    /// Render the comparison report.
    Report,
    /// Every stage in order (synthesizing a cohort when none is configured).
    Run,
    /// Print the effective configuration.
    Config,
}

fn effective_config(opts: &Opts) -> Result<RunConfig, Error> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Parse { .. } => Error::Config(vec![e.to_string()]),
            e => e,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.set_seed(seed);
    }
    if let Some(fs) = opts.feature_set {
        cfg.feature_sets = vec![fs];
    }
    if let Some(p) = opts.provider {
        cfg.provider.kind = p;
    }
    if let Some(e) = &opts.endpoint {
        cfg.provider.endpoint = Some(e.clone());
    }
    if let Some(m) = &opts.model {
        cfg.provider.model = Some(m.clone());
    }
    if let Some(t) = opts.tau_threshold {
        cfg.tau_threshold = t;
    }
    if let Some(k) = opts.parallelism {
        cfg.provider.parallelism = k;
    }
    if let Some(a) = opts.max_attempts {
        cfg.provider.max_attempts = a;
    }
    if let Some(c) = &opts.cohort {
        cfg.paths.cohort = Some(c.clone());
    }
    if let Some(g) = &opts.gold {
        cfg.paths.gold = Some(g.clone());
    }
    if opts.sequential {
        cfg.exec = Exec::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = effective_config(&cli.opts)?;
    let layout = Layout::new(&cli.opts.out);
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        Command::Synth => {
            let s = pipeline::run_synth(&cfg, &cli.opts.out)?;
            let events = s.records.iter().filter(|r| r.outcome.is_some_and(|o| o.event)).count();
            println!("{} patients, {} deaths, written to {}", s.records.len(), events, cli.opts.out.display());
            return Ok(());
        }
        _ => {}
    }
    pipeline::write_config(&cfg, &layout)?;
    match cli.command {
        Command::Ingest => {
            let m = pipeline::ingest(&cfg, &layout)?;
            println!(
                "{} records, {} kept ({} train, {} test)",
                m.n_input,
                m.n_kept,
                m.train.len(),
                m.test.len()
            );
        }
        Command::Structurize => {
            let m = pipeline::structurize(&cfg, &layout)?;
            println!("{} patients structurized with {}", m.n_patients, m.provider);
            if let Some(acc) = &m.accuracy {
                println!("average accuracy {}", acc.average.cell());
            }
        }
        Command::Screen => {
            let m = pipeline::screen(&cfg, &layout)?;
            println!("{} structured features selected: {}", m.selected.len(), m.selected.join(", "));
        }
        Command::Train => {
            let m = pipeline::train(&cfg, &layout)?;
            for (set, n) in &m.feature_counts {
                println!("{set}: {n} features");
            }
        }
        Command::Evaluate => {
            let m = pipeline::evaluate(&cfg, &layout)?;
            for r in &m.rows {
                println!("{} / {}: C-index {}", r.model, r.feature_set, r.c_index);
            }
        }
        Command::Importance => {
            pipeline::importance(&cfg, &layout)?;
        }
        Command::Report => {
            print!("{}", pipeline::write_report(&cfg, &layout)?);
        }
        Command::Run => {
            pipeline::run_all(&cfg, &layout)?;
            print!("{}", std::fs::read_to_string(layout.stage("report").join("report.txt"))?);
        }
        Command::Synth | Command::Config => unreachable!(),
    }
    Ok(())
}

fn error_record(e: &Error) -> serde_json::Value {
    let details = match e {
        Error::Config(problems) => problems.clone(),
        _ => Vec::new(),
    };
    json!({ "error": e.kind(), "message": e.to_string(), "details": details })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
