use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alike::harness::pipeline::{execute, run_sweep, Reuse, RunOutcome, Until};
use alike::harness::PipelineConfig;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Prototype explanations with alike parts for random forests.
#[derive(Parser, Debug)]
#[command(name = "alike", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, split and train the forest.
    Train(Common),
    /// Train (or reuse) the forest, attribute, and select prototypes.
    Select(Common),
    /// Everything up to the alike-part explanations of the test set.
    Explain(Common),
    /// Everything up to the surrogate evaluation.
    Evaluate(Common),
    /// Grid sweep over beta and the strategy hyperparameters.
    Sweep(Common),
    /// Full pipeline with every artifact and the manifest.
    Run(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Key/value config file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// gkm, sma or apete.
    #[arg(long)]
    strategy: Option<String>,
    /// SM-A prototype budget.
    #[arg(long)]
    k: Option<usize>,
    /// G-KM prototypes per class.
    #[arg(long)]
    k_per_class: Option<usize>,
    /// A-PETE relative-improvement threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// combined or distance-only.
    #[arg(long)]
    metric: Option<String>,
    /// path, exact-shapley or imported.
    #[arg(long)]
    attribution_provider: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Reuse a saved forest instead of training.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Reuse a saved prototype set instead of selecting.
    #[arg(long)]
    prototypes: Option<PathBuf>,
    /// Any other config key, e.g. `--set n_trees=50`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(std::env::current_dir().context("[config] cannot read the working directory")?.join(p))
    }
}

fn path_str(p: &Path) -> Result<String> {
    Ok(absolute(p)?.display().to_string())
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path).map_err(|e| anyhow::anyhow!("[config] {e}"))?,
            None => PipelineConfig::default().with_base_dir(absolute(Path::new("."))?),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_owned(), v));
            }
        };
        push("data", self.data.as_deref().map(path_str).transpose()?);
        push("label_column", self.label_column.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("strategy", self.strategy.clone());
        push("k", self.k.map(|v| v.to_string()));
        push("k_per_class", self.k_per_class.map(|v| v.to_string()));
        push("epsilon", self.epsilon.map(|v| v.to_string()));
        push("metric", self.metric.clone());
        push("attribution_provider", self.attribution_provider.clone());
        push("out_dir", self.out_dir.as_deref().map(path_str).transpose()?);
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("[config] --set expects KEY=VALUE, got `{o}`"))?;
            let (k, v) = (k.trim(), v.trim());
            let v = match k.replace('-', "_").as_str() {
                "data" | "out_dir" | "attributions_train" | "attributions_test" => path_str(Path::new(v))?,
                _ => v.to_owned(),
            };
            pairs.push((k.to_owned(), v));
        }
        for (k, v) in pairs {
            cfg.set(&k, &v).map_err(|e| anyhow::anyhow!("[config] --{}: {e}", k.replace('_', "-")))?;
        }
        Ok(cfg)
    }

    fn reuse(&self) -> Reuse {
        Reuse {
            forest: self.forest.clone(),
            prototypes: self.prototypes.clone(),
        }
    }
}

fn report(outcome: &RunOutcome) {
    println!("run directory: {}", outcome.run_dir.display());
    for a in &outcome.artifacts {
        println!("  wrote {}", a.display());
    }
    if let Some(p) = &outcome.prototypes {
        println!("prototypes: {} {:?}", p.len(), p.indices);
        if let Some(f) = p.final_objective() {
            println!("final objective: {f}");
        }
    }
    if let Some(e) = &outcome.evaluation {
        println!("fidelity: {:.4}", e.accuracy);
        println!("ground-truth accuracy: {:.4}", e.ground_truth_accuracy);
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, until) = match &cli.command {
        Command::Train(c) => (c, Some(Until::Train)),
        Command::Select(c) => (c, Some(Until::Select)),
        Command::Explain(c) => (c, Some(Until::Explain)),
        Command::Evaluate(c) | Command::Run(c) => (c, Some(Until::Evaluate)),
        Command::Sweep(c) => (c, None),
    };
    let cfg = common.config()?;
    match until {
        Some(until) => {
            let outcome = execute(&cfg, until, &common.reuse())?;
            report(&outcome);
        }
        None => {
            let (dir, records) = run_sweep(&cfg, &common.reuse())?;
            println!("sweep directory: {}", dir.display());
            println!("cell\tstrategy\thyper\tbeta\tfidelity\tmask_len\tprototypes");
            for r in &records {
                println!(
                    "{}\t{}\t{}\t{}\t{:.4}\t{:.3}\t{}",
                    r.cell,
                    r.strategy.as_str(),
                    r.hyperparameter,
                    r.beta,
                    r.accuracy,
                    r.mean_mask_length,
                    r.n_prototypes
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
