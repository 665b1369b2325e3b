//! `consensus`: sample, train, infer, run experiments and check oracles.
//!
//! Exit status: 0 on success, 1 for invalid input or a failed check, 2 when
//! a run fails.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use consensus_core::cmp;
use consensus_core::harness::{self, check, Arm, ExperimentConfig, HarnessError};
use consensus_core::models::{write_pgm, Model};

#[derive(Parser, Debug)]
#[command(name = "consensus", version, about = "Consensus message passing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Arms to run; overrides the config. Repeatable.
    #[arg(long = "arm")]
    arms: Vec<Arm>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw test problems and write them as JSON lines.
    Sample(Common),
    /// Train the model's predictors and write forest JSON.
    Train(Common),
    /// Run inference on one problem and write its trace.
    Infer(Common),
    /// Run every arm on every test problem and write metrics.
    Experiment(Common),
    /// Run the oracle validation suites.
    Check(Common),
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, Model), Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Invalid("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !common.arms.is_empty() {
        cfg.arms = common.arms.clone();
    }
    let model = cfg.validate()?;
    Ok((cfg, model))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text + "\n")?;
    Ok(())
}

fn sample(common: &Common) -> Result<(), Failure> {
    let (cfg, model) = load(common)?;
    let problems = cfg.test_problems(&model)?;
    harness::write_samples(create(&common.out.join("dataset.jsonl"))?, &problems)?;
    write_json(&common.out.join("model.json"), &model.to_spec(cfg.seed))?;
    let image = |s| match &model {
        Model::Square(m) => Some((m.width, m.height, m.image(s))),
        Model::Face(m) => Some((m.width, m.height, m.image(s))),
        _ => None,
    };
    for (k, s) in problems.iter().enumerate() {
        if let Some((w, h, pixels)) = image(s) {
            let dir = common.out.join("images");
            fs::create_dir_all(&dir)?;
            write_pgm(&dir.join(format!("problem-{k:03}.pgm")), w, h, &pixels)?;
        }
    }
    println!("wrote {} problems to {}", problems.len(), common.out.display());
    Ok(())
}

fn train(common: &Common) -> Result<(), Failure> {
    let (cfg, model) = load(common)?;
    let graph = model.build_graph();
    let trained = harness::train(&cfg, &model, &graph)?;
    for (a, examples) in trained.attachments.iter().zip(&trained.examples) {
        let forest = a.forest.as_ref().ok_or_else(|| Failure::Runtime(format!("{} untrained", a.def.name)))?;
        fs::create_dir_all(common.out.join("forests"))?;
        fs::write(common.out.join("forests").join(format!("{}.json", a.def.name)), forest.to_json())?;
        let w = create(&common.out.join("training").join(format!("{}.jsonl", a.def.name)))?;
        cmp::write_examples(w, examples).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("{}: {} examples, {} trees", a.def.name, examples.len(), forest.trees.len());
    }
    if trained.discarded > 0 {
        println!("discarded {} training problems", trained.discarded);
    }
    Ok(())
}

fn infer(common: &Common) -> Result<(), Failure> {
    let (cfg, model) = load(common)?;
    let graph = model.build_graph();
    let engine = cfg.engine(&model);
    let problem = model.sample(cfg.test_seed(0)).map_err(HarnessError::from)?;
    let trained = if cfg.arms.iter().any(|a| a.needs_predictors()) {
        Some(match &cfg.forests {
            Some(dir) => harness::load_forests(dir, &model, &graph)?,
            None => harness::train(&cfg, &model, &graph)?,
        })
    } else {
        None
    };
    let attachments = trained.as_ref().map_or(&[][..], |t| &t.attachments);
    for &arm in &cfg.arms {
        let run = harness::run_arm(arm, &model, &graph, &engine, attachments, &problem)?;
        let rows = harness::trace_rows(&graph, 0, &run.trace);
        harness::write_trace_csv(create(&common.out.join(format!("trace-{arm}.csv")))?, &rows)?;
        let last = run.metrics.last().cloned().unwrap_or_default();
        let shown: Vec<String> = last.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!("{arm}: {}", shown.join(" "));
    }
    Ok(())
}

fn experiment(common: &Common) -> Result<(), Failure> {
    let (cfg, _) = load(common)?;
    let result = harness::run_experiment(&cfg)?;
    harness::write_metrics_csv(create(&common.out.join("metrics.csv"))?, &result.rows)?;
    write_json(&common.out.join("summary.json"), &result.summary)?;
    if let Some(t) = &result.trained {
        for (name, forest) in t.forests() {
            fs::create_dir_all(common.out.join("forests"))?;
            fs::write(common.out.join("forests").join(format!("{name}.json")), forest.to_json())?;
        }
    }
    let last = result.summary.iterations;
    for (arm, metrics) in &result.summary.arms {
        let shown: Vec<String> = metrics
            .iter()
            .map(|(k, c)| format!("{k}={:.4}", c.mean[last - 1]))
            .collect();
        println!("{arm}: {}", shown.join(" "));
    }
    if !result.violations.is_empty() {
        for v in &result.violations {
            eprintln!("schedule violation: {v}");
        }
        return Err(Failure::Runtime(format!("{} schedule violations", result.violations.len())));
    }
    Ok(())
}

fn run_checks(common: &Common) -> Result<(), Failure> {
    let seed = common.seed.unwrap_or(0);
    let results = check::run_all(seed);
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::Invalid(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Sample(c) => sample(c),
        Command::Train(c) => train(c),
        Command::Infer(c) => infer(c),
        Command::Experiment(c) => experiment(c),
        Command::Check(c) => run_checks(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
