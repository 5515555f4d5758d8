use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use audioqa_cli::{pipeline, stats, verify, Failure, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "audioqa", version, about = "Build, check and model a synthetic audio question answering dataset")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model size divisor (overrides the config).
    #[arg(long, global = true)]
    scale: Option<usize>,
    /// One training question per clip.
    #[arg(long, global = true)]
    low_resource: bool,
    /// Output root (overrides the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.hyper.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize (or load) the event library.
    GenEvents,
    /// Compose annotated clips and render their waveforms.
    GenClips,
    /// Instantiate balanced questions for every split.
    GenQuestions,
    /// Re-check every dataset invariant; exits 1 on any violation.
    Verify,
    /// Write plot-ready dataset tables.
    Stats,
    /// Extract normalized log-mel features.
    Features,
    /// Train the configured model.
    Train,
    /// Score baselines and the trained model on the test split.
    Eval,
    /// Saliency maps for test questions.
    Saliency {
        /// Question ids; the first `--limit` test questions when omitted.
        #[arg(long = "question")]
        questions: Vec<String>,
        #[arg(long, default_value_t = 4)]
        limit: usize,
    },
    /// Every stage from gen-events to eval.
    All {
        #[arg(long)]
        skip_train: bool,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Failure::Usage(format!("bad key {key:?}")))?;
    let mut t = root;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Failure::Usage(format!("{key}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !cli.overrides.is_empty() {
        let mut table: toml::Table = toml::from_str(&cfg.to_toml()).map_err(|e| Failure::Usage(e.to_string()))?;
        for o in &cli.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
                Ok(mut t) => t.remove("v").expect("parsed"),
                Err(_) => toml::Value::String(v.to_string()),
            };
            set_path(&mut table, k.trim(), value)?;
        }
        cfg = table.try_into().map_err(|e: toml::de::Error| Failure::Usage(e.to_string()))?;
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(s) = cli.scale {
        if s == 0 {
            return Err(Failure::Usage("--scale must be >= 1".into()));
        }
        cfg.model.scale = s;
    }
    if cli.low_resource {
        cfg.low_resource = true;
    }
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn run_verify(cfg: &RunConfig) -> Result<()> {
    let v = verify::verify(cfg)?;
    for m in &v.violations {
        println!("violation: {m}");
    }
    println!(
        "verify: {} clips, {} questions, max balance gap {:.4}, {} violation(s)",
        v.clips.values().sum::<usize>(),
        v.questions.values().sum::<usize>(),
        v.max_balance_gap,
        v.violations.len()
    );
    if v.ok() {
        Ok(())
    } else {
        Err(Failure::Validation(v.violations.len()).into())
    }
}

fn run_train(cfg: &RunConfig) -> Result<()> {
    let s = pipeline::train(cfg, |e| {
        let val = e.val_acc.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
        println!(
            "epoch {:>3}  loss {:.4}  train {:.4}  val {val}  {:.1}s",
            e.epoch, e.train_loss, e.train_acc, e.seconds
        );
    })?;
    println!("{} parameters, best epoch {}", s.parameters, s.report.best_epoch);
    Ok(())
}

fn run_eval(cfg: &RunConfig) -> Result<()> {
    for (name, m) in pipeline::eval(cfg)? {
        println!("{name:<20} {:.4} ({} questions)", m.overall.accuracy, m.overall.total);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::GenEvents => {
            let lib = pipeline::gen_events(&cfg)?;
            println!("{} types, {} instances", lib.types.len(), lib.instances.len());
        }
        Command::GenClips => pipeline::gen_clips(&cfg)?,
        Command::GenQuestions => {
            for (split, n) in pipeline::gen_questions(&cfg)? {
                println!("{split}: {n} questions");
            }
        }
        Command::Verify => run_verify(&cfg)?,
        Command::Stats => {
            for name in stats::stats(&cfg)? {
                println!("{}", cfg.output.join("stats").join(name).display());
            }
        }
        Command::Features => pipeline::features(&cfg)?,
        Command::Train => run_train(&cfg)?,
        Command::Eval => run_eval(&cfg)?,
        Command::Saliency { questions, limit } => {
            for r in pipeline::saliency(&cfg, questions, *limit)? {
                println!("{}: predicted {} (gold {})", r.question_id, r.predicted, r.answer);
            }
        }
        Command::All { skip_train } => {
            pipeline::gen_events(&cfg)?;
            pipeline::gen_clips(&cfg)?;
            pipeline::gen_questions(&cfg)?;
            run_verify(&cfg)?;
            stats::stats(&cfg)?;
            pipeline::features(&cfg)?;
            if !skip_train {
                run_train(&cfg)?;
            }
            run_eval(&cfg)?;
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(audioqa_cli::exit_code(&e) as u8)
        }
    }
}
