//! `comdial` — train, evaluate, transfer and chat with composite-task
//! dialogue policies, and report learning curves.

use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use comdial_core::harness::{
    build_report, evaluate_only, learning_curve_svg, load_checkpoint, read_metrics, report_csv,
    run_chat, run_training, run_training_with, trainer_from_checkpoint, transfer_load,
    write_run_meta, ChatPolicy, ExperimentConfig, OntologySource, PolicyFamily, RunMeta,
};
use comdial_core::ontology::{
    composite_stats, ontology_fingerprint, preset, read_ontology, validate_ontology,
    CompositeStats, FULL_PRESETS, VALUES_COUNTING_NOTE,
};
use comdial_core::Error;

#[derive(Parser)]
#[command(name = "comdial", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the run-shaped subcommands; they override the config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (repeatable); overrides the config's seed list.
    #[arg(long)]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy family: comnet, mlp or rule.
    #[arg(long)]
    policy: Option<String>,
    /// Semantic error rate (the benchmarks use 0, 0.15 and 0.30).
    #[arg(long)]
    ser: Option<f64>,
    /// Built-in ontology preset, e.g. toyCR+toySFR or CR+SFR.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the milestone protocol and write metrics + checkpoint.
    Train(Overrides),
    /// Evaluate a checkpoint greedily.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation dialogues.
        #[arg(long, default_value_t = 100)]
        dialogues: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Initialize from a checkpoint trained on another task, then train.
    Transfer {
        /// Source checkpoint.
        #[arg(long)]
        from: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Play the user against a policy in the terminal.
    Chat {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print constraint/request/value statistics of composite tasks.
    Stats {
        /// Preset name; omit to print the three full-scale composites.
        #[arg(long)]
        preset: Option<String>,
        /// Ontology JSON file.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Aggregate metrics files into a CSV table and an SVG learning curve.
    Report {
        /// Metrics files (JSON lines), one per seed.
        files: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn build_config(overrides: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut config = match &overrides.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &overrides.preset {
        config.ontology = OntologySource::Preset(name.clone());
    }
    if let Some(policy) = &overrides.policy {
        config.policy = PolicyFamily::parse(policy)?;
    }
    if let Some(ser) = overrides.ser {
        config.env.ser = ser;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = out.clone();
    }
    if !overrides.seed.is_empty() {
        config.seeds = overrides.seed.clone();
    }
    config.validate()?;
    Ok(config)
}

fn cmd_train(overrides: Overrides) -> Result<(), Error> {
    let config = build_config(&overrides)?;
    let out_dir = config.out_dir.clone();
    for &seed in &config.seeds {
        let output = run_training(&config, seed, Some(&out_dir))?;
        let last = output.records.last();
        println!(
            "seed {seed}: final success {:.2} ({} milestones) -> {}",
            last.map_or(0.0, |r| r.success_rate),
            output.records.len(),
            output
                .metrics_path
                .as_deref()
                .map_or_else(|| "-".into(), |p| p.display().to_string()),
        );
    }
    Ok(())
}

fn cmd_eval(checkpoint: PathBuf, dialogues: usize, overrides: Overrides) -> Result<(), Error> {
    let config = build_config(&overrides)?;
    let ckpt = load_checkpoint(&checkpoint)?;
    let ontology = config.ontology.load()?;
    if ontology_fingerprint(&ontology) != ckpt.ontology_fingerprint {
        eprintln!("warning: checkpoint was trained on a different ontology (fingerprint mismatch)");
    }
    let ctx = config.task_context()?;
    let seed = config.seeds.first().copied().unwrap_or(0);
    let trainer = trainer_from_checkpoint(ckpt, ctx.space.blocks().to_vec(), config.train.clone())?;
    let record = evaluate_only(&config, Some(&trainer), seed, dialogues)?;
    println!(
        "success {:.3}  mean turns {:.1}  mean return_e {:.3}  mean return_i {:.3}  ({} dialogues, ser {})",
        record.success_rate,
        record.mean_turns,
        record.mean_return_e,
        record.mean_return_i,
        dialogues,
        config.env.ser
    );
    Ok(())
}

fn cmd_transfer(from: PathBuf, overrides: Overrides) -> Result<(), Error> {
    let config = build_config(&overrides)?;
    let ckpt = load_checkpoint(&from)?;
    let source_fingerprint = ckpt.ontology_fingerprint;
    let target_fingerprint = ontology_fingerprint(&config.ontology.load()?);
    let out_dir = config.out_dir.clone();
    for &seed in &config.seeds {
        let (trainer, report) = transfer_load(&ckpt, &config, seed)?;
        println!(
            "seed {seed}: transfer loaded {} parameters, {} missing",
            report.copied,
            report.missing_keys.len()
        );
        write_run_meta(
            &out_dir,
            seed,
            &RunMeta {
                provenance: &format!("transfer from {}", from.display()),
                source_fingerprint,
                target_fingerprint,
                copied_parameters: report.copied,
            },
        )?;
        let output = run_training_with(&config, seed, Some(&out_dir), Some(trainer))?;
        println!(
            "seed {seed}: final success {:.2}",
            output.records.last().map_or(0.0, |r| r.success_rate)
        );
    }
    Ok(())
}

fn cmd_chat(checkpoint: Option<PathBuf>, overrides: Overrides) -> Result<(), Error> {
    let mut config = build_config(&overrides)?;
    if overrides.ser.is_none() {
        config.env.ser = 0.0; // no noise channel by default
    }
    let policy = match checkpoint {
        Some(path) => ChatPolicy::from_checkpoint(load_checkpoint(&path)?)?,
        None => ChatPolicy::Rule,
    };
    let transcript = overrides.out.as_ref().map(|dir| dir.join("transcript.jsonl"));
    if let Some(dir) = &overrides.out {
        std::fs::create_dir_all(dir)?;
    }
    let stdin = std::io::stdin();
    let mut input = BufReader::new(stdin.lock());
    let mut output = std::io::stdout();
    run_chat(&config, policy, &mut input, &mut output, transcript.as_deref())?;
    Ok(())
}

fn print_stats(name: &str, stats: CompositeStats) {
    println!(
        "{name:>10}  constraints={:>3}  requests={:>3}  values={:>4}",
        stats.constraints, stats.requests, stats.values
    );
}

fn cmd_stats(preset_name: Option<String>, file: Option<PathBuf>) -> Result<(), Error> {
    match (preset_name, file) {
        (Some(name), None) => print_stats(&name, composite_stats(&preset(&name)?)),
        (None, Some(path)) => {
            let ontology = read_ontology(&path)?;
            let report = validate_ontology(&ontology);
            if !report.ok() {
                for v in &report.violations {
                    eprintln!("violation: {}: {}", v.path, v.message);
                }
                return Err(Error::Config("invalid ontology file".into()));
            }
            print_stats(&path.display().to_string(), composite_stats(&ontology));
        }
        (None, None) => {
            for name in FULL_PRESETS {
                print_stats(name, composite_stats(&preset(name)?));
            }
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config("use either --preset or --file".into()));
        }
    }
    println!("note: {VALUES_COUNTING_NOTE}");
    Ok(())
}

fn cmd_report(files: Vec<PathBuf>, out: PathBuf) -> Result<(), Error> {
    if files.is_empty() {
        return Err(Error::Config("report needs at least one metrics file".into()));
    }
    let runs = files
        .iter()
        .map(|p| read_metrics(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = build_report(&runs)?;
    let csv = report_csv(&rows);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("report.csv"), &csv)?;
    let svg = learning_curve_svg(&rows, &format!("{} seed(s)", files.len()));
    std::fs::write(out.join("curve.svg"), svg)?;
    print!("{csv}");
    println!(
        "wrote {} and {}",
        out.join("report.csv").display(),
        out.join("curve.svg").display()
    );
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::CorruptCheckpoint(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(overrides) => cmd_train(overrides),
        Command::Eval {
            checkpoint,
            dialogues,
            overrides,
        } => cmd_eval(checkpoint, dialogues, overrides),
        Command::Transfer { from, overrides } => cmd_transfer(from, overrides),
        Command::Chat {
            checkpoint,
            overrides,
        } => cmd_chat(checkpoint, overrides),
        Command::Stats { preset, file } => cmd_stats(preset, file),
        Command::Report { files, out } => cmd_report(files, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let _ = writeln!(std::io::stderr(), "error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
