//! The milestone training/evaluation protocol.
//!
//! A run is warm-up (rule-agent dialogues recorded into the buffers, no
//! gradients) followed by alternating blocks of training dialogues and
//! frozen greedy evaluations. Every random draw derives from
//! `(seed, stream label, index)`, so a (config, seed) pair fixes the whole
//! run; metric files are append-only JSON lines and byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Session, TaskContext};
use crate::hrl::{greedy_dialogue, DialogueStats, EpsGreedy, Trainer};
use crate::ontology::ontology_fingerprint;
use crate::rng::stream_rng;
use crate::rule::{rule_dialogue, RuleActor};
use crate::{Error, Result};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::{ExperimentConfig, PolicyFamily};

/// One milestone's evaluation summary. The wall clock is kept out of the
/// serialized record so identical (config, seed) runs produce byte-identical
/// metrics files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilestoneRecord {
    pub milestone: usize,
    pub dialogues: u64,
    pub success_rate: f64,
    pub mean_turns: f64,
    pub mean_return_e: f64,
    pub mean_return_i: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Progress-stream line, emitted every 50 training dialogues.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProgressLine {
    dialogue_idx: u64,
    eps: f64,
    low_loss: Option<f64>,
    top_loss: Option<f64>,
}

/// What a finished run hands back.
#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<MilestoneRecord>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

fn session_for(ctx: &Arc<TaskContext>, env: &EnvConfig, seed: u64, label: &str, idx: u64) -> Session {
    Session::new(env.clone(), ctx.clone(), stream_rng(seed, label, idx))
}

struct Sinks {
    metrics: Option<BufWriter<File>>,
    progress: Option<BufWriter<File>>,
}

impl Sinks {
    fn open(out: Option<&Path>, seed: u64) -> Result<(Self, Option<PathBuf>)> {
        match out {
            None => Ok((Sinks { metrics: None, progress: None }, None)),
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let metrics_path = dir.join(format!("metrics_seed{seed}.jsonl"));
                let metrics = BufWriter::new(File::create(&metrics_path)?);
                let progress = BufWriter::new(File::create(dir.join(format!("progress_seed{seed}.jsonl")))?);
                Ok((
                    Sinks {
                        metrics: Some(metrics),
                        progress: Some(progress),
                    },
                    Some(metrics_path),
                ))
            }
        }
    }

    fn write_record(&mut self, record: &MilestoneRecord) -> Result<()> {
        if let Some(w) = &mut self.metrics {
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }

    fn write_progress(&mut self, line: &ProgressLine) -> Result<()> {
        if let Some(w) = &mut self.progress {
            serde_json::to_writer(&mut *w, line)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Evaluate the frozen policy over the milestone's dedicated seed stream.
fn evaluate(
    config: &ExperimentConfig,
    ctx: &Arc<TaskContext>,
    trainer: Option<&Trainer>,
    seed: u64,
    milestone: usize,
) -> Result<(f64, f64, f64, f64)> {
    let n = config.eval_dialogues;
    if n == 0 {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let mut successes = 0usize;
    let mut turns = 0usize;
    let mut ret_e = 0.0;
    let mut ret_i = 0.0;
    for e in 0..n {
        let idx = (milestone as u64) * 1_000_000 + e as u64;
        let mut session = session_for(ctx, &config.env, seed, "eval-env", idx);
        let stats: DialogueStats = match trainer {
            Some(t) => greedy_dialogue(&t.net, &t.reg_top, &t.reg_low, &mut session)?,
            None => {
                let (success, t_turns, e_sum, i_sum) = rule_dialogue(&mut session)?;
                DialogueStats {
                    success,
                    turns: t_turns,
                    return_e: e_sum,
                    return_i: i_sum,
                    ..DialogueStats::default()
                }
            }
        };
        successes += stats.success as usize;
        turns += stats.turns;
        ret_e += stats.return_e;
        ret_i += stats.return_i;
    }
    let inv = 1.0 / n as f64;
    Ok((
        successes as f64 * inv,
        turns as f64 * inv,
        ret_e * inv,
        ret_i * inv,
    ))
}

/// Run the full protocol for one seed. Pass `preinit` to continue from a
/// transfer-initialized trainer. Writes metrics/progress/checkpoint files
/// when `out` is given and returns every milestone record.
pub fn run_training_with(
    config: &ExperimentConfig,
    seed: u64,
    out: Option<&Path>,
    preinit: Option<Trainer>,
) -> Result<RunOutput> {
    config.validate()?;
    let ontology = config.ontology.load()?;
    let fingerprint = ontology_fingerprint(&ontology);
    let ctx = Arc::new(TaskContext::from_ontology(
        ontology,
        config.db_seed,
        &config.env,
    )?);
    let (mut sinks, metrics_path) = Sinks::open(out, seed)?;

    let mut trainer: Option<Trainer> = match (&config.policy, preinit) {
        (PolicyFamily::Rule, _) => None,
        (_, Some(t)) => Some(t),
        (_, None) => {
            let net = config.build_net(&ctx).expect("net family");
            Some(Trainer::new(
                net,
                ctx.space.blocks().to_vec(),
                config.train.clone(),
                seed,
            ))
        }
    };

    let mut records = Vec::with_capacity(config.milestones);
    let start = Instant::now();
    let mut loss_window: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());

    for milestone in 1..=config.milestones {
        let clock = Instant::now();
        for _ in 0..config.dialogues_per_milestone {
            let Some(t) = trainer.as_mut() else {
                break; // rule family trains nothing
            };
            let dialogue_idx = t.dialogues;
            let mut session = session_for(&ctx, &config.env, seed, "train-env", dialogue_idx);
            let warmup = dialogue_idx < t.cfg.warmup_dialogues;
            let stats = if warmup {
                let mut actor = RuleActor::new(&session);
                t.run_dialogue(&mut session, &mut actor, false, true)?
            } else {
                let mut actor = EpsGreedy {
                    eps: t.epsilon(),
                    rng: stream_rng(seed, "explore", dialogue_idx),
                };
                t.run_dialogue(&mut session, &mut actor, true, true)?
            };
            loss_window.0.extend(stats.low_losses);
            loss_window.1.extend(stats.top_losses);
            if t.dialogues % 50 == 0 {
                let mean = |v: &Vec<f64>| {
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                };
                sinks.write_progress(&ProgressLine {
                    dialogue_idx: t.dialogues,
                    eps: t.epsilon(),
                    low_loss: mean(&loss_window.0),
                    top_loss: mean(&loss_window.1),
                })?;
                loss_window.0.clear();
                loss_window.1.clear();
            }
        }
        let dialogues = (milestone * config.dialogues_per_milestone) as u64;
        let (success_rate, mean_turns, mean_return_e, mean_return_i) =
            evaluate(config, &ctx, trainer.as_ref(), seed, milestone)?;
        let record = MilestoneRecord {
            milestone,
            dialogues,
            success_rate,
            mean_turns,
            mean_return_e,
            mean_return_i,
            wall_clock_secs: clock.elapsed().as_secs_f64(),
        };
        println!(
            "[seed {seed}] milestone {milestone}/{}: dialogues={dialogues} success={success_rate:.2} turns={mean_turns:.1} ({:.1}s)",
            config.milestones,
            record.wall_clock_secs
        );
        sinks.write_record(&record)?;
        records.push(record);
    }
    let _ = start;

    let checkpoint_path = match (out, trainer.as_ref()) {
        (Some(dir), Some(t)) => {
            let path = dir.join(format!("checkpoint_seed{seed}.ckpt"));
            let ckpt = Checkpoint::from_trainer(
                t,
                fingerprint,
                config.policy,
                config.model.clone(),
                ctx.layout.clone(),
            );
            save_checkpoint(&path, &ckpt)?;
            Some(path)
        }
        _ => None,
    };

    Ok(RunOutput {
        records,
        metrics_path,
        checkpoint_path,
    })
}

/// Run the full protocol for one seed (fresh initialization).
pub fn run_training(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<RunOutput> {
    run_training_with(config, seed, out, None)
}

/// Evaluate a restored trainer (or the rule agent) without training.
pub fn evaluate_only(
    config: &ExperimentConfig,
    trainer: Option<&Trainer>,
    seed: u64,
    dialogues: usize,
) -> Result<MilestoneRecord> {
    let ctx = Arc::new(config.task_context()?);
    let mut eval_config = config.clone();
    eval_config.eval_dialogues = dialogues;
    let clock = Instant::now();
    let (success_rate, mean_turns, mean_return_e, mean_return_i) =
        evaluate(&eval_config, &ctx, trainer, seed, 0)?;
    Ok(MilestoneRecord {
        milestone: 0,
        dialogues: trainer.map_or(0, |t| t.dialogues),
        success_rate,
        mean_turns,
        mean_return_e,
        mean_return_i,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Metadata written next to transfer runs.
#[derive(Debug, Serialize)]
pub struct RunMeta<'a> {
    pub provenance: &'a str,
    pub source_fingerprint: u64,
    pub target_fingerprint: u64,
    pub copied_parameters: usize,
}

pub fn write_run_meta(dir: &Path, seed: u64, meta: &RunMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("run_meta_seed{seed}.json"));
    let mut text = serde_json::to_string_pretty(&serde_json::to_value(meta)?)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse an append-only metrics file; any prefix of a valid file parses.
pub fn read_metrics_file(path: &Path) -> Result<Vec<MilestoneRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MilestoneRecord =
            serde_json::from_str(line).map_err(|e| Error::Config(format!("metrics line: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.ontology = super::super::OntologySource::Preset("toyCR+toySFR".into());
        config.policy = PolicyFamily::Rule;
        config.milestones = 3;
        config.dialogues_per_milestone = 5;
        config.eval_dialogues = 10;
        config
    }

    #[test]
    fn rule_family_produces_a_flat_perfect_curve() {
        let out = run_training(&tiny_config(), 1, None).unwrap();
        assert_eq!(out.records.len(), 3);
        for r in &out.records {
            assert_eq!(r.success_rate, 1.0);
        }
        assert_eq!(out.records[2].dialogues, 15);
    }

    #[test]
    fn metrics_files_are_byte_identical_across_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let a = run_training(&config, 5, Some(&dir.path().join("a"))).unwrap();
        let b = run_training(&config, 5, Some(&dir.path().join("b"))).unwrap();
        let bytes_a = std::fs::read(a.metrics_path.unwrap()).unwrap();
        let bytes_b = std::fs::read(b.metrics_path.unwrap()).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert!(!bytes_a.is_empty());
    }

    #[test]
    fn metrics_prefixes_parse() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let out = run_training(&config, 2, Some(dir.path())).unwrap();
        let path = out.metrics_path.unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Truncate to a prefix; it must still parse.
        let prefix = lines[..2].join("\n");
        let prefix_path = dir.path().join("prefix.jsonl");
        std::fs::write(&prefix_path, prefix).unwrap();
        let records = read_metrics_file(&prefix_path).unwrap();
        assert_eq!(records.len(), 2);
    }

    #[test]
    fn nn_training_smoke_run_writes_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.policy = PolicyFamily::ComNet;
        config.model.comnet.embed = 8;
        config.model.comnet.head_hidden = 8;
        config.train.warmup_dialogues = 5;
        config.train.batch_low = 8;
        config.train.batch_top = 4;
        config.eval_dialogues = 4;
        let out = run_training(&config, 3, Some(dir.path())).unwrap();
        assert_eq!(out.records.len(), 3);
        let ckpt_path = out.checkpoint_path.unwrap();
        let ckpt = super::super::load_checkpoint(&ckpt_path).unwrap();
        assert_eq!(ckpt.dialogues, 15);
    }

    #[test]
    fn warmup_records_transitions_without_gradient_steps() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.policy = PolicyFamily::ComNet;
        config.model.comnet.embed = 8;
        config.model.comnet.head_hidden = 8;
        // Total dialogues (15) stay inside the warm-up window (20).
        config.train.warmup_dialogues = 20;
        config.train.batch_low = 4;
        config.train.batch_top = 2;
        config.eval_dialogues = 2;
        let out = run_training(&config, 7, Some(dir.path())).unwrap();
        let ckpt = super::super::load_checkpoint(&out.checkpoint_path.unwrap()).unwrap();
        assert_eq!(ckpt.dialogues, 15);
        assert_eq!(ckpt.low_updates, 0, "no gradient steps during warm-up");
        assert_eq!(ckpt.top_updates, 0);
        // All parameter step counters untouched.
        for (_, p) in ckpt.reg_low.iter() {
            assert_eq!(p.step_count(), 0);
        }
    }

    #[test]
    fn evaluation_does_not_perturb_training_state() {
        // Identical training outputs with evaluation on and off.
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.policy = PolicyFamily::ComNet;
        config.model.comnet.embed = 8;
        config.model.comnet.head_hidden = 8;
        config.train.warmup_dialogues = 3;
        config.train.batch_low = 8;
        config.train.batch_top = 4;
        let mut with_eval = config.clone();
        with_eval.eval_dialogues = 6;
        let mut without_eval = config;
        without_eval.eval_dialogues = 0;
        let a = run_training(&with_eval, 9, Some(&dir.path().join("a"))).unwrap();
        let b = run_training(&without_eval, 9, Some(&dir.path().join("b"))).unwrap();
        let ckpt_a = std::fs::read(a.checkpoint_path.unwrap()).unwrap();
        let ckpt_b = std::fs::read(b.checkpoint_path.unwrap()).unwrap();
        assert_eq!(ckpt_a, ckpt_b);
        let prog_a = std::fs::read(dir.path().join("a/progress_seed9.jsonl")).unwrap();
        let prog_b = std::fs::read(dir.path().join("b/progress_seed9.jsonl")).unwrap();
        assert_eq!(prog_a, prog_b);
    }
}
