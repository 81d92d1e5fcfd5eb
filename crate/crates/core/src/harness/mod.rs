//! Experiment orchestration: configuration, the milestone training/eval
//! protocol, checkpoints, transfer runs, reports and the chat driver.

mod chat;
mod checkpoint;
mod report;
mod train;

pub use chat::{parse_user_line, run_chat, ChatPolicy};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint,
    trainer_from_checkpoint, transfer_load, Checkpoint, TransferReport,
    CHECKPOINT_FORMAT_VERSION,
};
pub use report::{build_report, learning_curve_svg, read_metrics, report_csv, ReportRow};
pub use train::{
    evaluate_only, run_training, run_training_with, write_run_meta, MilestoneRecord, RunMeta,
    RunOutput,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::comnet::{ComNetConfig, PolicyNet, MLP_BASELINE_HIDDEN};
use crate::env::{EnvConfig, TaskContext};
use crate::hrl::TrainConfig;
use crate::ontology::{preset, read_ontology, validate_ontology, Ontology};
use crate::{Error, Result};

/// Which agent family a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyFamily {
    ComNet,
    Mlp,
    Rule,
}

impl PolicyFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::ComNet => "comnet",
            PolicyFamily::Mlp => "mlp",
            PolicyFamily::Rule => "rule",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "comnet" => Ok(PolicyFamily::ComNet),
            "mlp" => Ok(PolicyFamily::Mlp),
            "rule" => Ok(PolicyFamily::Rule),
            other => Err(Error::Config(format!("unknown policy family '{other}'"))),
        }
    }
}

/// Where the ontology comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OntologySource {
    Preset(String),
    File(PathBuf),
}

impl OntologySource {
    pub fn load(&self) -> Result<Ontology> {
        let ontology = match self {
            OntologySource::Preset(name) => preset(name)?,
            OntologySource::File(path) => read_ontology(path)?,
        };
        let report = validate_ontology(&ontology);
        if !report.ok() {
            let detail: Vec<String> = report
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.path, v.message))
                .collect();
            return Err(Error::Config(format!(
                "invalid ontology: {}",
                detail.join("; ")
            )));
        }
        Ok(ontology)
    }
}

/// Network hyper-parameters for both families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub comnet: ComNetConfig,
    pub mlp_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            comnet: ComNetConfig::default(),
            mlp_hidden: MLP_BASELINE_HIDDEN.to_vec(),
        }
    }
}

/// Everything one experiment needs. Serialized as the JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub ontology: OntologySource,
    pub env: EnvConfig,
    pub policy: PolicyFamily,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub milestones: usize,
    pub dialogues_per_milestone: usize,
    pub eval_dialogues: usize,
    pub seeds: Vec<u64>,
    /// Seed of the synthetic databases (shared across run seeds so every
    /// seed sees the same task).
    pub db_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ontology: OntologySource::Preset("toyCR+toySFR".into()),
            env: EnvConfig::default(),
            policy: PolicyFamily::ComNet,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            milestones: 30,
            dialogues_per_milestone: 200,
            eval_dialogues: 100,
            seeds: vec![0],
            db_seed: 7,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.milestones == 0 || self.dialogues_per_milestone == 0 {
            return Err(Error::Config(
                "milestones and dialogues_per_milestone must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        Ok(())
    }

    /// Total training dialogues (milestones × dialogues per milestone).
    pub fn total_dialogues(&self) -> u64 {
        (self.milestones * self.dialogues_per_milestone) as u64
    }

    pub fn task_context(&self) -> Result<TaskContext> {
        let ontology = self.ontology.load()?;
        TaskContext::from_ontology(ontology, self.db_seed, &self.env)
    }

    /// Build the configured policy network (None for the rule family).
    pub fn build_net(&self, ctx: &TaskContext) -> Option<PolicyNet> {
        match self.policy {
            PolicyFamily::ComNet => Some(PolicyNet::comnet(&ctx.layout, &self.model.comnet)),
            PolicyFamily::Mlp => Some(PolicyNet::mlp(&ctx.layout, &self.model.mlp_hidden)),
            PolicyFamily::Rule => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }
}
