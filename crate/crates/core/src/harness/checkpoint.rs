//! Checkpoint persistence and cross-task transfer.
//!
//! Format: magic `CDQK`, a u32 format version, a length-prefixed JSON header
//! (shapes, keys, counters), then all parameter scalars as little-endian
//! f64 in header order. Round trips are bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comnet::PolicyNet;
use crate::env::BeliefLayout;
use crate::hrl::Trainer;
use crate::tensor::{ParamRegistry, Parameter, Tensor};
use crate::{Error, Result};

use super::{ExperimentConfig, ModelConfig, PolicyFamily};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CDQK";

/// Everything needed to rebuild a trainer: model shape, all four parameter
/// registries (online + target at both levels), optimizer state, RNG seed
/// and training counters.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub ontology_fingerprint: u64,
    pub policy: PolicyFamily,
    pub model: ModelConfig,
    pub layout: BeliefLayout,
    pub master_seed: u64,
    pub dialogues: u64,
    pub low_updates: u64,
    pub top_updates: u64,
    pub reg_top: ParamRegistry,
    pub reg_low: ParamRegistry,
    pub tgt_top: ParamRegistry,
    pub tgt_low: ParamRegistry,
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    section: String,
    name: String,
    shape: Vec<usize>,
    step: u64,
    clamp: Option<(f64, f64)>,
    has_optimizer: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    ontology_fingerprint: u64,
    policy: PolicyFamily,
    model: ModelConfig,
    layout: BeliefLayout,
    master_seed: u64,
    dialogues: u64,
    low_updates: u64,
    top_updates: u64,
    entries: Vec<EntryMeta>,
}

impl Checkpoint {
    pub fn from_trainer(
        trainer: &Trainer,
        ontology_fingerprint: u64,
        policy: PolicyFamily,
        model: ModelConfig,
        layout: BeliefLayout,
    ) -> Checkpoint {
        Checkpoint {
            ontology_fingerprint,
            policy,
            model,
            layout,
            master_seed: trainer.seed(),
            dialogues: trainer.dialogues,
            low_updates: trainer.low_updates,
            top_updates: trainer.top_updates,
            reg_top: trainer.reg_top.clone(),
            reg_low: trainer.reg_low.clone(),
            tgt_top: trainer.tgt_top.clone(),
            tgt_low: trainer.tgt_low.clone(),
        }
    }

    /// Rebuild the policy network this checkpoint was trained with.
    pub fn build_net(&self) -> Result<PolicyNet> {
        match self.policy {
            PolicyFamily::ComNet => Ok(PolicyNet::comnet(&self.layout, &self.model.comnet)),
            PolicyFamily::Mlp => Ok(PolicyNet::mlp(&self.layout, &self.model.mlp_hidden)),
            PolicyFamily::Rule => Err(Error::Config(
                "rule-family checkpoints carry no network".into(),
            )),
        }
    }

    fn sections(&self) -> BTreeMap<&'static str, (&ParamRegistry, bool)> {
        BTreeMap::from([
            ("low", (&self.reg_low, true)),
            ("tgt_low", (&self.tgt_low, false)),
            ("tgt_top", (&self.tgt_top, false)),
            ("top", (&self.reg_top, true)),
        ])
    }
}

fn push_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize to the versioned binary container.
pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    for (section, (reg, has_optimizer)) in ckpt.sections() {
        for (name, param) in reg.iter() {
            entries.push(EntryMeta {
                section: section.to_string(),
                name: name.clone(),
                shape: param.value.shape().to_vec(),
                step: param.step_count(),
                clamp: param.clamp,
                has_optimizer,
            });
        }
    }
    let header = Header {
        ontology_fingerprint: ckpt.ontology_fingerprint,
        policy: ckpt.policy,
        model: ckpt.model.clone(),
        layout: ckpt.layout.clone(),
        master_seed: ckpt.master_seed,
        dialogues: ckpt.dialogues,
        low_updates: ckpt.low_updates,
        top_updates: ckpt.top_updates,
        entries,
    };
    let header_json = serde_json::to_vec(&serde_json::to_value(&header)?)?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, (reg, has_optimizer)) in ckpt.sections() {
        for (_, param) in reg.iter() {
            push_f64s(&mut out, param.value.data());
            if has_optimizer {
                let (m1, m2, _) = param.optimizer_state();
                push_f64s(&mut out, m1.data());
                push_f64s(&mut out, m2.data());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn take_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parse the versioned binary container.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.take_u32()?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let header_len = r.take_u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;

    let mut sections: BTreeMap<String, ParamRegistry> = BTreeMap::new();
    for entry in &header.entries {
        let len: usize = entry.shape.iter().product();
        let value = Tensor::from_vec(entry.shape.clone(), r.take_f64s(len)?)
            .map_err(|_| Error::CorruptCheckpoint("shape/data mismatch".into()))?;
        let mut param = Parameter::new(value);
        param.clamp = entry.clamp;
        if entry.has_optimizer {
            let m1 = Tensor::from_vec(entry.shape.clone(), r.take_f64s(len)?).unwrap();
            let m2 = Tensor::from_vec(entry.shape.clone(), r.take_f64s(len)?).unwrap();
            param.restore_optimizer_state(m1, m2, entry.step);
        }
        sections
            .entry(entry.section.clone())
            .or_default()
            .insert(entry.name.clone(), param);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let mut grab = |name: &str| -> Result<ParamRegistry> {
        sections
            .remove(name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing section '{name}'")))
    };
    Ok(Checkpoint {
        ontology_fingerprint: header.ontology_fingerprint,
        policy: header.policy,
        model: header.model,
        layout: header.layout,
        master_seed: header.master_seed,
        dialogues: header.dialogues,
        low_updates: header.low_updates,
        top_updates: header.top_updates,
        reg_low: grab("low")?,
        tgt_low: grab("tgt_low")?,
        tgt_top: grab("tgt_top")?,
        reg_top: grab("top")?,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Transfer
// ---------------------------------------------------------------------------

/// Result of a successful transfer initialization.
#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    /// Target keys absent from the checkpoint (always empty on success).
    pub missing_keys: Vec<String>,
    /// Parameters copied.
    pub copied: usize,
}

fn copy_section(
    section: &str,
    target: &mut ParamRegistry,
    source: &ParamRegistry,
    offending: &mut Vec<String>,
) -> usize {
    let mut copied = 0;
    let keys: Vec<String> = target.keys().cloned().collect();
    for key in keys {
        match source.try_get(&key) {
            None => offending.push(format!("{section}/{key}: missing from checkpoint")),
            Some(src) => {
                let dst = target.get_mut(&key);
                if src.value.shape() != dst.value.shape() {
                    offending.push(format!(
                        "{section}/{key}: shape {:?} vs {:?}",
                        src.value.shape(),
                        dst.value.shape()
                    ));
                } else {
                    dst.value.data_mut().copy_from_slice(src.value.data());
                    copied += 1;
                }
            }
        }
    }
    copied
}

/// Initialize a trainer for `config`'s task from a checkpoint trained on
/// another task. All registry parameters are copied by key; optimizer state
/// and counters reset. Fails listing every missing or mis-shaped key.
pub fn transfer_load(
    ckpt: &Checkpoint,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Trainer, TransferReport)> {
    if config.policy != ckpt.policy {
        return Err(Error::TransferMismatch(format!(
            "checkpoint family {} vs configured {}",
            ckpt.policy.name(),
            config.policy.name()
        )));
    }
    let ctx = config.task_context()?;
    let net = config
        .build_net(&ctx)
        .ok_or_else(|| Error::Config("rule family cannot be transfer-initialized".into()))?;
    let mut trainer = Trainer::new(net, ctx.space.blocks().to_vec(), config.train.clone(), seed);

    let mut offending = Vec::new();
    let mut copied = 0;
    copied += copy_section("top", &mut trainer.reg_top, &ckpt.reg_top, &mut offending);
    copied += copy_section("low", &mut trainer.reg_low, &ckpt.reg_low, &mut offending);
    if !offending.is_empty() {
        return Err(Error::TransferMismatch(offending.join("; ")));
    }
    trainer.reset_training_state();
    Ok((
        trainer,
        TransferReport {
            missing_keys: Vec::new(),
            copied,
        },
    ))
}

/// Rebuild a trainer on the checkpoint's own task (evaluation, chat, or
/// continued training).
pub fn trainer_from_checkpoint(
    ckpt: Checkpoint,
    blocks: Vec<std::ops::Range<usize>>,
    train: crate::hrl::TrainConfig,
) -> Result<Trainer> {
    let net = ckpt.build_net()?;
    let mut trainer = Trainer::new(net, blocks, train, ckpt.master_seed);
    trainer.reg_top = ckpt.reg_top;
    trainer.reg_low = ckpt.reg_low;
    trainer.tgt_top = ckpt.tgt_top;
    trainer.tgt_low = ckpt.tgt_low;
    trainer.dialogues = ckpt.dialogues;
    trainer.low_updates = ckpt.low_updates;
    trainer.top_updates = ckpt.top_updates;
    Ok(trainer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrl::TrainConfig;
    use crate::ontology::ontology_fingerprint;

    fn small_config(preset: &str, policy: PolicyFamily) -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.ontology = super::super::OntologySource::Preset(preset.into());
        config.policy = policy;
        config.model.comnet.embed = 8;
        config.model.comnet.head_hidden = 8;
        config
    }

    fn make_trainer(config: &ExperimentConfig, seed: u64) -> (Trainer, u64) {
        let ctx = config.task_context().unwrap();
        let net = config.build_net(&ctx).unwrap();
        let trainer = Trainer::new(net, ctx.space.blocks().to_vec(), config.train.clone(), seed);
        let ontology = config.ontology.load().unwrap();
        (trainer, ontology_fingerprint(&ontology))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let config = small_config("toyCR+toySFR", PolicyFamily::ComNet);
        let (trainer, fp) = make_trainer(&config, 3);
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            config.policy,
            config.model.clone(),
            config.task_context().unwrap().layout.clone(),
        );
        let bytes = checkpoint_to_bytes(&ckpt).unwrap();
        let back = checkpoint_from_bytes(&bytes).unwrap();
        let again = checkpoint_to_bytes(&back).unwrap();
        assert_eq!(bytes, again);

        // Forward outputs identical on a fixed input.
        let ctx = config.task_context().unwrap();
        let belief = vec![0.25; ctx.layout.total_dim()];
        let net = ckpt.build_net().unwrap();
        let (q1, _) = net.forward_top(&ckpt.reg_top, &belief).unwrap();
        let (q2, _) = net.forward_top(&back.reg_top, &belief).unwrap();
        assert_eq!(q1, q2);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let config = small_config("toyCR+toySFR", PolicyFamily::Mlp);
        let (trainer, fp) = make_trainer(&config, 4);
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            config.policy,
            config.model.clone(),
            config.task_context().unwrap().layout.clone(),
        );
        let mut bytes = checkpoint_to_bytes(&ckpt).unwrap();
        bytes.truncate(bytes.len() - 9);
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let config = small_config("toyCR+toySFR", PolicyFamily::Mlp);
        let (trainer, fp) = make_trainer(&config, 5);
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            config.policy,
            config.model.clone(),
            config.task_context().unwrap().layout.clone(),
        );
        let mut bytes = checkpoint_to_bytes(&ckpt).unwrap();
        bytes[4] = 99;
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));
    }

    #[test]
    fn target_network_divergence_survives_round_trip() {
        let config = small_config("toyCR+toySFR", PolicyFamily::ComNet);
        let (mut trainer, fp) = make_trainer(&config, 6);
        for (_, p) in trainer.reg_low.iter_mut() {
            for v in p.value.data_mut() {
                *v += 1.0;
            }
        }
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            config.policy,
            config.model.clone(),
            config.task_context().unwrap().layout.clone(),
        );
        let back = checkpoint_from_bytes(&checkpoint_to_bytes(&ckpt).unwrap()).unwrap();
        let online: Vec<f64> = back.reg_low.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect();
        let target: Vec<f64> = back.tgt_low.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect();
        assert_ne!(online, target);
        let on_top: Vec<f64> = back.reg_top.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect();
        let tg_top: Vec<f64> = back.tgt_top.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect();
        assert_eq!(on_top, tg_top);
    }

    #[test]
    fn comnet_key_sets_match_across_composite_tasks() {
        let (t1, _) = make_trainer(&small_config("toyCR+toySFR", PolicyFamily::ComNet), 7);
        let (t2, _) = make_trainer(&small_config("toyCR+toyLAP", PolicyFamily::ComNet), 8);
        let k1: Vec<&String> = t1.reg_low.keys().collect();
        let k2: Vec<&String> = t2.reg_low.keys().collect();
        assert_eq!(k1, k2);
    }

    #[test]
    fn transfer_succeeds_between_toy_tasks() {
        let source = small_config("toyCR+toySFR", PolicyFamily::ComNet);
        let (trainer, fp) = make_trainer(&source, 9);
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            source.policy,
            source.model.clone(),
            source.task_context().unwrap().layout.clone(),
        );
        let target = small_config("toyCR+toyLAP", PolicyFamily::ComNet);
        let (new_trainer, report) = transfer_load(&ckpt, &target, 1).unwrap();
        assert!(report.missing_keys.is_empty());
        assert!(report.copied > 0);
        assert_eq!(new_trainer.dialogues, 0);
        // Copied parameters forward identically on the shared subtask shape.
        let v_src: Vec<f64> = ckpt.reg_low.get("msg/S>I/l1").value.data().to_vec();
        let v_dst: Vec<f64> = new_trainer.reg_low.get("msg/S>I/l1").value.data().to_vec();
        assert_eq!(v_src, v_dst);
    }

    #[test]
    fn width_mismatch_lists_offending_keys() {
        let source = small_config("toyCR+toySFR", PolicyFamily::ComNet);
        let (trainer, fp) = make_trainer(&source, 10);
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            source.policy,
            source.model.clone(),
            source.task_context().unwrap().layout.clone(),
        );
        let mut target = small_config("toyCR+toyLAP", PolicyFamily::ComNet);
        target.model.comnet.embed = 16;
        match transfer_load(&ckpt, &target, 1) {
            Err(Error::TransferMismatch(msg)) => {
                assert!(msg.contains("shape"), "{msg}");
                assert!(msg.contains("msg/"), "{msg}");
            }
            other => panic!("expected transfer mismatch, got {other:?}"),
        }
    }

    #[test]
    fn trainer_restores_counters_and_state() {
        let config = small_config("toyCR+toySFR", PolicyFamily::ComNet);
        let (mut trainer, fp) = make_trainer(&config, 11);
        trainer.dialogues = 123;
        let ckpt = Checkpoint::from_trainer(
            &trainer,
            fp,
            config.policy,
            config.model.clone(),
            config.task_context().unwrap().layout.clone(),
        );
        let ctx = config.task_context().unwrap();
        let restored =
            trainer_from_checkpoint(ckpt, ctx.space.blocks().to_vec(), TrainConfig::default())
                .unwrap();
        assert_eq!(restored.dialogues, 123);
    }
}
