//! Composite-task dialogue simulation.
//!
//! A [`Session`] plays one dialogue: a hidden [`UserGoal`] is sampled, the
//! policy issues primitive system actions, a simulated user answers through
//! a semantic-error-rate channel, and the belief tracker folds the noisy
//! acts into the observation the policies consume.

mod belief;
mod session;

pub use belief::{
    track, BeliefLayout, BeliefState, SlotDist, SlotTop, SubtaskBelief, TrackContext, INDEP_DIM,
};
pub use session::{reset, transcript_jsonl, PendingTurn, Session, StepResult, TranscriptEntry};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ontology::{Constraint, EntityDatabase, Ontology, SubtaskSpec, DONTCARE};
use crate::rng::stream_rng;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Dialogue acts
// ---------------------------------------------------------------------------

/// Number of user act intents (size of the one-hot belief feature).
pub const INTENT_COUNT: usize = 8;

/// User act intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Inform = 0,
    Request = 1,
    ConfirmAnswer = 2,
    SelectAnswer = 3,
    Bye = 4,
    Hello = 5,
    Thankyou = 6,
    Null = 7,
}

impl Intent {
    /// Acts whose (slot, value) payload feeds the belief tracker.
    pub fn carries_value(self) -> bool {
        matches!(self, Intent::Inform | Intent::ConfirmAnswer | Intent::SelectAnswer)
    }

    pub fn name(self) -> &'static str {
        match self {
            Intent::Inform => "inform",
            Intent::Request => "request",
            Intent::ConfirmAnswer => "confirm_answer",
            Intent::SelectAnswer => "select_answer",
            Intent::Bye => "bye",
            Intent::Hello => "hello",
            Intent::Thankyou => "thankyou",
            Intent::Null => "null",
        }
    }

    pub fn parse(name: &str) -> Option<Intent> {
        Some(match name {
            "inform" => Intent::Inform,
            "request" => Intent::Request,
            "confirm_answer" => Intent::ConfirmAnswer,
            "select_answer" => Intent::SelectAnswer,
            "bye" => Intent::Bye,
            "hello" => Intent::Hello,
            "thankyou" => Intent::Thankyou,
            "null" => Intent::Null,
            _ => return None,
        })
    }
}

/// One user-side dialogue act.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueAct {
    pub intent: Intent,
    pub slot: Option<String>,
    pub value: Option<String>,
    pub confidence: f64,
}

impl DialogueAct {
    pub fn new(intent: Intent) -> Self {
        DialogueAct {
            intent,
            slot: None,
            value: None,
            confidence: 1.0,
        }
    }

    pub fn inform(slot: impl Into<String>, value: impl Into<String>) -> Self {
        DialogueAct {
            intent: Intent::Inform,
            slot: Some(slot.into()),
            value: Some(value.into()),
            confidence: 1.0,
        }
    }

    pub fn request(slot: impl Into<String>) -> Self {
        DialogueAct {
            intent: Intent::Request,
            slot: Some(slot.into()),
            value: None,
            confidence: 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Simulator parameters. The three benchmark environments use
/// ser = 0, 0.15 and 0.30.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub ser: f64,
    pub max_dialogue_turns: usize,
    pub max_subtask_turns: usize,
    /// Top-M value probabilities kept per slot block.
    pub top_m: usize,
    pub gamma: f64,
    pub turn_penalty: f64,
    pub intrinsic_success_bonus: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            ser: 0.0,
            max_dialogue_turns: 30,
            max_subtask_turns: 15,
            top_m: 3,
            gamma: 0.99,
            turn_penalty: -0.05,
            intrinsic_success_bonus: 1.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ser) {
            return Err(Error::Config(format!("ser {} outside [0,1]", self.ser)));
        }
        if self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::Config(format!("gamma {} outside (0,1]", self.gamma)));
        }
        if self.top_m == 0 || self.max_dialogue_turns == 0 || self.max_subtask_turns == 0 {
            return Err(Error::Config("limits and top_m must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Task context
// ---------------------------------------------------------------------------

/// Immutable per-experiment bundle: ontology, database, action space and
/// belief layout. Safe to share across concurrent sessions.
#[derive(Debug)]
pub struct TaskContext {
    pub ontology: Ontology,
    pub db: EntityDatabase,
    pub space: ActionSpace,
    pub layout: BeliefLayout,
    /// Per subtask: ontology slot indices of the informable slots.
    pub informable: Vec<Vec<usize>>,
    /// Per subtask: ontology slot indices of the requestable slots.
    pub requestable: Vec<Vec<usize>>,
}

impl TaskContext {
    pub fn new(ontology: Ontology, db: EntityDatabase, env: &EnvConfig) -> Self {
        let informable: Vec<Vec<usize>> = ontology
            .subtasks
            .iter()
            .map(|s| s.informable_slots().map(|(j, _)| j).collect())
            .collect();
        let requestable = ontology
            .subtasks
            .iter()
            .map(|s| s.requestable_slots().map(|(j, _)| j).collect())
            .collect();
        let layout = BeliefLayout {
            top_m: env.top_m,
            max_subtask_turns: env.max_subtask_turns,
            slot_counts: informable.iter().map(|v| v.len()).collect(),
        };
        let space = ActionSpace::for_ontology(&ontology);
        TaskContext {
            ontology,
            db,
            space,
            layout,
            informable,
            requestable,
        }
    }

    /// From a seeded database.
    pub fn from_ontology(ontology: Ontology, db_seed: u64, env: &EnvConfig) -> Result<Self> {
        let db = crate::ontology::generate_databases(&ontology, db_seed)?;
        Ok(Self::new(ontology, db, env))
    }

    pub fn subtask_count(&self) -> usize {
        self.ontology.subtask_count()
    }

    /// Position of `slot_name` within subtask k's informable slots.
    pub fn informable_position(&self, k: usize, slot_name: &str) -> Option<usize> {
        self.informable[k]
            .iter()
            .position(|&j| self.ontology.subtasks[k].slots[j].name == slot_name)
    }

    pub fn slot_name(&self, k: usize, slot: usize) -> &str {
        &self.ontology.subtasks[k].slots[slot].name
    }

    pub fn value_name(&self, k: usize, slot: usize, value: usize) -> &str {
        &self.ontology.subtasks[k].slots[slot].values[value]
    }
}

// ---------------------------------------------------------------------------
// System action space
// ---------------------------------------------------------------------------

/// Primitive system act kinds: three per informable slot, five per subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SysActKind {
    RequestSlot,
    ConfirmSlot,
    SelectSlot,
    InformEntity,
    InformRequested,
    Repeat,
    ReqMore,
    Bye,
}

impl SysActKind {
    pub fn name(self) -> &'static str {
        match self {
            SysActKind::RequestSlot => "request",
            SysActKind::ConfirmSlot => "confirm",
            SysActKind::SelectSlot => "select",
            SysActKind::InformEntity => "inform_entity",
            SysActKind::InformRequested => "inform_requested",
            SysActKind::Repeat => "repeat",
            SysActKind::ReqMore => "reqmore",
            SysActKind::Bye => "bye",
        }
    }
}

/// A primitive system action: a kind addressed to one subtask, optionally
/// targeting one (informable) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemAction {
    pub subtask: usize,
    pub kind: SysActKind,
    /// Ontology slot index for the three slot-level kinds.
    pub slot: Option<usize>,
}

/// Global primitive action inventory, laid out per subtask as
/// [slot₀: request/confirm/select, slot₁: …, inform_entity, inform_requested,
/// repeat, reqmore, bye] — matching the low-level policy's output blocks.
#[derive(Debug, Clone)]
pub struct ActionSpace {
    pub actions: Vec<SystemAction>,
    blocks: Vec<std::ops::Range<usize>>,
}

impl ActionSpace {
    pub fn for_ontology(ontology: &Ontology) -> Self {
        let mut actions = Vec::new();
        let mut blocks = Vec::new();
        for (k, sub) in ontology.subtasks.iter().enumerate() {
            let start = actions.len();
            for (j, _) in sub.informable_slots() {
                for kind in [SysActKind::RequestSlot, SysActKind::ConfirmSlot, SysActKind::SelectSlot] {
                    actions.push(SystemAction {
                        subtask: k,
                        kind,
                        slot: Some(j),
                    });
                }
            }
            for kind in [
                SysActKind::InformEntity,
                SysActKind::InformRequested,
                SysActKind::Repeat,
                SysActKind::ReqMore,
                SysActKind::Bye,
            ] {
                actions.push(SystemAction {
                    subtask: k,
                    kind,
                    slot: None,
                });
            }
            blocks.push(start..actions.len());
        }
        ActionSpace { actions, blocks }
    }

    pub fn size(&self) -> usize {
        self.actions.len()
    }

    /// Action-index range belonging to subtask k.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.blocks[k].clone()
    }

    pub fn blocks(&self) -> &[std::ops::Range<usize>] {
        &self.blocks
    }
}

// ---------------------------------------------------------------------------
// User goals
// ---------------------------------------------------------------------------

/// Hidden goal for one subtask: a constraint per informable slot (possibly
/// dontcare or unconstrained) plus 1–3 requested slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskGoal {
    /// Indexed by informable-slot position.
    pub constraints: Vec<Option<Constraint>>,
    /// Ontology slot indices, in announcement order.
    pub requests: Vec<usize>,
}

/// Hidden goal of a whole dialogue.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGoal {
    pub subtasks: Vec<SubtaskGoal>,
}

impl UserGoal {
    /// Database constraints (concrete values only) of subtask k.
    pub fn db_constraints(&self, ctx: &TaskContext, k: usize) -> Vec<(usize, Constraint)> {
        self.subtasks[k]
            .constraints
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match c {
                Some(Constraint::Value(v)) => Some((ctx.informable[k][j], Constraint::Value(*v))),
                _ => None,
            })
            .collect()
    }

    /// Does `entity` (of subtask k) satisfy every concrete constraint?
    pub fn entity_consistent(&self, ctx: &TaskContext, k: usize, entity: usize) -> bool {
        let row = &ctx.db.subtasks[k].entities[entity];
        self.db_constraints(ctx, k)
            .iter()
            .all(|&(slot, c)| matches!(c, Constraint::Value(v) if row[slot] == v))
    }
}

/// Constraints copying one entity's informable values: the always-satisfiable
/// fallback of goal sampling.
pub fn entity_copy_constraints(
    ctx: &TaskContext,
    k: usize,
    entity: usize,
) -> Vec<Option<Constraint>> {
    ctx.informable[k]
        .iter()
        .map(|&j| Some(Constraint::Value(ctx.db.subtasks[k].entities[entity][j])))
        .collect()
}

/// Sample a satisfiable goal: each informable slot is independently
/// constrained with probability 0.7, dontcare with 0.15 and left
/// unconstrained with 0.15; unsatisfiable draws are rejected (at most 100
/// times) before falling back to copying a random entity's values.
pub fn sample_goal(ctx: &TaskContext, rng: &mut ChaCha8Rng) -> UserGoal {
    let mut subtasks = Vec::with_capacity(ctx.subtask_count());
    for k in 0..ctx.subtask_count() {
        let spec = &ctx.ontology.subtasks[k];
        let mut constraints = None;
        for _ in 0..100 {
            let candidate: Vec<Option<Constraint>> = ctx.informable[k]
                .iter()
                .map(|&j| {
                    let roll: f64 = rng.gen();
                    if roll < 0.7 {
                        let card = spec.slots[j].values.len();
                        Some(Constraint::Value(rng.gen_range(0..card)))
                    } else if roll < 0.85 {
                        Some(Constraint::DontCare)
                    } else {
                        None
                    }
                })
                .collect();
            let db_constraints: Vec<(usize, Constraint)> = candidate
                .iter()
                .enumerate()
                .filter_map(|(j, c)| match c {
                    Some(Constraint::Value(v)) => {
                        Some((ctx.informable[k][j], Constraint::Value(*v)))
                    }
                    _ => None,
                })
                .collect();
            if ctx.db.match_count(k, &db_constraints) > 0 {
                constraints = Some(candidate);
                break;
            }
        }
        let constraints = constraints.unwrap_or_else(|| {
            let e = rng.gen_range(0..spec.entity_count);
            entity_copy_constraints(ctx, k, e)
        });
        let n_req = rng.gen_range(1..=3usize).min(ctx.requestable[k].len());
        let mut pool = ctx.requestable[k].clone();
        let mut requests = Vec::with_capacity(n_req);
        for _ in 0..n_req {
            let i = rng.gen_range(0..pool.len());
            requests.push(pool.swap_remove(i));
        }
        requests.sort_unstable();
        subtasks.push(SubtaskGoal {
            constraints,
            requests,
        });
    }
    UserGoal { subtasks }
}

// ---------------------------------------------------------------------------
// Noise channel
// ---------------------------------------------------------------------------

/// Pass an act through the semantic-error-rate channel. With probability
/// `ser` the act is corrupted: either its value is replaced by a uniformly
/// random different value of the same slot, or the whole act is deleted
/// (intent becomes null). Corrupted acts carry confidence in [0.2, 0.6),
/// clean acts in [0.7, 1.0).
pub fn corrupt(
    act: &DialogueAct,
    ser: f64,
    spec: &SubtaskSpec,
    rng: &mut ChaCha8Rng,
) -> DialogueAct {
    let mut out = act.clone();
    let corrupted = ser > 0.0 && rng.gen::<f64>() < ser;
    if !corrupted {
        out.confidence = rng.gen_range(0.7..1.0);
        return out;
    }
    out.confidence = rng.gen_range(0.2..0.6);
    let value_branch_available = matches!((&act.slot, &act.value), (Some(_), Some(_)));
    let use_value_branch = value_branch_available && rng.gen::<bool>();
    if use_value_branch {
        let slot_name = act.slot.as_ref().unwrap();
        let value = act.value.as_ref().unwrap();
        if let Some(j) = spec.slot_index(slot_name) {
            let candidates: Vec<&String> = spec.slots[j]
                .values
                .iter()
                .filter(|v| *v != value)
                .collect();
            if !candidates.is_empty() {
                out.value = Some(candidates[rng.gen_range(0..candidates.len())].clone());
                return out;
            }
        }
    }
    // Deletion branch.
    out.intent = Intent::Null;
    out.slot = None;
    out.value = None;
    out
}

/// Convenience used by sessions: per-dialogue RNG stream.
pub fn session_rng(seed: u64, dialogue_index: u64) -> ChaCha8Rng {
    stream_rng(seed, "session", dialogue_index)
}

pub const DONTCARE_TOKEN: &str = DONTCARE;
