//! One dialogue session: hidden goal, simulated user, rewards, termination.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ontology::Constraint;
use crate::{Error, Result};

use super::belief::{track, BeliefState, TrackContext};
use super::{
    corrupt, sample_goal, DialogueAct, EnvConfig, Intent, SysActKind, SystemAction, TaskContext,
    UserGoal,
};

/// Outcome of one environment turn.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub belief: BeliefState,
    pub intrinsic_reward: f64,
    pub extrinsic_reward: f64,
    pub subtask_terminated: bool,
    pub subtask_success: bool,
    pub dialogue_terminated: bool,
    pub dialogue_success: bool,
}

/// One transcript line (JSON-lines format).
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub turn: usize,
    pub speaker: &'static str,
    pub intent: String,
    pub slot: Option<String>,
    pub value: Option<String>,
    pub confidence: Option<f64>,
    pub r_i: Option<f64>,
    pub r_e: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SubtaskStatus {
    Active,
    Succeeded,
    Failed,
}

/// Carries the turn state between applying the system act and absorbing the
/// user response.
struct TurnContext {
    action: SystemAction,
    patience_bye: bool,
    system_bye: bool,
    rendered: (String, Option<String>, Option<String>),
}

/// Opaque in-flight turn handed out by [`Session::begin_external_turn`].
pub struct PendingTurn(TurnContext);

/// A single dialogue. Sessions are single-threaded; run many of them with
/// independently seeded generators for parallel evaluation.
pub struct Session {
    pub config: EnvConfig,
    ctx: Arc<TaskContext>,
    goal: UserGoal,
    belief: BeliefState,
    status: Vec<SubtaskStatus>,
    /// Latest offered entity per subtask.
    offered: Vec<Option<usize>>,
    /// Sticky: a goal-consistent entity has been offered.
    consistent_offered: Vec<bool>,
    /// Slots answered by the system (ontology slot indices).
    answered: Vec<BTreeSet<usize>>,
    /// Requests the system has observed and not yet answered.
    observed_pending: Vec<BTreeSet<usize>>,
    /// Constrained slots the simulated user has already volunteered.
    told: Vec<BTreeSet<usize>>,
    subtask_turns: Vec<usize>,
    dialogue_turns: usize,
    last_sys: Option<SystemAction>,
    repeat_run: usize,
    rng: ChaCha8Rng,
    terminated: bool,
    success: bool,
    transcript: Option<Vec<TranscriptEntry>>,
}

/// Start a fresh dialogue: sample a goal and return the uniform-ignorance
/// belief together with the hidden session.
pub fn reset(config: EnvConfig, ctx: Arc<TaskContext>, rng: ChaCha8Rng) -> (BeliefState, Session) {
    let session = Session::new(config, ctx, rng);
    (session.belief.clone(), session)
}

impl Session {
    pub fn new(config: EnvConfig, ctx: Arc<TaskContext>, mut rng: ChaCha8Rng) -> Session {
        let goal = sample_goal(&ctx, &mut rng);
        let belief = BeliefState::ignorance(&ctx);
        let k = ctx.subtask_count();
        Session {
            config,
            goal,
            belief,
            status: vec![SubtaskStatus::Active; k],
            offered: vec![None; k],
            consistent_offered: vec![false; k],
            answered: vec![BTreeSet::new(); k],
            observed_pending: vec![BTreeSet::new(); k],
            told: vec![BTreeSet::new(); k],
            subtask_turns: vec![0; k],
            dialogue_turns: 0,
            last_sys: None,
            repeat_run: 0,
            rng,
            terminated: false,
            success: false,
            transcript: None,
            ctx,
        }
    }

    pub fn enable_transcript(&mut self) {
        self.transcript = Some(Vec::new());
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    pub fn ctx(&self) -> &TaskContext {
        &self.ctx
    }

    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn dialogue_terminated(&self) -> bool {
        self.terminated
    }

    pub fn dialogue_success(&self) -> bool {
        self.success
    }

    pub fn dialogue_turns(&self) -> usize {
        self.dialogue_turns
    }

    pub fn subtask_turns(&self, k: usize) -> usize {
        self.subtask_turns[k]
    }

    pub fn subtask_succeeded(&self, k: usize) -> bool {
        self.status[k] == SubtaskStatus::Succeeded
    }

    /// Mask of unfinished subtasks.
    pub fn legal_subtasks(&self) -> Vec<bool> {
        self.status
            .iter()
            .map(|s| *s == SubtaskStatus::Active)
            .collect()
    }

    /// First unfinished subtask (used by the rule agent's top level).
    pub fn first_active_subtask(&self) -> Option<usize> {
        self.status.iter().position(|s| *s == SubtaskStatus::Active)
    }

    /// Simulated-user turn.
    pub fn step(&mut self, action_index: usize) -> Result<StepResult> {
        let ctx = self.begin_turn(action_index)?;
        let user_act = self.simulated_user_act(&ctx);
        self.finish_turn(ctx, vec![user_act], true)
    }

    /// Externally driven turn (the chat subcommand): the caller supplies the
    /// user acts, which bypass the noise channel.
    pub fn step_external(&mut self, action_index: usize, user_acts: Vec<DialogueAct>) -> Result<StepResult> {
        let (pending, _) = self.begin_external_turn(action_index)?;
        self.finish_external_turn(pending, user_acts)
    }

    /// First half of an external turn: apply the system act and surface its
    /// rendered form so a driver can print it before collecting user input.
    pub fn begin_external_turn(
        &mut self,
        action_index: usize,
    ) -> Result<(PendingTurn, (String, Option<String>, Option<String>))> {
        let ctx = self.begin_turn(action_index)?;
        let rendered = ctx.rendered.clone();
        Ok((PendingTurn(ctx), rendered))
    }

    /// Second half of an external turn.
    pub fn finish_external_turn(
        &mut self,
        pending: PendingTurn,
        user_acts: Vec<DialogueAct>,
    ) -> Result<StepResult> {
        self.finish_turn(pending.0, user_acts, false)
    }

    // -- turn phases -------------------------------------------------------

    fn begin_turn(&mut self, action_index: usize) -> Result<TurnContext> {
        if self.terminated {
            return Err(Error::EpisodeFinished);
        }
        let action = self.ctx.space.actions[action_index];
        let k = action.subtask;
        self.dialogue_turns += 1;
        self.subtask_turns[k] += 1;

        if Some(action) == self.last_sys {
            self.repeat_run += 1;
        } else {
            self.repeat_run = 1;
            self.last_sys = Some(action);
        }
        // The user walks away once the same act has been repeated four times
        // after its first occurrence.
        let patience_bye = self.repeat_run >= 5;

        let rendered = self.apply_system_act(action);
        Ok(TurnContext {
            action,
            patience_bye,
            system_bye: action.kind == SysActKind::Bye,
            rendered,
        })
    }

    /// Execute the system act against the true state; returns the rendered
    /// (intent, slot, value) triple for transcripts.
    fn apply_system_act(&mut self, action: SystemAction) -> (String, Option<String>, Option<String>) {
        let k = action.subtask;
        let intent = action.kind.name().to_string();
        match action.kind {
            SysActKind::RequestSlot | SysActKind::ConfirmSlot | SysActKind::SelectSlot => {
                let slot = action.slot.expect("slot-level act carries a slot");
                let value = match action.kind {
                    SysActKind::RequestSlot => None,
                    // Confirm/select surface the current top-1 hypothesis.
                    _ => {
                        let j = self.ctx.informable[k].iter().position(|&s| s == slot).unwrap();
                        match self.belief.subtasks[k].slots[j].top() {
                            super::belief::SlotTop::Value(v) => {
                                Some(self.ctx.value_name(k, slot, v).to_string())
                            }
                            super::belief::SlotTop::DontCare => {
                                Some(super::DONTCARE_TOKEN.to_string())
                            }
                            super::belief::SlotTop::NotMentioned => None,
                        }
                    }
                };
                (intent, Some(self.ctx.slot_name(k, slot).to_string()), value)
            }
            SysActKind::InformEntity => {
                if self.status[k] == SubtaskStatus::Active {
                    let constraints = self.belief.top1_constraints(&self.ctx, k);
                    let matches = self.ctx.db.query_indices(k, &constraints);
                    if let Some(&entity) = matches.first() {
                        self.offered[k] = Some(entity);
                        if self.goal.entity_consistent(&self.ctx, k, entity) {
                            self.consistent_offered[k] = true;
                        }
                        let name = self.render_entity(k, entity);
                        return (intent, Some("entity".into()), Some(name));
                    }
                }
                (intent, None, None)
            }
            SysActKind::InformRequested => {
                if self.status[k] == SubtaskStatus::Active && self.offered[k].is_some() {
                    let pending: Vec<usize> = self.observed_pending[k].iter().copied().collect();
                    for slot in pending {
                        self.answered[k].insert(slot);
                        self.observed_pending[k].remove(&slot);
                    }
                }
                (intent, None, None)
            }
            SysActKind::Repeat | SysActKind::ReqMore => (intent, None, None),
            SysActKind::Bye => (intent, None, None),
        }
    }

    fn render_entity(&self, k: usize, entity: usize) -> String {
        let spec = &self.ctx.ontology.subtasks[k];
        spec.slots
            .iter()
            .enumerate()
            .map(|(j, s)| format!("{}={}", s.name, s.values[self.ctx.db.subtasks[k].entities[entity][j]]))
            .collect::<Vec<_>>()
            .join(",")
    }

    // -- simulated user agenda ----------------------------------------------

    fn goal_value_token(&self, k: usize, slot: usize) -> String {
        let j = self.ctx.informable[k].iter().position(|&s| s == slot).unwrap();
        match self.goal.subtasks[k].constraints[j] {
            Some(Constraint::Value(v)) => self.ctx.value_name(k, slot, v).to_string(),
            _ => super::DONTCARE_TOKEN.to_string(),
        }
    }

    /// Goal requests not yet answered by the system.
    fn pending_requests(&self, k: usize) -> Vec<usize> {
        self.goal.subtasks[k]
            .requests
            .iter()
            .copied()
            .filter(|slot| !self.answered[k].contains(slot))
            .collect()
    }

    fn constrained_slots(&self, k: usize) -> Vec<usize> {
        self.ctx.informable[k]
            .iter()
            .enumerate()
            .filter_map(|(j, &slot)| {
                matches!(self.goal.subtasks[k].constraints[j], Some(Constraint::Value(_)))
                    .then_some(slot)
            })
            .collect()
    }

    /// First concrete constraint the latest offer violates.
    fn violated_slot(&self, k: usize) -> Option<usize> {
        let entity = self.offered[k]?;
        let row = &self.ctx.db.subtasks[k].entities[entity];
        self.goal
            .db_constraints(&self.ctx, k)
            .into_iter()
            .find(|&(slot, c)| matches!(c, Constraint::Value(v) if row[slot] != v))
            .map(|(slot, _)| slot)
    }

    fn inform_goal_slot(&mut self, k: usize, slot: usize) -> DialogueAct {
        self.told[k].insert(slot);
        DialogueAct::inform(self.ctx.slot_name(k, slot), self.goal_value_token(k, slot))
    }

    /// Announce the next unanswered request, or thank the system when done.
    fn announce_or_thankyou(&mut self, k: usize) -> DialogueAct {
        match self.pending_requests(k).first() {
            Some(&slot) => DialogueAct::request(self.ctx.slot_name(k, slot)),
            None => DialogueAct::new(Intent::Thankyou),
        }
    }

    /// Complain about the current beliefs: re-inform a constrained slot.
    fn complain(&mut self, k: usize) -> DialogueAct {
        if let Some(slot) = self.violated_slot(k) {
            return self.inform_goal_slot(k, slot);
        }
        let constrained = self.constrained_slots(k);
        if constrained.is_empty() {
            return DialogueAct::new(Intent::Null);
        }
        let slot = constrained[self.rng.gen_range(0..constrained.len())];
        self.inform_goal_slot(k, slot)
    }

    fn simulated_user_act(&mut self, turn: &TurnContext) -> DialogueAct {
        let k = turn.action.subtask;
        if turn.patience_bye {
            return DialogueAct::new(Intent::Bye);
        }
        if self.status[k] != SubtaskStatus::Active {
            // Out-of-context act (finished subtask): nothing to say.
            return DialogueAct::new(Intent::Null);
        }
        match turn.action.kind {
            SysActKind::RequestSlot => {
                let slot = turn.action.slot.unwrap();
                self.inform_goal_slot(k, slot)
            }
            SysActKind::ConfirmSlot | SysActKind::SelectSlot => {
                let slot = turn.action.slot.unwrap();
                self.told[k].insert(slot);
                let intent = if turn.action.kind == SysActKind::ConfirmSlot {
                    Intent::ConfirmAnswer
                } else {
                    Intent::SelectAnswer
                };
                DialogueAct {
                    intent,
                    slot: Some(self.ctx.slot_name(k, slot).to_string()),
                    value: Some(self.goal_value_token(k, slot)),
                    confidence: 1.0,
                }
            }
            SysActKind::InformEntity => match self.offered[k] {
                Some(entity) if self.goal.entity_consistent(&self.ctx, k, entity) => {
                    self.announce_or_thankyou(k)
                }
                Some(_) => {
                    let slot = self.violated_slot(k).expect("inconsistent offer violates a slot");
                    self.inform_goal_slot(k, slot)
                }
                None => self.complain(k),
            },
            SysActKind::InformRequested => {
                if self.consistent_offered[k] {
                    self.announce_or_thankyou(k)
                } else if self.offered[k].is_some() {
                    let slot = self.violated_slot(k).expect("inconsistent offer");
                    self.inform_goal_slot(k, slot)
                } else {
                    DialogueAct::new(Intent::Null)
                }
            }
            SysActKind::Repeat => DialogueAct::new(Intent::Null),
            SysActKind::ReqMore => {
                if self.consistent_offered[k] {
                    self.announce_or_thankyou(k)
                } else {
                    // Volunteer an untold constraint before repeating one.
                    let untold: Vec<usize> = self
                        .constrained_slots(k)
                        .into_iter()
                        .filter(|slot| !self.told[k].contains(slot))
                        .collect();
                    match untold.first() {
                        Some(&slot) => self.inform_goal_slot(k, slot),
                        None => self.complain(k),
                    }
                }
            }
            SysActKind::Bye => DialogueAct::new(Intent::Null),
        }
    }

    // -- absorb user response, rewards, termination --------------------------

    fn finish_turn(
        &mut self,
        turn: TurnContext,
        user_acts: Vec<DialogueAct>,
        apply_noise: bool,
    ) -> Result<StepResult> {
        let k = turn.action.subtask;
        let spec = &self.ctx.ontology.subtasks[k];

        let observed: Vec<DialogueAct> = if apply_noise {
            user_acts
                .iter()
                .map(|a| corrupt(a, self.config.ser, spec, &mut self.rng))
                .collect()
        } else {
            user_acts.clone()
        };

        // System-side request bookkeeping comes from the observed channel.
        for act in &observed {
            if act.intent == Intent::Request {
                if let Some(name) = &act.slot {
                    if let Some(j) = spec.slot_index(name) {
                        if spec.slots[j].requestable && !self.answered[k].contains(&j) {
                            self.observed_pending[k].insert(j);
                        }
                    }
                }
            }
        }

        let user_bye = turn.patience_bye || user_acts.iter().any(|a| a.intent == Intent::Bye);

        let track_ctx = TrackContext {
            task: &self.ctx,
            subtask: k,
            entity_offered: self.offered[k].is_some(),
            all_requests_answered: self.observed_pending[k].is_empty(),
            subtask_turns: self.subtask_turns[k],
        };
        self.belief = track(&self.belief, &observed, &track_ctx);

        // Subtask termination.
        let mut subtask_success = false;
        let mut subtask_failed = false;
        if self.status[k] == SubtaskStatus::Active {
            let goal_satisfied = self.consistent_offered[k]
                && self
                    .goal
                    .subtasks[k]
                    .requests
                    .iter()
                    .all(|slot| self.answered[k].contains(slot));
            if goal_satisfied {
                subtask_success = true;
                self.status[k] = SubtaskStatus::Succeeded;
            } else if user_bye || turn.system_bye {
                subtask_failed = true;
            } else if self.subtask_turns[k] >= self.config.max_subtask_turns {
                subtask_failed = true;
            }
            if subtask_failed {
                self.status[k] = SubtaskStatus::Failed;
            }
        }

        // Dialogue termination.
        let all_succeeded = self.status.iter().all(|s| *s == SubtaskStatus::Succeeded);
        let mut dialogue_success = false;
        let mut dialogue_failed = false;
        if all_succeeded {
            dialogue_success = true;
        } else if subtask_failed {
            dialogue_failed = true;
        } else if self.dialogue_turns >= self.config.max_dialogue_turns {
            dialogue_failed = true;
            if self.status[k] == SubtaskStatus::Active {
                self.status[k] = SubtaskStatus::Failed;
                subtask_failed = true;
            }
        }
        self.terminated = dialogue_success || dialogue_failed;
        self.success = dialogue_success;

        let k_total = self.ctx.subtask_count() as f64;
        let intrinsic_reward = self.config.turn_penalty
            + if subtask_success {
                self.config.intrinsic_success_bonus
            } else {
                0.0
            };
        let extrinsic_reward =
            self.config.turn_penalty + if dialogue_success { k_total } else { 0.0 };

        let subtask_terminated = subtask_success || subtask_failed || self.terminated;

        if let Some(log) = &mut self.transcript {
            let (intent, slot, value) = turn.rendered;
            log.push(TranscriptEntry {
                turn: self.dialogue_turns,
                speaker: "sys",
                intent,
                slot,
                value,
                confidence: None,
                r_i: Some(intrinsic_reward),
                r_e: Some(extrinsic_reward),
            });
            for act in &observed {
                log.push(TranscriptEntry {
                    turn: self.dialogue_turns,
                    speaker: "user",
                    intent: act.intent.name().to_string(),
                    slot: act.slot.clone(),
                    value: act.value.clone(),
                    confidence: Some(act.confidence),
                    r_i: None,
                    r_e: None,
                });
            }
        }

        Ok(StepResult {
            belief: self.belief.clone(),
            intrinsic_reward,
            extrinsic_reward,
            subtask_terminated,
            subtask_success,
            dialogue_terminated: self.terminated,
            dialogue_success: self.success,
        })
    }
}

/// Render transcript entries as JSON lines.
pub fn transcript_jsonl(entries: &[TranscriptEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("transcript serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::belief::INDEP_DIM;
    use crate::env::session_rng;
    use crate::ontology::{generate_databases, preset};

    fn toy_ctx() -> Arc<TaskContext> {
        let ontology = preset("toyCR+toySFR").unwrap();
        let db = generate_databases(&ontology, 7).unwrap();
        Arc::new(TaskContext::new(ontology, db, &EnvConfig::default()))
    }

    #[test]
    fn reset_produces_ignorance_belief_with_correct_layout() {
        let ctx = toy_ctx();
        let (belief, session) = reset(EnvConfig::default(), ctx.clone(), session_rng(0, 0));
        for sub in &belief.subtasks {
            for dist in &sub.slots {
                assert_eq!(dist.not_mentioned, 1.0);
                assert!(dist.probs.iter().all(|&p| p == 0.0));
            }
        }
        let v = belief.vector(&ctx.layout);
        // Sum over subtasks of n_k * (M + 2) + indep block.
        let expected: usize = ctx
            .layout
            .slot_counts
            .iter()
            .map(|n| n * (ctx.layout.top_m + 2) + INDEP_DIM)
            .sum();
        assert_eq!(v.len(), expected);
        assert!(!session.dialogue_terminated());
    }

    #[test]
    fn reset_same_seed_same_goal() {
        let ctx = toy_ctx();
        let (_, a) = reset(EnvConfig::default(), ctx.clone(), session_rng(9, 4));
        let (_, b) = reset(EnvConfig::default(), ctx, session_rng(9, 4));
        assert_eq!(a.goal(), b.goal());
    }

    #[test]
    fn ordinary_turn_rewards_are_the_turn_penalty() {
        let ctx = toy_ctx();
        let (_, mut session) = reset(EnvConfig::default(), ctx.clone(), session_rng(1, 0));
        // request(food) of subtask 0: action 0.
        let r = session.step(0).unwrap();
        assert_eq!(r.intrinsic_reward, -0.05);
        assert_eq!(r.extrinsic_reward, -0.05);
        assert!(!r.subtask_terminated);
    }

    #[test]
    fn step_after_termination_is_an_error() {
        let ctx = toy_ctx();
        let (_, mut session) = reset(EnvConfig::default(), ctx.clone(), session_rng(1, 1));
        // Premature bye fails the subtask and therefore the dialogue.
        let bye = ctx.space.block(0).end - 1;
        let r = session.step(bye).unwrap();
        assert!(r.dialogue_terminated);
        assert!(!r.dialogue_success);
        assert_eq!(r.extrinsic_reward, -0.05);
        assert!(matches!(session.step(0), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn legal_subtasks_tracks_completion() {
        let ctx = toy_ctx();
        let (_, session) = reset(EnvConfig::default(), ctx, session_rng(1, 2));
        assert_eq!(session.legal_subtasks(), vec![true, true]);
    }

    #[test]
    fn patience_bye_after_five_identical_acts() {
        let ctx = toy_ctx();
        let (_, mut session) = reset(EnvConfig::default(), ctx, session_rng(1, 3));
        for i in 0..4 {
            let r = session.step(0).unwrap();
            assert!(!r.dialogue_terminated, "turn {i}");
        }
        let r = session.step(0).unwrap();
        assert!(r.dialogue_terminated);
        assert!(!r.dialogue_success);
    }

    #[test]
    fn determinism_under_fixed_seed_and_actions() {
        let ctx = toy_ctx();
        let mut cfg = EnvConfig::default();
        cfg.ser = 0.3;
        let run = |ctx: &Arc<TaskContext>| {
            let (_, mut s) = reset(cfg.clone(), ctx.clone(), session_rng(5, 7));
            let mut rewards = Vec::new();
            for a in [0usize, 3, 6, 9, 0, 3] {
                if s.dialogue_terminated() {
                    break;
                }
                let r = s.step(a).unwrap();
                rewards.push((r.intrinsic_reward, r.belief.vector(&ctx.layout)));
            }
            rewards
        };
        assert_eq!(run(&ctx), run(&ctx));
    }

    #[test]
    fn track_accumulate_then_renormalize_examples() {
        let ctx = toy_ctx();
        let belief = BeliefState::ignorance(&ctx);
        let tctx = TrackContext {
            task: &ctx,
            subtask: 0,
            entity_offered: false,
            all_requests_answered: true,
            subtask_turns: 1,
        };
        // Single inform with confidence 1.0 onto ignorance: mass 1 vs
        // not-mentioned 1 normalizes to 0.5.
        let mut act = DialogueAct::inform("area", "v1");
        act.confidence = 1.0;
        let next = track(&belief, &[act], &tctx);
        let dist = &next.subtasks[0].slots[1];
        assert!((dist.probs[1] - 0.5).abs() < 1e-12);
        assert!((dist.not_mentioned - 0.5).abs() < 1e-12);

        // Two conflicting informs with equal confidence occupy top-2 equally.
        let mut a = DialogueAct::inform("area", "v0");
        a.confidence = 0.8;
        let mut b = DialogueAct::inform("area", "v2");
        b.confidence = 0.8;
        let next = track(&belief, &[a, b], &tctx);
        let dist = &next.subtasks[0].slots[1];
        let top = dist.top_values(2);
        assert!((top[0].1 - top[1].1).abs() < 1e-12);
        assert_eq!((top[0].0, top[1].0), (0, 2));

        // Empty observation list changes only the turn-counter features.
        let next = track(&belief, &[], &tctx);
        assert_eq!(next.subtasks[0].slots, belief.subtasks[0].slots);
        assert_eq!(next.subtasks[0].turns, 1);
    }

    #[test]
    fn slot_blocks_stay_normalized_under_random_updates() {
        let ctx = toy_ctx();
        let mut belief = BeliefState::ignorance(&ctx);
        let mut rng = session_rng(11, 0);
        for turn in 0..200 {
            let slot_names = ["food", "area", "pricerange"];
            let name = slot_names[rng.gen_range(0..3)];
            let j = ctx.ontology.subtasks[0].slot_index(name).unwrap();
            let card = ctx.ontology.subtasks[0].slots[j].values.len();
            let mut act =
                DialogueAct::inform(name, format!("v{}", rng.gen_range(0..card)));
            act.confidence = rng.gen_range(0.1..1.0);
            let tctx = TrackContext {
                task: &ctx,
                subtask: 0,
                entity_offered: false,
                all_requests_answered: true,
                subtask_turns: turn,
            };
            belief = track(&belief, &[act], &tctx);
            for dist in &belief.subtasks[0].slots {
                let total =
                    dist.probs.iter().sum::<f64>() + dist.dontcare + dist.not_mentioned;
                assert!((total - 1.0).abs() < 1e-9);
                assert!(dist.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
