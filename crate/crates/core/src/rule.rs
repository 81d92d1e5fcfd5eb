//! Hand-crafted upper-bound agent.
//!
//! Fills slots until the tracker is confident, offers an entity, answers the
//! user's requests, and closes. It reads the true unfinished-subtask mask,
//! so it is an upper bound rather than a fair baseline; it also warms up the
//! learners' replay buffers.

use crate::env::{Intent, Session, SysActKind, SystemAction};
use crate::hrl::Actor;
use crate::{Error, Result};

/// Top-1 mass below which a slot is still worth asking about.
const CONFIDENCE_THRESHOLD: f64 = 0.6;
/// Ask about the same slot at most this many times.
const MAX_REQUESTS_PER_SLOT: usize = 2;

/// Per-dialogue bookkeeping of the rule agent.
#[derive(Debug, Clone, Default)]
pub struct RuleState {
    /// requests_issued[k][j]: how often slot j of subtask k was requested.
    requests_issued: Vec<Vec<usize>>,
}

impl RuleState {
    pub fn new(slot_counts: &[usize]) -> RuleState {
        RuleState {
            requests_issued: slot_counts.iter().map(|&n| vec![0; n]).collect(),
        }
    }
}

/// Deterministic top-level rule: lowest-index unfinished subtask.
pub fn rule_top(session: &Session) -> Result<usize> {
    session
        .first_active_subtask()
        .ok_or(Error::NoSubtaskAvailable)
}

/// Deterministic low-level rule, in priority order:
/// 1. request the first slot with top-1 mass below the threshold (at most
///    twice per slot);
/// 2. offer an entity once all slots are resolved and none was offered;
/// 3. answer pending user requests;
/// 4. close when the user signaled completion;
/// 5. otherwise ask whether anything else is needed.
pub fn rule_low(session: &Session, subtask: usize, state: &mut RuleState) -> SystemAction {
    let belief = &session.belief().subtasks[subtask];
    let ctx = session.ctx();
    for (j, dist) in belief.slots.iter().enumerate() {
        let confident = dist
            .top_values(1)
            .first()
            .map_or(false, |&(_, p)| p >= CONFIDENCE_THRESHOLD)
            || dist.dontcare >= CONFIDENCE_THRESHOLD;
        if !confident && state.requests_issued[subtask][j] < MAX_REQUESTS_PER_SLOT {
            state.requests_issued[subtask][j] += 1;
            return SystemAction {
                subtask,
                kind: SysActKind::RequestSlot,
                slot: Some(ctx.informable[subtask][j]),
            };
        }
    }
    if !belief.entity_offered {
        return SystemAction {
            subtask,
            kind: SysActKind::InformEntity,
            slot: None,
        };
    }
    if !belief.all_requests_answered {
        return SystemAction {
            subtask,
            kind: SysActKind::InformRequested,
            slot: None,
        };
    }
    if belief.last_user_intent == Some(Intent::Thankyou) {
        return SystemAction {
            subtask,
            kind: SysActKind::Bye,
            slot: None,
        };
    }
    SystemAction {
        subtask,
        kind: SysActKind::ReqMore,
        slot: None,
    }
}

/// [`Actor`] adapter so the trainer can warm up from the rule agent.
pub struct RuleActor {
    pub state: RuleState,
}

impl RuleActor {
    pub fn new(session: &Session) -> RuleActor {
        RuleActor {
            state: RuleState::new(&session.ctx().layout.slot_counts),
        }
    }
}

impl Actor<Session> for RuleActor {
    fn pick_subtask(&mut self, env: &Session, _q: &[f64], _mask: &[bool]) -> Result<usize> {
        rule_top(env)
    }

    fn pick_action(&mut self, env: &Session, _q: &[f64], subtask: usize) -> Result<usize> {
        let action = rule_low(env, subtask, &mut self.state);
        let block = env.ctx().space.block(subtask);
        for idx in block {
            if env.ctx().space.actions[idx] == action {
                return Ok(idx);
            }
        }
        unreachable!("rule actions exist in the action space");
    }
}

/// Run one full rule-agent dialogue; returns (success, turns, Σr_e, Σr_i).
pub fn rule_dialogue(session: &mut Session) -> Result<(bool, usize, f64, f64)> {
    let mut state = RuleState::new(&session.ctx().layout.slot_counts);
    let mut turns = 0;
    let mut ret_e = 0.0;
    let mut ret_i = 0.0;
    while !session.dialogue_terminated() {
        let k = rule_top(session)?;
        let action = rule_low(session, k, &mut state);
        let idx = session
            .ctx()
            .space
            .block(k)
            .find(|&i| session.ctx().space.actions[i] == action)
            .expect("rule action in space");
        let out = session.step(idx)?;
        turns += 1;
        ret_e += out.extrinsic_reward;
        ret_i += out.intrinsic_reward;
    }
    Ok((session.dialogue_success(), turns, ret_e, ret_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, session_rng, EnvConfig, TaskContext};
    use crate::ontology::{generate_databases, preset};
    use std::sync::Arc;

    fn ctx(ser: f64) -> (EnvConfig, Arc<TaskContext>) {
        let mut cfg = EnvConfig::default();
        cfg.ser = ser;
        let ontology = preset("toyCR+toySFR").unwrap();
        let db = generate_databases(&ontology, 7).unwrap();
        (cfg.clone(), Arc::new(TaskContext::new(ontology, db, &cfg)))
    }

    #[test]
    fn fresh_dialogue_requests_the_first_slot() {
        let (cfg, ctx) = ctx(0.0);
        let (_, session) = reset(cfg, ctx.clone(), session_rng(1, 0));
        let mut state = RuleState::new(&ctx.layout.slot_counts);
        assert_eq!(rule_top(&session).unwrap(), 0);
        let act = rule_low(&session, 0, &mut state);
        assert_eq!(act.kind, SysActKind::RequestSlot);
        assert_eq!(act.slot, Some(ctx.informable[0][0]));
    }

    #[test]
    fn clean_environment_succeeds_on_100_seeds() {
        let (cfg, ctx) = ctx(0.0);
        for seed in 0..100 {
            let (_, mut session) = reset(cfg.clone(), ctx.clone(), session_rng(42, seed));
            let (success, turns, _, _) = rule_dialogue(&mut session).unwrap();
            assert!(success, "seed {seed} failed after {turns} turns");
            assert!(turns <= 30);
        }
    }

    #[test]
    fn clean_environment_succeeds_on_every_toy_composite() {
        use crate::ontology::preset;
        for name in ["toyCR+toyLAP", "toySFR+toyLAP"] {
            let cfg = EnvConfig::default();
            let ontology = preset(name).unwrap();
            let db = crate::ontology::generate_databases(&ontology, 7).unwrap();
            let ctx = Arc::new(TaskContext::new(ontology, db, &cfg));
            for seed in 0..50 {
                let (_, mut session) = reset(cfg.clone(), ctx.clone(), session_rng(8, seed));
                let (success, turns, _, _) = rule_dialogue(&mut session).unwrap();
                assert!(success, "{name} seed {seed} failed after {turns} turns");
            }
        }
    }

    #[test]
    fn terminal_turn_rewards_follow_the_bonus_plus_penalty_rule() {
        let (cfg, ctx) = ctx(0.0);
        let (_, mut session) = reset(cfg, ctx.clone(), session_rng(21, 0));
        let mut state = RuleState::new(&ctx.layout.slot_counts);
        let mut first_subtask_seen = false;
        while !session.dialogue_terminated() {
            let k = rule_top(&session).unwrap();
            let action = rule_low(&session, k, &mut state);
            let idx = session
                .ctx()
                .space
                .block(k)
                .find(|&i| session.ctx().space.actions[i] == action)
                .unwrap();
            let out = session.step(idx).unwrap();
            if out.subtask_success && !out.dialogue_success {
                // First of two subtasks: intrinsic bonus only.
                assert_eq!(out.intrinsic_reward, 0.95);
                assert_eq!(out.extrinsic_reward, -0.05);
                first_subtask_seen = true;
                assert_eq!(Session::legal_subtasks(&session), vec![false, true]);
            } else if out.dialogue_success {
                // Final subtask of K = 2: both bonuses, penalty still applies.
                assert_eq!(out.intrinsic_reward, 0.95);
                assert_eq!(out.extrinsic_reward, 1.95);
            } else {
                assert_eq!(out.intrinsic_reward, -0.05);
                assert_eq!(out.extrinsic_reward, -0.05);
            }
        }
        assert!(first_subtask_seen);
        assert!(session.dialogue_success());
    }

    #[test]
    fn rule_agent_is_deterministic() {
        let (cfg, ctx) = ctx(0.0);
        let run = |seed| {
            let (_, mut s) = reset(cfg.clone(), ctx.clone(), session_rng(3, seed));
            rule_dialogue(&mut s).unwrap()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn noise_strictly_degrades_the_fixed_rules() {
        let run_rate = |ser: f64| {
            let (cfg, ctx) = ctx(ser);
            let mut ok = 0;
            for seed in 0..200 {
                let (_, mut s) = reset(cfg.clone(), ctx.clone(), session_rng(11, seed));
                if rule_dialogue(&mut s).unwrap().0 {
                    ok += 1;
                }
            }
            ok as f64 / 200.0
        };
        let clean = run_rate(0.0);
        let noisy = run_rate(0.30);
        assert_eq!(clean, 1.0);
        assert!(noisy < clean, "noisy rate {noisy}");
    }

    #[test]
    fn never_picks_a_finished_subtask() {
        let (cfg, ctx) = ctx(0.0);
        let (_, mut session) = reset(cfg, ctx.clone(), session_rng(9, 2));
        let mut state = RuleState::new(&ctx.layout.slot_counts);
        let mut finished_first = false;
        while !session.dialogue_terminated() {
            let k = rule_top(&session).unwrap();
            if finished_first {
                assert_eq!(k, 1);
            }
            let action = rule_low(&session, k, &mut state);
            let idx = session
                .ctx()
                .space
                .block(k)
                .find(|&i| session.ctx().space.actions[i] == action)
                .unwrap();
            let out = session.step(idx).unwrap();
            if out.subtask_success && k == 0 {
                finished_first = true;
            }
        }
        assert!(session.dialogue_success());
    }
}
