//! Two-level Q-learning in the options framework.
//!
//! The top level picks a subtask from the belief; the low level picks
//! primitive actions (masked to the chosen subtask's block) until the
//! subtask terminates. Both levels learn off-policy from replay buffers with
//! hard-synced target networks. The top level bootstraps across subtask
//! boundaries with γ^T; the low level bootstraps turn by turn on intrinsic
//! rewards.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comnet::PolicyNet;
use crate::env::Session;
use crate::rng::stream_rng;
use crate::tensor::{AdamConfig, ParamRegistry};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Transitions and replay
// ---------------------------------------------------------------------------

/// One low-level turn.
#[derive(Debug, Clone)]
pub struct LowTransition {
    pub belief: Box<[f64]>,
    pub subtask: usize,
    pub action: usize,
    pub r_i: f64,
    pub next_belief: Box<[f64]>,
    pub subtask_done: bool,
}

/// One completed subtask from the top level's point of view.
#[derive(Debug, Clone)]
pub struct TopTransition {
    pub belief_start: Box<[f64]>,
    pub subtask: usize,
    /// Discounted extrinsic return accumulated while the subtask ran.
    pub ret: f64,
    /// Subtask duration in turns.
    pub duration: u32,
    pub belief_end: Box<[f64]>,
    pub dialogue_done: bool,
    /// Legal-subtask mask at the end state.
    pub mask_next: Vec<bool>,
}

/// Bounded FIFO with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            next: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &T {
        &self.items[index]
    }

    /// Uniform sample (with replacement) of `n` item indices.
    pub fn sample_indices(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub adam: AdamConfig,
    pub batch_low: usize,
    pub batch_top: usize,
    pub capacity_low: usize,
    pub capacity_top: usize,
    /// Hard target sync every N low/top updates.
    pub sync_low: usize,
    pub sync_top: usize,
    /// ε decays linearly from eps_start to 0 over this many dialogues.
    pub eps_start: f64,
    pub eps_decay_dialogues: u64,
    /// Rule-agent dialogues recorded before any gradient step.
    pub warmup_dialogues: u64,
    /// One low-level update every N environment turns.
    pub low_update_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            // lr 1e-3 destabilizes these small Q-networks late in training
            // (periodic success-rate collapses); 3e-4 trains just as fast
            // here and keeps the final policies steady.
            adam: AdamConfig {
                lr: 3e-4,
                ..AdamConfig::default()
            },
            batch_low: 64,
            batch_top: 16,
            capacity_low: 50_000,
            capacity_top: 5_000,
            sync_low: 100,
            sync_top: 20,
            eps_start: 0.3,
            eps_decay_dialogues: 4_000,
            warmup_dialogues: 200,
            low_update_every: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::Config(format!("gamma {} outside (0,1]", self.gamma)));
        }
        if self.batch_low == 0 || self.batch_top == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.low_update_every == 0 {
            return Err(Error::Config("low_update_every must be positive".into()));
        }
        Ok(())
    }

    /// Linear ε schedule over training dialogues.
    pub fn epsilon(&self, dialogues: u64) -> f64 {
        if dialogues >= self.eps_decay_dialogues {
            0.0
        } else {
            self.eps_start * (1.0 - dialogues as f64 / self.eps_decay_dialogues as f64)
        }
    }
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

fn masked_argmax(q: &[f64], legal: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in legal {
        match best {
            Some((_, bq)) if q[i] <= bq => {}
            _ => best = Some((i, q[i])),
        }
    }
    best.map(|(i, _)| i)
}

/// ε-greedy subtask choice over the legal mask; ties break to the lowest
/// index.
pub fn select_subtask(
    q_top: &[f64],
    mask: &[bool],
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let legal: Vec<usize> = (0..q_top.len()).filter(|&k| mask[k]).collect();
    if legal.is_empty() {
        return Err(Error::NoSubtaskAvailable);
    }
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return Ok(legal[rng.gen_range(0..legal.len())]);
    }
    Ok(masked_argmax(q_top, legal.into_iter()).unwrap())
}

/// ε-greedy primitive choice restricted to the current subtask's block.
pub fn select_action(q_low: &[f64], block: Range<usize>, eps: f64, rng: &mut ChaCha8Rng) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return rng.gen_range(block.start..block.end);
    }
    masked_argmax(q_low, block).expect("non-empty action block")
}

/// Fold a finished subtask's extrinsic rewards into a [`TopTransition`]
/// (Horner evaluation of the discounted sum).
pub fn close_subtask(
    rewards_e: &[f64],
    gamma: f64,
    belief_start: Box<[f64]>,
    subtask: usize,
    belief_end: Box<[f64]>,
    dialogue_done: bool,
    mask_next: Vec<bool>,
) -> TopTransition {
    let mut ret = 0.0;
    for &r in rewards_e.iter().rev() {
        ret = r + gamma * ret;
    }
    TopTransition {
        belief_start,
        subtask,
        ret,
        duration: rewards_e.len() as u32,
        belief_end,
        dialogue_done,
        mask_next,
    }
}

// ---------------------------------------------------------------------------
// Q updates
// ---------------------------------------------------------------------------

/// One batched top-level update:
/// y = R + (done ? 0 : γ^T · max over legal g' of Q_target(b_T)), MSE on the
/// chosen subtask's output, one Adam step. Returns the batch loss.
pub fn top_update(
    net: &PolicyNet,
    online: &mut ParamRegistry,
    target: &ParamRegistry,
    batch: &[&TopTransition],
    gamma: f64,
    adam: &AdamConfig,
) -> Result<f64> {
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for tr in batch {
        let y = if tr.dialogue_done {
            tr.ret
        } else {
            let (q_next, _) = net.forward_top(target, &tr.belief_end)?;
            let legal = (0..q_next.len()).filter(|&k| tr.mask_next[k]);
            let bootstrap = masked_argmax(&q_next, legal).map(|k| q_next[k]).unwrap_or(0.0);
            tr.ret + gamma.powi(tr.duration as i32) * bootstrap
        };
        let (q, cache) = net.forward_top(online, &tr.belief_start)?;
        let err = q[tr.subtask] - y;
        loss += err * err;
        let mut upstream = vec![0.0; q.len()];
        upstream[tr.subtask] = 2.0 * err * inv;
        net.backward_top(online, &cache, &upstream);
    }
    online.adam_step_all(adam);
    Ok(loss * inv)
}

/// One batched low-level update:
/// y = r_i + (subtask done ? 0 : γ · max over the subtask's block of
/// Q_target(b_{t+1}, g)), MSE on the taken action, one Adam step.
pub fn low_update(
    net: &PolicyNet,
    online: &mut ParamRegistry,
    target: &ParamRegistry,
    batch: &[&LowTransition],
    blocks: &[Range<usize>],
    gamma: f64,
    adam: &AdamConfig,
) -> Result<f64> {
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for tr in batch {
        let y = if tr.subtask_done {
            tr.r_i
        } else {
            let (q_next, _) = net.forward_low(target, &tr.next_belief, tr.subtask)?;
            let best = masked_argmax(&q_next, blocks[tr.subtask].clone()).unwrap();
            tr.r_i + gamma * q_next[best]
        };
        let (q, cache) = net.forward_low(online, &tr.belief, tr.subtask)?;
        let err = q[tr.action] - y;
        loss += err * err;
        let mut upstream = vec![0.0; q.len()];
        upstream[tr.action] = 2.0 * err * inv;
        net.backward_low(online, &cache, &upstream);
    }
    online.adam_step_all(adam);
    Ok(loss * inv)
}

/// Hard copy of online parameters into the target registry.
pub fn sync_targets(online: &ParamRegistry, target: &mut ParamRegistry) {
    target.copy_values_from(online);
}

// ---------------------------------------------------------------------------
// Environment interface
// ---------------------------------------------------------------------------

/// Per-turn outcome the trainer needs.
#[derive(Debug, Clone, Copy)]
pub struct HrlStep {
    pub r_i: f64,
    pub r_e: f64,
    pub subtask_done: bool,
    pub subtask_success: bool,
    pub dialogue_done: bool,
    pub dialogue_success: bool,
}

/// Anything the two-level trainer can drive: the dialogue simulator, or toy
/// MDPs in tests.
pub trait HrlEnv {
    fn subtask_count(&self) -> usize;
    /// Primitive-action index range per subtask.
    fn action_blocks(&self) -> Vec<Range<usize>>;
    fn belief_vec(&self) -> Vec<f64>;
    fn legal_subtasks(&self) -> Vec<bool>;
    fn dialogue_terminated(&self) -> bool;
    fn dialogue_success(&self) -> bool;
    fn step(&mut self, action: usize) -> Result<HrlStep>;
}

impl HrlEnv for Session {
    fn subtask_count(&self) -> usize {
        self.ctx().subtask_count()
    }

    fn action_blocks(&self) -> Vec<Range<usize>> {
        self.ctx().space.blocks().to_vec()
    }

    fn belief_vec(&self) -> Vec<f64> {
        self.belief().vector(&self.ctx().layout)
    }

    fn legal_subtasks(&self) -> Vec<bool> {
        Session::legal_subtasks(self)
    }

    fn dialogue_terminated(&self) -> bool {
        Session::dialogue_terminated(self)
    }

    fn dialogue_success(&self) -> bool {
        Session::dialogue_success(self)
    }

    fn step(&mut self, action: usize) -> Result<HrlStep> {
        let out = Session::step(self, action)?;
        Ok(HrlStep {
            r_i: out.intrinsic_reward,
            r_e: out.extrinsic_reward,
            subtask_done: out.subtask_terminated,
            subtask_success: out.subtask_success,
            dialogue_done: out.dialogue_terminated,
            dialogue_success: out.dialogue_success,
        })
    }
}

/// Chooses subtasks and actions during a driven dialogue.
pub trait Actor<E: HrlEnv + ?Sized> {
    fn pick_subtask(&mut self, env: &E, q_top: &[f64], mask: &[bool]) -> Result<usize>;
    fn pick_action(&mut self, env: &E, q_low: &[f64], subtask: usize) -> Result<usize>;
}

/// ε-greedy over the policy's Q-values (ε = 0 is the greedy evaluator).
pub struct EpsGreedy {
    pub eps: f64,
    pub rng: ChaCha8Rng,
}

impl<E: HrlEnv + ?Sized> Actor<E> for EpsGreedy {
    fn pick_subtask(&mut self, _env: &E, q_top: &[f64], mask: &[bool]) -> Result<usize> {
        select_subtask(q_top, mask, self.eps, &mut self.rng)
    }

    fn pick_action(&mut self, env: &E, q_low: &[f64], subtask: usize) -> Result<usize> {
        Ok(select_action(
            q_low,
            env.action_blocks()[subtask].clone(),
            self.eps,
            &mut self.rng,
        ))
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// Per-dialogue bookkeeping returned by the drivers.
#[derive(Debug, Clone, Default)]
pub struct DialogueStats {
    pub success: bool,
    pub turns: usize,
    /// Undiscounted reward sums (γ = 1 bookkeeping).
    pub return_e: f64,
    pub return_i: f64,
    pub low_losses: Vec<f64>,
    pub top_losses: Vec<f64>,
}

/// Owns the online/target registries and replay buffers for one policy.
#[derive(Debug)]
pub struct Trainer {
    pub net: PolicyNet,
    pub cfg: TrainConfig,
    pub reg_top: ParamRegistry,
    pub reg_low: ParamRegistry,
    pub tgt_top: ParamRegistry,
    pub tgt_low: ParamRegistry,
    pub buf_low: ReplayBuffer<LowTransition>,
    pub buf_top: ReplayBuffer<TopTransition>,
    /// Action-block layout shared by the environment and the low-level net.
    pub blocks: Vec<Range<usize>>,
    pub dialogues: u64,
    pub low_updates: u64,
    pub top_updates: u64,
    turn_counter: u64,
    seed: u64,
}

impl Trainer {
    pub fn new(net: PolicyNet, blocks: Vec<Range<usize>>, cfg: TrainConfig, seed: u64) -> Trainer {
        let (reg_top, reg_low) = net.init_registries(seed);
        let tgt_top = reg_top.clone();
        let tgt_low = reg_low.clone();
        let buf_low = ReplayBuffer::new(cfg.capacity_low);
        let buf_top = ReplayBuffer::new(cfg.capacity_top);
        Trainer {
            net,
            cfg,
            reg_top,
            reg_low,
            tgt_top,
            tgt_low,
            buf_low,
            buf_top,
            blocks,
            dialogues: 0,
            low_updates: 0,
            top_updates: 0,
            turn_counter: 0,
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon(self.dialogues)
    }

    /// Reset optimizer state, target nets and counters (after transfer).
    pub fn reset_training_state(&mut self) {
        for (_, p) in self.reg_top.iter_mut() {
            p.reset_optimizer_state();
        }
        for (_, p) in self.reg_low.iter_mut() {
            p.reset_optimizer_state();
        }
        self.tgt_top.copy_values_from(&self.reg_top);
        self.tgt_low.copy_values_from(&self.reg_low);
        self.dialogues = 0;
        self.low_updates = 0;
        self.top_updates = 0;
        self.turn_counter = 0;
    }

    fn low_update_step(&mut self) -> Result<f64> {
        let mut rng = stream_rng(self.seed, "replay-low", self.low_updates);
        let idx = self.buf_low.sample_indices(self.cfg.batch_low, &mut rng);
        let batch: Vec<&LowTransition> = idx.iter().map(|&i| self.buf_low.get(i)).collect();
        let loss = low_update(
            &self.net,
            &mut self.reg_low,
            &self.tgt_low,
            &batch,
            &self.blocks,
            self.cfg.gamma,
            &self.cfg.adam,
        )?;
        self.low_updates += 1;
        if self.low_updates % self.cfg.sync_low as u64 == 0 {
            sync_targets(&self.reg_low, &mut self.tgt_low);
        }
        Ok(loss)
    }

    fn top_update_step(&mut self) -> Result<f64> {
        let mut rng = stream_rng(self.seed, "replay-top", self.top_updates);
        let idx = self.buf_top.sample_indices(self.cfg.batch_top, &mut rng);
        let batch: Vec<&TopTransition> = idx.iter().map(|&i| self.buf_top.get(i)).collect();
        let loss = top_update(
            &self.net,
            &mut self.reg_top,
            &self.tgt_top,
            &batch,
            self.cfg.gamma,
            &self.cfg.adam,
        )?;
        self.top_updates += 1;
        if self.top_updates % self.cfg.sync_top as u64 == 0 {
            sync_targets(&self.reg_top, &mut self.tgt_top);
        }
        Ok(loss)
    }

    /// Drive one dialogue. `learn` enables gradient updates, `record`
    /// enables transition recording (warm-up records without learning).
    pub fn run_dialogue<E: HrlEnv>(
        &mut self,
        env: &mut E,
        actor: &mut dyn Actor<E>,
        learn: bool,
        record: bool,
    ) -> Result<DialogueStats> {
        let mut stats = DialogueStats::default();
        while !env.dialogue_terminated() {
            let belief = env.belief_vec();
            let mask = env.legal_subtasks();
            let (q_top, _) = self.net.forward_top(&self.reg_top, &belief)?;
            let subtask = actor.pick_subtask(env, &q_top, &mask)?;
            let belief_start: Box<[f64]> = belief.into_boxed_slice();
            let mut rewards_e = Vec::new();
            loop {
                let bv = env.belief_vec();
                let (q_low, _) = self.net.forward_low(&self.reg_low, &bv, subtask)?;
                let action = actor.pick_action(env, &q_low, subtask)?;
                let out = env.step(action)?;
                let next = env.belief_vec();
                rewards_e.push(out.r_e);
                stats.turns += 1;
                stats.return_e += out.r_e;
                stats.return_i += out.r_i;
                if record {
                    self.buf_low.push(LowTransition {
                        belief: bv.into_boxed_slice(),
                        subtask,
                        action,
                        r_i: out.r_i,
                        next_belief: next.into_boxed_slice(),
                        subtask_done: out.subtask_done,
                    });
                }
                self.turn_counter += 1;
                if learn
                    && self.turn_counter % self.cfg.low_update_every == 0
                    && self.buf_low.len() >= self.cfg.batch_low
                {
                    let loss = self.low_update_step()?;
                    stats.low_losses.push(loss);
                }
                if out.subtask_done {
                    break;
                }
            }
            let belief_end = env.belief_vec().into_boxed_slice();
            let mask_next = env.legal_subtasks();
            let transition = close_subtask(
                &rewards_e,
                self.cfg.gamma,
                belief_start,
                subtask,
                belief_end,
                env.dialogue_terminated(),
                mask_next,
            );
            if record {
                self.buf_top.push(transition);
            }
            if learn && self.buf_top.len() >= self.cfg.batch_top {
                let loss = self.top_update_step()?;
                stats.top_losses.push(loss);
            }
        }
        stats.success = env.dialogue_success();
        self.dialogues += 1;
        Ok(stats)
    }
}

/// Evaluate one dialogue greedily (ε = 0) against read-only parameters.
pub fn greedy_dialogue<E: HrlEnv>(
    net: &PolicyNet,
    reg_top: &ParamRegistry,
    reg_low: &ParamRegistry,
    env: &mut E,
) -> Result<DialogueStats> {
    let mut stats = DialogueStats::default();
    let blocks = env.action_blocks();
    while !env.dialogue_terminated() {
        let belief = env.belief_vec();
        let mask = env.legal_subtasks();
        let (q_top, _) = net.forward_top(reg_top, &belief)?;
        let legal: Vec<usize> = (0..q_top.len()).filter(|&k| mask[k]).collect();
        if legal.is_empty() {
            return Err(Error::NoSubtaskAvailable);
        }
        let subtask = masked_argmax(&q_top, legal.into_iter()).unwrap();
        loop {
            let bv = env.belief_vec();
            let (q_low, _) = net.forward_low(reg_low, &bv, subtask)?;
            let action = masked_argmax(&q_low, blocks[subtask].clone()).unwrap();
            let out = env.step(action)?;
            stats.turns += 1;
            stats.return_e += out.r_e;
            stats.return_i += out.r_i;
            if out.subtask_done {
                break;
            }
        }
    }
    stats.success = env.dialogue_success();
    Ok(stats)
}

// ---------------------------------------------------------------------------
