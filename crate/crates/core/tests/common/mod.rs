//! Shared test fixtures: a tiny deterministic hierarchical MDP with the same
//! reward conventions as the dialogue environment, plus an exhaustive-search
//! oracle over its action sequences.

use comdial_core::hrl::{HrlEnv, HrlStep};
use comdial_core::Result;

/// Two subtasks; each holds a counter in {0, 1, 2}. Per subtask the actions
/// are `work` (advance the counter) and `submit` (terminate the subtask,
/// succeeding iff the counter reached 2). Belief features: one 3-way one-hot
/// per subtask. Rewards mirror the dialogue simulator: −0.05 per turn, +1
/// intrinsic on subtask success, +K extrinsic on dialogue success.
#[derive(Debug, Clone)]
pub struct ToyHierEnv {
    counters: [usize; 2],
    done: [Option<bool>; 2], // None = active, Some(success)
    turns: usize,
    failed: bool,
}

pub const TOY_MAX_TURNS: usize = 10;

impl ToyHierEnv {
    pub fn new() -> Self {
        ToyHierEnv {
            counters: [0, 0],
            done: [None, None],
            turns: 0,
            failed: false,
        }
    }

    fn all_succeeded(&self) -> bool {
        self.done.iter().all(|d| *d == Some(true))
    }
}

impl HrlEnv for ToyHierEnv {
    fn subtask_count(&self) -> usize {
        2
    }

    fn action_blocks(&self) -> Vec<std::ops::Range<usize>> {
        vec![0..2, 2..4]
    }

    fn belief_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; 6];
        v[self.counters[0].min(2)] = 1.0;
        v[3 + self.counters[1].min(2)] = 1.0;
        v
    }

    fn legal_subtasks(&self) -> Vec<bool> {
        self.done.iter().map(|d| d.is_none()).collect()
    }

    fn dialogue_terminated(&self) -> bool {
        self.failed || self.all_succeeded() || self.turns >= TOY_MAX_TURNS
    }

    fn dialogue_success(&self) -> bool {
        self.all_succeeded() && !self.failed
    }

    fn step(&mut self, action: usize) -> Result<HrlStep> {
        let subtask = action / 2;
        let work = action % 2 == 0;
        self.turns += 1;
        let mut r_i = -0.05;
        let mut r_e = -0.05;
        let mut subtask_done = false;
        let mut subtask_success = false;
        if self.done[subtask].is_none() {
            if work {
                self.counters[subtask] = (self.counters[subtask] + 1).min(2);
            } else {
                subtask_done = true;
                subtask_success = self.counters[subtask] == 2;
                self.done[subtask] = Some(subtask_success);
                if subtask_success {
                    r_i += 1.0;
                } else {
                    self.failed = true;
                }
            }
        }
        if self.turns >= TOY_MAX_TURNS && !self.all_succeeded() {
            self.failed = true;
            subtask_done = true;
        }
        let dialogue_success = self.all_succeeded() && !self.failed;
        if dialogue_success && subtask_success {
            r_e += 2.0;
        }
        let dialogue_done = self.dialogue_terminated();
        if dialogue_done {
            subtask_done = true;
        }
        Ok(HrlStep {
            r_i,
            r_e,
            subtask_done,
            subtask_success,
            dialogue_done,
            dialogue_success,
        })
    }
}

/// Exhaustive search over all action sequences up to the turn limit; returns
/// the best undiscounted extrinsic return.
pub fn exhaustive_optimal_return(env: &ToyHierEnv) -> f64 {
    fn recurse(env: &ToyHierEnv, acc: f64, best: &mut f64) {
        if env.dialogue_terminated() {
            *best = best.max(acc);
            return;
        }
        for action in 0..4 {
            let mut branch = env.clone();
            let out = branch.step(action).unwrap();
            recurse(&branch, acc + out.r_e, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    recurse(env, 0.0, &mut best);
    best
}
