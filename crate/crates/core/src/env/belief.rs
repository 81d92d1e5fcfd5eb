//! Belief state: per-slot value distributions plus slot-independent features.
//!
//! The observation vector is the concatenation of per-subtask blocks; each
//! subtask contributes one (M+2)-dimensional block per informable slot
//! (sorted top-M value probabilities, dontcare, not-mentioned) followed by a
//! fixed-size slot-independent block.

use serde::Serialize;

use crate::ontology::Constraint;

use super::{Intent, TaskContext, INTENT_COUNT};

/// Size of the slot-independent feature block: match-count bucket one-hot
/// [0, 1, 2–4, >=5], entity-offered flag, all-requests-answered flag,
/// last-user-act one-hot, normalized turn counter.
pub const INDEP_DIM: usize = 4 + 1 + 1 + INTENT_COUNT + 1;

/// Probability distribution over one informable slot's values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotDist {
    /// One probability per inventory value.
    pub probs: Vec<f64>,
    pub dontcare: f64,
    pub not_mentioned: f64,
}

/// Outcome of taking the argmax over a slot distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotTop {
    Value(usize),
    DontCare,
    NotMentioned,
}

impl SlotDist {
    pub fn ignorance(cardinality: usize) -> Self {
        SlotDist {
            probs: vec![0.0; cardinality],
            dontcare: 0.0,
            not_mentioned: 1.0,
        }
    }

    fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.dontcare + self.not_mentioned
    }

    fn renormalize(&mut self) {
        let z = self.total();
        if z > 0.0 {
            for p in &mut self.probs {
                *p /= z;
            }
            self.dontcare /= z;
            self.not_mentioned /= z;
        }
    }

    /// Values sorted by probability (descending, ties by index).
    pub fn top_values(&self, m: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .take(m)
            .map(|i| (i, self.probs[i]))
            .collect()
    }

    /// Argmax over values, dontcare and not-mentioned. Ties prefer a value
    /// over dontcare over not-mentioned, so a single confident mention wins.
    pub fn top(&self) -> SlotTop {
        let (best_v, best_p) = self
            .top_values(1)
            .first()
            .copied()
            .unwrap_or((0, f64::NEG_INFINITY));
        if best_p >= self.dontcare && best_p >= self.not_mentioned {
            SlotTop::Value(best_v)
        } else if self.dontcare >= self.not_mentioned {
            SlotTop::DontCare
        } else {
            SlotTop::NotMentioned
        }
    }
}

/// Belief for one subtask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtaskBelief {
    /// One distribution per informable slot, in ontology order.
    pub slots: Vec<SlotDist>,
    /// Database matches under the current top-1 constraints.
    pub match_count: usize,
    pub entity_offered: bool,
    pub all_requests_answered: bool,
    pub last_user_intent: Option<Intent>,
    /// Turns spent in this subtask so far.
    pub turns: usize,
}

/// The structured observation: one [`SubtaskBelief`] per subtask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefState {
    pub subtasks: Vec<SubtaskBelief>,
}

/// Vector layout of the belief observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct BeliefLayout {
    pub top_m: usize,
    pub max_subtask_turns: usize,
    /// Informable-slot count per subtask.
    pub slot_counts: Vec<usize>,
}

impl BeliefLayout {
    pub fn slot_block_dim(&self) -> usize {
        self.top_m + 2
    }

    pub fn subtask_dim(&self, k: usize) -> usize {
        self.slot_counts[k] * self.slot_block_dim() + INDEP_DIM
    }

    pub fn total_dim(&self) -> usize {
        (0..self.slot_counts.len()).map(|k| self.subtask_dim(k)).sum()
    }

    pub fn subtask_offset(&self, k: usize) -> usize {
        (0..k).map(|i| self.subtask_dim(i)).sum()
    }

    pub fn subtask_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.subtask_offset(k);
        start..start + self.subtask_dim(k)
    }

    /// Range of the j-th informable slot block of subtask k.
    pub fn slot_block(&self, k: usize, j: usize) -> std::ops::Range<usize> {
        let start = self.subtask_offset(k) + j * self.slot_block_dim();
        start..start + self.slot_block_dim()
    }

    /// Range of the slot-independent block of subtask k.
    pub fn indep_block(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.subtask_offset(k) + self.slot_counts[k] * self.slot_block_dim();
        start..start + INDEP_DIM
    }
}

fn bucket(count: usize) -> usize {
    match count {
        0 => 0,
        1 => 1,
        2..=4 => 2,
        _ => 3,
    }
}

impl BeliefState {
    /// Uniform-ignorance belief: full not-mentioned mass everywhere, the
    /// match bucket reflecting the unconstrained database.
    pub fn ignorance(ctx: &TaskContext) -> Self {
        let subtasks = ctx
            .ontology
            .subtasks
            .iter()
            .enumerate()
            .map(|(k, sub)| SubtaskBelief {
                slots: ctx.informable[k]
                    .iter()
                    .map(|&j| SlotDist::ignorance(sub.slots[j].values.len()))
                    .collect(),
                match_count: sub.entity_count,
                entity_offered: false,
                all_requests_answered: true,
                last_user_intent: None,
                turns: 0,
            })
            .collect();
        BeliefState { subtasks }
    }

    /// Flatten to the network observation vector.
    pub fn vector(&self, layout: &BeliefLayout) -> Vec<f64> {
        let mut out = Vec::with_capacity(layout.total_dim());
        for (k, sub) in self.subtasks.iter().enumerate() {
            debug_assert_eq!(sub.slots.len(), layout.slot_counts[k]);
            for dist in &sub.slots {
                let top = dist.top_values(layout.top_m);
                for i in 0..layout.top_m {
                    out.push(top.get(i).map_or(0.0, |&(_, p)| p));
                }
                out.push(dist.dontcare);
                out.push(dist.not_mentioned);
            }
            let mut one_hot = [0.0; 4];
            one_hot[bucket(sub.match_count)] = 1.0;
            out.extend_from_slice(&one_hot);
            out.push(if sub.entity_offered { 1.0 } else { 0.0 });
            out.push(if sub.all_requests_answered { 1.0 } else { 0.0 });
            let mut intents = [0.0; INTENT_COUNT];
            if let Some(intent) = sub.last_user_intent {
                intents[intent as usize] = 1.0;
            }
            out.extend_from_slice(&intents);
            out.push(sub.turns as f64 / layout.max_subtask_turns as f64);
        }
        debug_assert_eq!(out.len(), layout.total_dim());
        out
    }

    /// Top-1 constraints of subtask k, keyed by ontology slot index. Slots
    /// whose argmax is dontcare or not-mentioned contribute no constraint.
    pub fn top1_constraints(&self, ctx: &TaskContext, k: usize) -> Vec<(usize, Constraint)> {
        self.subtasks[k]
            .slots
            .iter()
            .enumerate()
            .filter_map(|(j, dist)| match dist.top() {
                SlotTop::Value(v) => Some((ctx.informable[k][j], Constraint::Value(v))),
                _ => None,
            })
            .collect()
    }
}

/// Per-turn context handed to [`track`]: which subtask the turn addressed
/// and the system-observable flags recomputed by the session.
pub struct TrackContext<'a> {
    pub task: &'a TaskContext,
    pub subtask: usize,
    pub entity_offered: bool,
    pub all_requests_answered: bool,
    pub subtask_turns: usize,
}

/// Belief update: accumulate each observed (slot, value) mention weighted by
/// its confidence, renormalize each touched slot once, then recompute the
/// addressed subtask's slot-independent features from the database match
/// count under the new top-1 constraints.
pub fn track(
    belief: &BeliefState,
    observed: &[super::DialogueAct],
    ctx: &TrackContext,
) -> BeliefState {
    let mut next = belief.clone();
    let k = ctx.subtask;
    let spec = &ctx.task.ontology.subtasks[k];
    let sub = &mut next.subtasks[k];

    let mut touched = vec![false; sub.slots.len()];
    for act in observed {
        if !act.intent.carries_value() {
            continue;
        }
        let (Some(slot_name), Some(value)) = (&act.slot, &act.value) else {
            continue;
        };
        let Some(j) = ctx.task.informable_position(k, slot_name) else {
            continue;
        };
        let dist = &mut sub.slots[j];
        if value == crate::ontology::DONTCARE {
            dist.dontcare += act.confidence;
            touched[j] = true;
        } else if let Some(v) = spec.slots[ctx.task.informable[k][j]]
            .values
            .iter()
            .position(|x| x == value)
        {
            dist.probs[v] += act.confidence;
            touched[j] = true;
        }
    }
    for (j, dirty) in touched.iter().enumerate() {
        if *dirty {
            sub.slots[j].renormalize();
        }
    }
    if let Some(act) = observed.last() {
        sub.last_user_intent = Some(act.intent);
    }

    sub.entity_offered = ctx.entity_offered;
    sub.all_requests_answered = ctx.all_requests_answered;
    sub.turns = ctx.subtask_turns;
    let constraints = next.top1_constraints(ctx.task, k);
    next.subtasks[k].match_count = ctx.task.db.match_count(k, &constraints);
    next
}
