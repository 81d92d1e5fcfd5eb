//! Graph policy networks over the belief state, plus the flat MLP baseline.
//!
//! Both levels of the hierarchical policy are parameterized by a typed GNN:
//! per-node-type input embeddings, L rounds of typed message passing with
//! mean aggregation, and per-type output heads. Nodes of equal type share
//! every parameter, so the registry's key set is independent of node count —
//! the property that makes checkpoints transferable across composite tasks.

mod graph;

pub use graph::{
    build_low_graph, build_low_graph_from_counts, build_top_graph, build_top_graph_from_counts,
    graph_dump_json, EdgeType, GraphEdge, GraphKind, GraphNode, GraphSpec, NodeType,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{BeliefLayout, INDEP_DIM};
use crate::rng::stream_rng;
use crate::tensor::{
    accumulate_outer, init_mlp, matvec, matvec_t, mlp_backward, mlp_forward, MlpCache, MlpSpec,
    ParamRegistry, Parameter, Tensor,
};
use crate::{Error, Result};

/// Primitive actions attached to each slot node (request, confirm, select).
pub const SLOT_PRIM_ACTIONS: usize = 3;
/// Primitive actions attached to each delegate node
/// (inform_entity, inform_requested, repeat, reqmore, bye).
pub const INDEP_PRIM_ACTIONS: usize = 5;

/// Architecture parameters shared by both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComNetConfig {
    /// Node embedding width.
    pub embed: usize,
    /// Number of extraction layers L (0 = heads read the input embeddings).
    pub layers: usize,
    /// Hidden width of the output heads; 0 = linear heads.
    pub head_hidden: usize,
    /// Add one self edge per node (gives the top graph a fourth edge type).
    pub self_loops: bool,
}

impl Default for ComNetConfig {
    fn default() -> Self {
        ComNetConfig {
            embed: 32,
            layers: 2,
            head_hidden: 32,
            self_loops: false,
        }
    }
}

/// Total primitive-action count of a belief layout.
pub fn action_count(layout: &BeliefLayout) -> usize {
    layout
        .slot_counts
        .iter()
        .map(|n| n * SLOT_PRIM_ACTIONS + INDEP_PRIM_ACTIONS)
        .sum()
}

/// One-hot encoding of the chosen subtask.
pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut g = vec![0.0; len];
    g[index] = 1.0;
    g
}

// ---------------------------------------------------------------------------
// ComNet
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum NodeInput {
    /// Belief slice.
    Span(std::ops::Range<usize>),
    /// The subtask one-hot.
    Goal,
}

/// One level's graph network: the graph, the key schema, and the slicing of
/// the belief vector into per-node inputs.
#[derive(Debug, Clone)]
pub struct ComNet {
    pub graph: GraphSpec,
    pub cfg: ComNetConfig,
    node_inputs: Vec<NodeInput>,
    belief_dim: usize,
    slot_input_dim: usize,
    subtask_count: usize,
}

fn input_key(ty: NodeType) -> String {
    format!("input/{}", ty.name())
}

fn msg_key(ty: EdgeType, layer: usize) -> String {
    format!("msg/{}/l{layer}", ty.name())
}

fn upd_key(ty: NodeType, layer: usize) -> String {
    format!("upd/{}/l{layer}", ty.name())
}

fn lambda_key(layer: usize) -> String {
    format!("lambda/l{layer}")
}

impl ComNet {
    pub fn top(layout: &BeliefLayout, cfg: ComNetConfig) -> ComNet {
        let graph = build_top_graph_from_counts(&layout.slot_counts, cfg.self_loops);
        Self::from_graph(graph, layout, cfg)
    }

    pub fn low(layout: &BeliefLayout, cfg: ComNetConfig) -> ComNet {
        let graph = build_low_graph_from_counts(&layout.slot_counts, cfg.self_loops);
        Self::from_graph(graph, layout, cfg)
    }

    fn from_graph(graph: GraphSpec, layout: &BeliefLayout, cfg: ComNetConfig) -> ComNet {
        let node_inputs = graph
            .nodes
            .iter()
            .map(|n| match n.ty {
                NodeType::S => NodeInput::Span(layout.slot_block(n.subtask, n.slot.unwrap())),
                NodeType::I => NodeInput::Span(layout.indep_block(n.subtask)),
                NodeType::T => NodeInput::Goal,
            })
            .collect();
        ComNet {
            node_inputs,
            belief_dim: layout.total_dim(),
            slot_input_dim: layout.slot_block_dim(),
            subtask_count: layout.slot_counts.len(),
            graph,
            cfg,
        }
    }

    pub fn subtask_count(&self) -> usize {
        self.subtask_count
    }

    /// Input width of a node type: slot block for S, slot-independent block
    /// for I, the subtask one-hot for T. The top-M scheme makes every S-node
    /// input the same size, so no padding is needed.
    fn type_input_dim(&self, ty: NodeType) -> usize {
        match ty {
            NodeType::S => self.slot_input_dim,
            NodeType::I => INDEP_DIM,
            NodeType::T => self.subtask_count,
        }
    }

    fn head_spec(&self, input: usize, output: usize) -> MlpSpec {
        if self.cfg.head_hidden == 0 {
            MlpSpec::new(vec![input, output])
        } else {
            MlpSpec::new(vec![input, self.cfg.head_hidden, output])
        }
    }

    fn top_head_spec(&self) -> MlpSpec {
        self.head_spec(2 * self.cfg.embed, 1)
    }

    fn subt_head_spec(&self) -> MlpSpec {
        self.head_spec(self.cfg.embed, self.subtask_count)
    }

    fn slot_head_spec(&self) -> MlpSpec {
        self.head_spec(self.cfg.embed, 1)
    }

    fn prim_head_spec(&self, ty: NodeType) -> MlpSpec {
        let out = match ty {
            NodeType::S => SLOT_PRIM_ACTIONS,
            _ => INDEP_PRIM_ACTIONS,
        };
        self.head_spec(self.cfg.embed, out)
    }

    /// Q-vector length: K for the top level, the primitive-action count for
    /// the low level.
    pub fn output_dim(&self) -> usize {
        match self.graph.kind {
            GraphKind::Top => self.subtask_count,
            GraphKind::Low => self
                .graph
                .nodes
                .iter()
                .filter_map(|n| match n.ty {
                    NodeType::S => Some(SLOT_PRIM_ACTIONS),
                    NodeType::I => Some(INDEP_PRIM_ACTIONS),
                    NodeType::T => None,
                })
                .sum(),
        }
    }

    /// Register freshly initialized parameters. The key set depends only on
    /// the node/edge type sets, the layer count and the head shapes.
    pub fn init_params(&self, reg: &mut ParamRegistry, rng: &mut ChaCha8Rng) {
        let e = self.cfg.embed;
        for ty in self.graph.node_types() {
            let spec = MlpSpec::new(vec![self.type_input_dim(ty), e]);
            init_mlp(reg, &input_key(ty), &spec, rng);
        }
        for l in 1..=self.cfg.layers {
            for et in self.graph.edge_types() {
                reg.insert(
                    msg_key(et, l),
                    Parameter::new(Tensor::glorot_uniform(vec![e, e], rng)),
                );
            }
            for ty in self.graph.node_types() {
                reg.insert(
                    upd_key(ty, l),
                    Parameter::new(Tensor::glorot_uniform(vec![e, e], rng)),
                );
            }
            reg.insert(
                lambda_key(l),
                Parameter::new(Tensor::from_vec(vec![1], vec![0.5]).unwrap()).with_clamp(0.0, 1.0),
            );
        }
        match self.graph.kind {
            GraphKind::Top => {
                init_mlp(reg, "head/top", &self.top_head_spec(), rng);
            }
            GraphKind::Low => {
                init_mlp(reg, "head/subt", &self.subt_head_spec(), rng);
                for ty in [NodeType::S, NodeType::I] {
                    init_mlp(
                        reg,
                        &format!("head/slot/{}", ty.name()),
                        &self.slot_head_spec(),
                        rng,
                    );
                    init_mlp(
                        reg,
                        &format!("head/prim/{}", ty.name()),
                        &self.prim_head_spec(ty),
                        rng,
                    );
                }
            }
        }
    }

    // -- forward -------------------------------------------------------------

    /// h⁰_i = F_{p_i}(x_i): per-type input embedding of every node.
    pub fn input_embed(
        &self,
        reg: &ParamRegistry,
        belief: &[f64],
        goal: Option<&[f64]>,
    ) -> Result<(Vec<Vec<f64>>, Vec<MlpCache>, Vec<Vec<f64>>)> {
        if belief.len() != self.belief_dim {
            return Err(Error::NodeInputMismatch {
                node: 0,
                expected: self.belief_dim,
                got: belief.len(),
            });
        }
        let mut h0 = Vec::with_capacity(self.graph.node_count());
        let mut caches = Vec::with_capacity(self.graph.node_count());
        let mut xs = Vec::with_capacity(self.graph.node_count());
        for (node, input) in self.graph.nodes.iter().zip(&self.node_inputs) {
            let x: Vec<f64> = match input {
                NodeInput::Span(r) => belief[r.clone()].to_vec(),
                NodeInput::Goal => goal
                    .ok_or(Error::NodeInputMismatch {
                        node: node.id,
                        expected: self.subtask_count,
                        got: 0,
                    })?
                    .to_vec(),
            };
            let expected = self.type_input_dim(node.ty);
            if x.len() != expected {
                return Err(Error::NodeInputMismatch {
                    node: node.id,
                    expected,
                    got: x.len(),
                });
            }
            let spec = MlpSpec::new(vec![expected, self.cfg.embed]);
            let (h, cache) = mlp_forward(reg, &input_key(node.ty), &spec, &x)?;
            h0.push(h);
            caches.push(cache);
            xs.push(x);
        }
        Ok((h0, caches, xs))
    }

    /// One extraction layer: typed messages, mean aggregation over incoming
    /// edges (zero for isolated nodes), gated update, rectifier.
    /// Returns (h^l, pre-activations, W_p h^{l-1}, aggregated messages).
    pub fn propagate(
        &self,
        reg: &ParamRegistry,
        h_prev: &[Vec<f64>],
        layer: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let e = self.cfg.embed;
        let n = self.graph.node_count();
        let lambda = reg.get(&lambda_key(layer)).scalar();

        let mut mbar = vec![vec![0.0; e]; n];
        for (j, incoming) in self.graph.in_edges.iter().enumerate() {
            if incoming.is_empty() {
                continue;
            }
            for &ei in incoming {
                let edge = self.graph.edges[ei];
                let w = reg.get(&msg_key(edge.ty, layer));
                let m = matvec(&w.value, &h_prev[edge.src]);
                for (acc, v) in mbar[j].iter_mut().zip(&m) {
                    *acc += v;
                }
            }
            let inv = 1.0 / incoming.len() as f64;
            for v in &mut mbar[j] {
                *v *= inv;
            }
        }

        let mut h = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut wph = Vec::with_capacity(n);
        for (i, node) in self.graph.nodes.iter().enumerate() {
            let w = reg.get(&upd_key(node.ty, layer));
            let own = matvec(&w.value, &h_prev[i]);
            let mut u = vec![0.0; e];
            for d in 0..e {
                u[d] = lambda * own[d] + (1.0 - lambda) * mbar[i][d];
            }
            let act = u.iter().map(|&v| v.max(0.0)).collect();
            h.push(act);
            pre.push(u);
            wph.push(own);
        }
        (h, pre, wph, mbar)
    }

    fn run_gnn(&self, reg: &ParamRegistry, belief: &[f64], goal: Option<&[f64]>) -> Result<GnnTrace> {
        let (h0, input_caches, xs) = self.input_embed(reg, belief, goal)?;
        let mut h = vec![h0];
        let mut pre = Vec::new();
        let mut wph = Vec::new();
        let mut mbar = Vec::new();
        for l in 1..=self.cfg.layers {
            let (hl, ul, wl, ml) = self.propagate(reg, &h[l - 1], l);
            h.push(hl);
            pre.push(ul);
            wph.push(wl);
            mbar.push(ml);
        }
        Ok(GnnTrace {
            xs,
            input_caches,
            h,
            pre,
            wph,
            mbar,
        })
    }

    /// Top-level forward: q_top[k] from the summed S-embeddings and the
    /// delegate embedding of subtask k, through the shared output head.
    pub fn forward_top(&self, reg: &ParamRegistry, belief: &[f64]) -> Result<(Vec<f64>, GnnCache)> {
        debug_assert_eq!(self.graph.kind, GraphKind::Top);
        let trace = self.run_gnn(reg, belief, None)?;
        let h_last = trace.h.last().unwrap();
        let e = self.cfg.embed;
        let mut q = Vec::with_capacity(self.subtask_count);
        let mut head_caches = Vec::with_capacity(self.subtask_count);
        let spec = self.top_head_spec();
        for k in 0..self.subtask_count {
            let mut cat = vec![0.0; 2 * e];
            for s in self.graph.s_nodes(k) {
                for d in 0..e {
                    cat[d] += h_last[s][d];
                }
            }
            cat[e..].copy_from_slice(&h_last[self.graph.i_node(k)]);
            let (y, cache) = mlp_forward(reg, "head/top", &spec, &cat)?;
            q.push(y[0]);
            head_caches.push(cache);
        }
        Ok((
            q,
            GnnCache {
                trace,
                head: HeadCache::Top { heads: head_caches },
            },
        ))
    }

    pub fn backward_top(&self, reg: &mut ParamRegistry, cache: &GnnCache, upstream: &[f64]) {
        let e = self.cfg.embed;
        let HeadCache::Top { heads } = &cache.head else {
            panic!("top cache expected");
        };
        let spec = self.top_head_spec();
        let n = self.graph.node_count();
        let mut dh = vec![vec![0.0; e]; n];
        for k in 0..self.subtask_count {
            if upstream[k] == 0.0 {
                continue;
            }
            let dcat = mlp_backward(reg, "head/top", &spec, &heads[k], &[upstream[k]]);
            for s in self.graph.s_nodes(k) {
                for d in 0..e {
                    dh[s][d] += dcat[d];
                }
            }
            let i = self.graph.i_node(k);
            for d in 0..e {
                dh[i][d] += dcat[e + d];
            }
        }
        self.backward_gnn(reg, &cache.trace, dh);
    }

    /// Low-level forward: block for node (k, i) is
    /// q_subt[k] + q_slot^{k,i} + q_prim^{k,i}, blocks concatenated in graph
    /// (= action-space) order.
    pub fn forward_low(
        &self,
        reg: &ParamRegistry,
        belief: &[f64],
        goal: &[f64],
    ) -> Result<(Vec<f64>, GnnCache)> {
        debug_assert_eq!(self.graph.kind, GraphKind::Low);
        let trace = self.run_gnn(reg, belief, Some(goal))?;
        let h_last = trace.h.last().unwrap();
        let t = self.graph.t_node().expect("low graph has a T-node");
        let subt_spec = self.subt_head_spec();
        let (q_subt, subt_cache) = mlp_forward(reg, "head/subt", &subt_spec, &h_last[t])?;

        let mut q = Vec::with_capacity(self.output_dim());
        let mut slot_caches = Vec::new();
        let mut prim_caches = Vec::new();
        for node in &self.graph.nodes {
            if node.ty == NodeType::T {
                continue;
            }
            let slot_prefix = format!("head/slot/{}", node.ty.name());
            let prim_prefix = format!("head/prim/{}", node.ty.name());
            let (q_slot, sc) =
                mlp_forward(reg, &slot_prefix, &self.slot_head_spec(), &h_last[node.id])?;
            let (q_prim, pc) = mlp_forward(
                reg,
                &prim_prefix,
                &self.prim_head_spec(node.ty),
                &h_last[node.id],
            )?;
            for p in &q_prim {
                q.push(q_subt[node.subtask] + q_slot[0] + p);
            }
            slot_caches.push(sc);
            prim_caches.push(pc);
        }
        Ok((
            q,
            GnnCache {
                trace,
                head: HeadCache::Low {
                    subt: subt_cache,
                    slots: slot_caches,
                    prims: prim_caches,
                },
            },
        ))
    }

    pub fn backward_low(&self, reg: &mut ParamRegistry, cache: &GnnCache, upstream: &[f64]) {
        let e = self.cfg.embed;
        let HeadCache::Low { subt, slots, prims } = &cache.head else {
            panic!("low cache expected");
        };
        let n = self.graph.node_count();
        let mut dh = vec![vec![0.0; e]; n];
        let mut d_subt = vec![0.0; self.subtask_count];
        let mut offset = 0;
        let mut head_idx = 0;
        for node in &self.graph.nodes {
            if node.ty == NodeType::T {
                continue;
            }
            let len = match node.ty {
                NodeType::S => SLOT_PRIM_ACTIONS,
                _ => INDEP_PRIM_ACTIONS,
            };
            let d_block = &upstream[offset..offset + len];
            if d_block.iter().any(|&d| d != 0.0) {
                let d_sum: f64 = d_block.iter().sum();
                d_subt[node.subtask] += d_sum;
                let slot_prefix = format!("head/slot/{}", node.ty.name());
                let prim_prefix = format!("head/prim/{}", node.ty.name());
                let dx1 = mlp_backward(
                    reg,
                    &slot_prefix,
                    &self.slot_head_spec(),
                    &slots[head_idx],
                    &[d_sum],
                );
                let dx2 = mlp_backward(
                    reg,
                    &prim_prefix,
                    &self.prim_head_spec(node.ty),
                    &prims[head_idx],
                    d_block,
                );
                for d in 0..e {
                    dh[node.id][d] += dx1[d] + dx2[d];
                }
            }
            offset += len;
            head_idx += 1;
        }
        let t = self.graph.t_node().unwrap();
        let dt = mlp_backward(reg, "head/subt", &self.subt_head_spec(), subt, &d_subt);
        for d in 0..e {
            dh[t][d] += dt[d];
        }
        self.backward_gnn(reg, &cache.trace, dh);
    }

    /// Reverse pass through the extraction layers and input embeddings.
    fn backward_gnn(&self, reg: &mut ParamRegistry, trace: &GnnTrace, dh_last: Vec<Vec<f64>>) {
        let e = self.cfg.embed;
        let n = self.graph.node_count();
        let mut dh = dh_last;
        for l in (1..=self.cfg.layers).rev() {
            let idx = l - 1;
            let lambda = reg.get(&lambda_key(l)).scalar();
            // Rectifier gate.
            let mut du = dh;
            for i in 0..n {
                for d in 0..e {
                    if trace.pre[idx][i][d] <= 0.0 {
                        du[i][d] = 0.0;
                    }
                }
            }
            // λ gradient: du/dλ = W_p h − m̄.
            let mut d_lambda = 0.0;
            for i in 0..n {
                for d in 0..e {
                    d_lambda += du[i][d] * (trace.wph[idx][i][d] - trace.mbar[idx][i][d]);
                }
            }
            reg.get_mut(&lambda_key(l)).grad.data_mut()[0] += d_lambda;

            let mut dh_prev = vec![vec![0.0; e]; n];
            let mut scaled = vec![0.0; e];
            // Own-update path.
            for (i, node) in self.graph.nodes.iter().enumerate() {
                for d in 0..e {
                    scaled[d] = lambda * du[i][d];
                }
                let p = reg.get_mut(&upd_key(node.ty, l));
                accumulate_outer(&mut p.grad, &scaled, &trace.h[l - 1][i]);
                let dx = matvec_t(&p.value, &scaled);
                for d in 0..e {
                    dh_prev[i][d] += dx[d];
                }
            }
            // Message path: each incoming edge contributes (1−λ)/deg.
            for (j, incoming) in self.graph.in_edges.iter().enumerate() {
                if incoming.is_empty() {
                    continue;
                }
                let coeff = (1.0 - lambda) / incoming.len() as f64;
                for d in 0..e {
                    scaled[d] = coeff * du[j][d];
                }
                for &ei in incoming {
                    let edge = self.graph.edges[ei];
                    let p = reg.get_mut(&msg_key(edge.ty, l));
                    accumulate_outer(&mut p.grad, &scaled, &trace.h[l - 1][edge.src]);
                    let dx = matvec_t(&p.value, &scaled);
                    for d in 0..e {
                        dh_prev[edge.src][d] += dx[d];
                    }
                }
            }
            dh = dh_prev;
        }
        for (i, node) in self.graph.nodes.iter().enumerate() {
            let spec = MlpSpec::new(vec![self.type_input_dim(node.ty), e]);
            mlp_backward(reg, &input_key(node.ty), &spec, &trace.input_caches[i], &dh[i]);
        }
    }
}

/// Cached intermediates of one GNN forward pass.
#[derive(Debug, Clone)]
pub struct GnnCache {
    trace: GnnTrace,
    head: HeadCache,
}

#[derive(Debug, Clone)]
struct GnnTrace {
    #[allow(dead_code)]
    xs: Vec<Vec<f64>>,
    input_caches: Vec<MlpCache>,
    /// h[l][node] for l = 0..=L.
    h: Vec<Vec<Vec<f64>>>,
    pre: Vec<Vec<Vec<f64>>>,
    wph: Vec<Vec<Vec<f64>>>,
    mbar: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
enum HeadCache {
    Top {
        heads: Vec<MlpCache>,
    },
    Low {
        subt: MlpCache,
        slots: Vec<MlpCache>,
        prims: Vec<MlpCache>,
    },
}

/// Permute the two subtask-indexed parameter slices of a LOW registry (the
/// T-node input columns and the subtask head's output rows) so that
/// relabeling subtasks is an exact symmetry. `perm[k]` is the original index
/// now living at position k. Test helper for the equivariance properties.
pub fn permute_low_subtask_params(reg: &mut ParamRegistry, net: &ComNet, perm: &[usize]) {
    let k = net.subtask_count();
    assert_eq!(perm.len(), k);
    // input/T/w0: [embed, K] — permute columns.
    {
        let p = reg.get_mut("input/T/w0");
        let cols = p.value.shape()[1];
        assert_eq!(cols, k);
        let rows = p.value.shape()[0];
        let old = p.value.data().to_vec();
        let data = p.value.data_mut();
        for row in 0..rows {
            for (new_col, &old_col) in perm.iter().enumerate() {
                data[row * cols + new_col] = old[row * cols + old_col];
            }
        }
    }
    // head/subt final layer: weight rows and bias entries.
    let spec = net.subt_head_spec();
    let last = spec.layer_count() - 1;
    {
        let p = reg.get_mut(&MlpSpec::weight_key("head/subt", last));
        let cols = p.value.shape()[1];
        let old = p.value.data().to_vec();
        let data = p.value.data_mut();
        for (new_row, &old_row) in perm.iter().enumerate() {
            data[new_row * cols..(new_row + 1) * cols]
                .copy_from_slice(&old[old_row * cols..(old_row + 1) * cols]);
        }
    }
    {
        let p = reg.get_mut(&MlpSpec::bias_key("head/subt", last));
        let old = p.value.data().to_vec();
        let data = p.value.data_mut();
        for (new_row, &old_row) in perm.iter().enumerate() {
            data[new_row] = old[old_row];
        }
    }
}

// ---------------------------------------------------------------------------
// MLP baseline
// ---------------------------------------------------------------------------

/// The vanilla baseline: one flat MLP per level over the concatenated belief
/// (plus the subtask one-hot at the low level). No structural sharing.
#[derive(Debug, Clone)]
pub struct MlpBaseline {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl MlpBaseline {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        MlpBaseline {
            spec: MlpSpec::new(widths),
            prefix: prefix.into(),
        }
    }

    pub fn init_params(&self, reg: &mut ParamRegistry, rng: &mut ChaCha8Rng) {
        init_mlp(reg, &self.prefix, &self.spec, rng);
    }

    pub fn forward(&self, reg: &ParamRegistry, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        mlp_forward(reg, &self.prefix, &self.spec, x)
    }

    pub fn backward(&self, reg: &mut ParamRegistry, cache: &MlpCache, upstream: &[f64]) {
        mlp_backward(reg, &self.prefix, &self.spec, cache, upstream);
    }
}

// ---------------------------------------------------------------------------
// Policy dispatch
// ---------------------------------------------------------------------------

/// Default hidden widths of the baseline MLPs.
pub const MLP_BASELINE_HIDDEN: [usize; 2] = [128, 64];

/// A two-level policy network family. Top and low levels keep disjoint
/// parameter registries.
#[derive(Debug, Clone)]
pub enum PolicyNet {
    ComNet { top: ComNet, low: ComNet },
    Mlp { top: MlpBaseline, low: MlpBaseline },
}

/// Forward cache for either family.
#[derive(Debug, Clone)]
pub enum PolicyCache {
    Gnn(Box<GnnCache>),
    Mlp { cache: MlpCache },
}

impl PolicyNet {
    pub fn comnet(layout: &BeliefLayout, cfg: &ComNetConfig) -> PolicyNet {
        PolicyNet::ComNet {
            top: ComNet::top(layout, cfg.clone()),
            low: ComNet::low(layout, cfg.clone()),
        }
    }

    pub fn mlp(layout: &BeliefLayout, hidden: &[usize]) -> PolicyNet {
        let k = layout.slot_counts.len();
        let dim = layout.total_dim();
        PolicyNet::Mlp {
            top: MlpBaseline::new("mlp/top", dim, hidden, k),
            low: MlpBaseline::new("mlp/low", dim + k, hidden, action_count(layout)),
        }
    }

    pub fn subtask_count(&self) -> usize {
        match self {
            PolicyNet::ComNet { top, .. } => top.subtask_count(),
            PolicyNet::Mlp { top, .. } => top.spec.output_dim(),
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            PolicyNet::ComNet { low, .. } => low.output_dim(),
            PolicyNet::Mlp { low, .. } => low.spec.output_dim(),
        }
    }

    /// Fresh (top, low) registries.
    pub fn init_registries(&self, seed: u64) -> (ParamRegistry, ParamRegistry) {
        let mut reg_top = ParamRegistry::new();
        let mut reg_low = ParamRegistry::new();
        let mut rng_top = stream_rng(seed, "init-top", 0);
        let mut rng_low = stream_rng(seed, "init-low", 0);
        match self {
            PolicyNet::ComNet { top, low } => {
                top.init_params(&mut reg_top, &mut rng_top);
                low.init_params(&mut reg_low, &mut rng_low);
            }
            PolicyNet::Mlp { top, low } => {
                top.init_params(&mut reg_top, &mut rng_top);
                low.init_params(&mut reg_low, &mut rng_low);
            }
        }
        (reg_top, reg_low)
    }

    pub fn forward_top(
        &self,
        reg: &ParamRegistry,
        belief: &[f64],
    ) -> Result<(Vec<f64>, PolicyCache)> {
        match self {
            PolicyNet::ComNet { top, .. } => {
                let (q, cache) = top.forward_top(reg, belief)?;
                Ok((q, PolicyCache::Gnn(Box::new(cache))))
            }
            PolicyNet::Mlp { top, .. } => {
                let (q, cache) = top.forward(reg, belief)?;
                Ok((q, PolicyCache::Mlp { cache }))
            }
        }
    }

    pub fn backward_top(&self, reg: &mut ParamRegistry, cache: &PolicyCache, upstream: &[f64]) {
        match (self, cache) {
            (PolicyNet::ComNet { top, .. }, PolicyCache::Gnn(c)) => {
                top.backward_top(reg, c, upstream)
            }
            (PolicyNet::Mlp { top, .. }, PolicyCache::Mlp { cache }) => {
                top.backward(reg, cache, upstream)
            }
            _ => panic!("cache/policy mismatch"),
        }
    }

    pub fn forward_low(
        &self,
        reg: &ParamRegistry,
        belief: &[f64],
        subtask: usize,
    ) -> Result<(Vec<f64>, PolicyCache)> {
        let g = one_hot(subtask, self.subtask_count());
        match self {
            PolicyNet::ComNet { low, .. } => {
                let (q, cache) = low.forward_low(reg, belief, &g)?;
                Ok((q, PolicyCache::Gnn(Box::new(cache))))
            }
            PolicyNet::Mlp { low, .. } => {
                let mut x = belief.to_vec();
                x.extend_from_slice(&g);
                let (q, cache) = low.forward(reg, &x)?;
                Ok((q, PolicyCache::Mlp { cache }))
            }
        }
    }

    pub fn backward_low(&self, reg: &mut ParamRegistry, cache: &PolicyCache, upstream: &[f64]) {
        match (self, cache) {
            (PolicyNet::ComNet { low, .. }, PolicyCache::Gnn(c)) => {
                low.backward_low(reg, c, upstream)
            }
            (PolicyNet::Mlp { low, .. }, PolicyCache::Mlp { cache }) => {
                low.backward(reg, cache, upstream)
            }
            _ => panic!("cache/policy mismatch"),
        }
    }
}

// ---------------------------------------------------------------------------
