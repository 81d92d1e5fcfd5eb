//! Minimal dense numeric layer.
//!
//! Just enough machinery for the fixed architectures in this crate: dense
//! tensors, parameters with Adam state, affine/MLP forward and backward
//! passes, and a central-finite-difference gradient checker. Everything is
//! f64; forward passes are pure functions of (inputs, parameters).

use std::collections::BTreeMap;

use rand::Rng;

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Tensor and Parameter
// ---------------------------------------------------------------------------

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Uniform init in ±sqrt(6 / (fan_in + fan_out)) for 2-d weights,
    /// ±sqrt(6 / len) otherwise.
    pub fn glorot_uniform(shape: Vec<usize>, rng: &mut impl Rng) -> Self {
        let fan = if shape.len() == 2 {
            shape[0] + shape[1]
        } else {
            shape.iter().product::<usize>().max(1)
        };
        let limit = (6.0 / fan as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, x: f64) {
        self.data.iter_mut().for_each(|v| *v = x);
    }
}

/// Trainable tensor with gradient and Adam state.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    moment1: Tensor,
    moment2: Tensor,
    step: u64,
    /// Optional value clamp applied after every optimizer step (e.g. the
    /// per-layer mixing scalar is kept in [0, 1]).
    pub clamp: Option<(f64, f64)>,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape.clone();
        Parameter {
            value,
            grad: Tensor::zeros(shape.clone()),
            moment1: Tensor::zeros(shape.clone()),
            moment2: Tensor::zeros(shape),
            step: 0,
            clamp: None,
        }
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    pub fn scalar(&self) -> f64 {
        self.value.data[0]
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn optimizer_state(&self) -> (&Tensor, &Tensor, u64) {
        (&self.moment1, &self.moment2, self.step)
    }

    pub fn restore_optimizer_state(&mut self, m1: Tensor, m2: Tensor, step: u64) {
        self.moment1 = m1;
        self.moment2 = m2;
        self.step = step;
    }

    pub fn reset_optimizer_state(&mut self) {
        self.moment1.fill(0.0);
        self.moment2.fill(0.0);
        self.step = 0;
        self.grad.fill(0.0);
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction; the gradient is zeroed afterward
/// and the optional clamp is applied.
pub fn adam_step(param: &mut Parameter, cfg: &AdamConfig) {
    param.step += 1;
    let t = param.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..param.value.data.len() {
        let g = param.grad.data[i];
        let m = &mut param.moment1.data[i];
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        let v = &mut param.moment2.data[i];
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = param.moment1.data[i] / c1;
        let v_hat = param.moment2.data[i] / c2;
        param.value.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        param.grad.data[i] = 0.0;
    }
    if let Some((lo, hi)) = param.clamp {
        for x in &mut param.value.data {
            *x = x.clamp(lo, hi);
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

/// Named parameter store. Policy networks key their shared weights by
/// (role, type, layer) strings, so the key set never depends on node counts.
#[derive(Debug, Clone, Default)]
pub struct ParamRegistry {
    params: BTreeMap<String, Parameter>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, param: Parameter) {
        self.params.insert(key.into(), param);
    }

    pub fn get(&self, key: &str) -> &Parameter {
        self.params
            .get(key)
            .unwrap_or_else(|| panic!("missing parameter '{key}'"))
    }

    pub fn get_mut(&mut self, key: &str) -> &mut Parameter {
        self.params
            .get_mut(key)
            .unwrap_or_else(|| panic!("missing parameter '{key}'"))
    }

    pub fn try_get(&self, key: &str) -> Option<&Parameter> {
        self.params.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.zero_grad();
        }
    }

    /// Adam step over every parameter.
    pub fn adam_step_all(&mut self, cfg: &AdamConfig) {
        for p in self.params.values_mut() {
            adam_step(p, cfg);
        }
    }

    /// Hard-copy parameter values from `source` (target-network sync).
    /// Optimizer state is not copied. Key sets must match.
    pub fn copy_values_from(&mut self, source: &ParamRegistry) {
        assert_eq!(
            self.params.len(),
            source.params.len(),
            "registry key sets differ"
        );
        for (key, p) in self.params.iter_mut() {
            let src = source.get(key);
            p.value.data.copy_from_slice(&src.value.data);
        }
    }
}

// ---------------------------------------------------------------------------
// Affine and MLP passes
// ---------------------------------------------------------------------------

/// y = W x (W is [out, in], row-major).
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (out, inp) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(inp, x.len());
    let mut y = vec![0.0; out];
    for (row, yi) in w.data.chunks_exact(inp).zip(y.iter_mut()) {
        let mut acc = 0.0;
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *yi = acc;
    }
    y
}

/// x_grad = W^T u.
pub fn matvec_t(w: &Tensor, u: &[f64]) -> Vec<f64> {
    let (out, inp) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(out, u.len());
    let mut x = vec![0.0; inp];
    for (row, ui) in w.data.chunks_exact(inp).zip(u) {
        for (xj, wij) in x.iter_mut().zip(row) {
            *xj += wij * ui;
        }
    }
    x
}

/// grad += u ⊗ v (u along rows).
pub fn accumulate_outer(grad: &mut Tensor, u: &[f64], v: &[f64]) {
    let inp = grad.shape[1];
    debug_assert_eq!(grad.shape[0], u.len());
    debug_assert_eq!(inp, v.len());
    for (row, ui) in grad.data.chunks_exact_mut(inp).zip(u) {
        for (gj, vj) in row.iter_mut().zip(v) {
            *gj += ui * vj;
        }
    }
}

fn add_assign(acc: &mut [f64], rhs: &[f64]) {
    for (a, b) in acc.iter_mut().zip(rhs) {
        *a += b;
    }
}

/// y = W x + b, with shape checking.
pub fn affine_forward(x: &[f64], w: &Parameter, b: &Parameter) -> Result<Vec<f64>> {
    if w.value.shape()[1] != x.len() || w.value.shape()[0] != b.value.len() {
        return Err(Error::ShapeMismatch {
            op: "affine_forward",
            lhs: w.value.shape().to_vec(),
            rhs: vec![x.len(), b.value.len()],
        });
    }
    let mut y = matvec(&w.value, x);
    add_assign(&mut y, b.value.data());
    Ok(y)
}

/// Accumulates exact gradients of y = W x + b into W and b; returns dL/dx.
pub fn affine_backward(x: &[f64], w: &mut Parameter, b: &mut Parameter, upstream: &[f64]) -> Vec<f64> {
    accumulate_outer(&mut w.grad, upstream, x);
    add_assign(b.grad.data_mut(), upstream);
    matvec_t(&w.value, upstream)
}

/// Layer widths of an MLP, including input and output: [in, h1, ..., out].
/// Hidden activations are rectifiers; the output is linear. A two-entry
/// spec is a single affine layer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one affine layer");
        MlpSpec { widths }
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn weight_key(prefix: &str, layer: usize) -> String {
        format!("{prefix}/w{layer}")
    }

    pub fn bias_key(prefix: &str, layer: usize) -> String {
        format!("{prefix}/b{layer}")
    }
}

/// Register freshly initialized weights for an MLP under `prefix`.
pub fn init_mlp(reg: &mut ParamRegistry, prefix: &str, spec: &MlpSpec, rng: &mut impl Rng) {
    for l in 0..spec.layer_count() {
        let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
        reg.insert(
            MlpSpec::weight_key(prefix, l),
            Parameter::new(Tensor::glorot_uniform(vec![fan_out, fan_in], rng)),
        );
        reg.insert(
            MlpSpec::bias_key(prefix, l),
            Parameter::new(Tensor::zeros(vec![fan_out])),
        );
    }
}

/// Cached intermediates of one MLP forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input plus each layer's post-activation output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values of the hidden layers.
    pre: Vec<Vec<f64>>,
}

/// Forward pass; returns (output, cache for backward).
pub fn mlp_forward(
    reg: &ParamRegistry,
    prefix: &str,
    spec: &MlpSpec,
    x: &[f64],
) -> Result<(Vec<f64>, MlpCache)> {
    let mut cache = MlpCache {
        activations: vec![x.to_vec()],
        pre: Vec::new(),
    };
    let mut h = x.to_vec();
    for l in 0..spec.layer_count() {
        let w = reg.get(&MlpSpec::weight_key(prefix, l));
        let b = reg.get(&MlpSpec::bias_key(prefix, l));
        let mut y = affine_forward(&h, w, b)?;
        if l + 1 < spec.layer_count() {
            cache.pre.push(y.clone());
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        cache.activations.push(y.clone());
        h = y;
    }
    Ok((h, cache))
}

/// Backward pass; accumulates parameter gradients, returns dL/dx.
pub fn mlp_backward(
    reg: &mut ParamRegistry,
    prefix: &str,
    spec: &MlpSpec,
    cache: &MlpCache,
    upstream: &[f64],
) -> Vec<f64> {
    let mut delta = upstream.to_vec();
    for l in (0..spec.layer_count()).rev() {
        if l + 1 < spec.layer_count() {
            for (d, &pre) in delta.iter_mut().zip(&cache.pre[l]) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let x = cache.activations[l].clone();
        let wk = MlpSpec::weight_key(prefix, l);
        let bk = MlpSpec::bias_key(prefix, l);
        // Split borrows: gradient accumulation needs w and b mutably.
        let dx = {
            let w_value = reg.get(&wk).value.clone();
            {
                let w = reg.get_mut(&wk);
                accumulate_outer(&mut w.grad, &delta, &x);
            }
            {
                let b = reg.get_mut(&bk);
                add_assign(b.grad.data_mut(), &delta);
            }
            matvec_t(&w_value, &delta)
        };
        delta = dx;
    }
    delta
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Outcome of a finite-difference check over a registry.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    /// Coordinates skipped because the value sits on a clamp boundary.
    pub clamped: Vec<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compare analytic gradients against central finite differences.
///
/// `analytic` must populate gradients in the registry and return the loss;
/// `loss` must evaluate the same scalar without touching gradients. The
/// relative error uses a unit floor in the denominator so near-zero
/// gradients are compared absolutely.
pub fn grad_check<A, L>(reg: &mut ParamRegistry, analytic: A, loss: L, h: f64) -> Result<GradCheckReport>
where
    A: FnOnce(&mut ParamRegistry) -> f64,
    L: Fn(&ParamRegistry) -> f64,
{
    reg.zero_grads();
    let loss0 = analytic(reg);
    if !loss0.is_finite() {
        return Err(Error::NonFiniteLoss(loss0));
    }

    let keys: Vec<String> = reg.keys().cloned().collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        clamped: Vec::new(),
        checked: 0,
    };
    for key in keys {
        let (len, clamp, grads) = {
            let p = reg.get(&key);
            (p.value.len(), p.clamp, p.grad.data().to_vec())
        };
        for i in 0..len {
            let x0 = reg.get(&key).value.data()[i];
            if let Some((lo, hi)) = clamp {
                if (x0 - lo).abs() < 1e-12 || (x0 - hi).abs() < 1e-12 {
                    report.clamped.push((key.clone(), i));
                    continue;
                }
            }
            reg.get_mut(&key).value.data_mut()[i] = x0 + h;
            let up = loss(reg);
            reg.get_mut(&key).value.data_mut()[i] = x0 - h;
            let down = loss(reg);
            reg.get_mut(&key).value.data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * h);
            let analytic_g = grads[i];
            let rel = (analytic_g - numeric).abs() / (analytic_g.abs() + numeric.abs()).max(1.0);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((key.clone(), i));
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn param(shape: Vec<usize>, data: Vec<f64>) -> Parameter {
        Parameter::new(Tensor::from_vec(shape, data).unwrap())
    }

    #[test]
    fn affine_identity_passes_input_through() {
        let w = param(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = param(vec![3], vec![0.0; 3]);
        let x = [0.3, -0.7, 2.0];
        assert_eq!(affine_forward(&x, &w, &b).unwrap(), x.to_vec());
    }

    #[test]
    fn affine_zero_input_returns_bias() {
        let w = param(vec![2, 3], vec![1.0; 6]);
        let b = param(vec![2], vec![0.5, -1.5]);
        assert_eq!(affine_forward(&[0.0; 3], &w, &b).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn affine_shape_mismatch_reports_both_shapes() {
        let w = param(vec![2, 3], vec![0.0; 6]);
        let b = param(vec![2], vec![0.0; 2]);
        match affine_forward(&[1.0, 2.0], &w, &b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        // Random 4x3 case against central differences.
        let mut rng = stream_rng(11, "affine-fd", 0);
        let mut reg = ParamRegistry::new();
        reg.insert(
            "w",
            Parameter::new(Tensor::glorot_uniform(vec![4, 3], &mut rng)),
        );
        reg.insert(
            "b",
            Parameter::new(Tensor::glorot_uniform(vec![4], &mut rng)),
        );
        let x = [0.3, -1.2, 0.8];
        let target = [0.1, 0.2, -0.4, 0.9];
        let loss_of = |reg: &ParamRegistry| {
            let y = affine_forward(&x, reg.get("w"), reg.get("b")).unwrap();
            y.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>()
        };
        let report = grad_check(
            &mut reg,
            |reg| {
                let y = affine_forward(&x, reg.get("w"), reg.get("b")).unwrap();
                let up: Vec<f64> = y.iter().zip(&target).map(|(a, t)| 2.0 * (a - t)).collect();
                let mut w = reg.get("w").clone();
                let mut b = reg.get("b").clone();
                affine_backward(&x, &mut w, &mut b, &up);
                *reg.get_mut("w") = w;
                *reg.get_mut("b") = b;
                y.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum()
            },
            loss_of,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn single_layer_mlp_is_affine() {
        let mut rng = stream_rng(3, "mlp", 0);
        let mut reg = ParamRegistry::new();
        let spec = MlpSpec::new(vec![3, 2]);
        init_mlp(&mut reg, "net", &spec, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let (y, _) = mlp_forward(&reg, "net", &spec, &x).unwrap();
        let direct = affine_forward(&x, reg.get("net/w0"), reg.get("net/b0")).unwrap();
        assert_eq!(y, direct);
    }

    #[test]
    fn rectifier_zeroes_negative_preactivations() {
        let mut reg = ParamRegistry::new();
        let spec = MlpSpec::new(vec![2, 2, 1]);
        reg.insert("net/w0", param(vec![2, 2], vec![-1.0, 0.0, 0.0, -1.0]));
        reg.insert("net/b0", param(vec![2], vec![0.0, 0.0]));
        reg.insert("net/w1", param(vec![1, 2], vec![1.0, 1.0]));
        reg.insert("net/b1", param(vec![1], vec![0.25]));
        let (y, _) = mlp_forward(&reg, "net", &spec, &[3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.25]);
    }

    #[test]
    fn two_layer_mlp_matches_scalar_recomputation() {
        // Independent oracle: the same arithmetic written out longhand with
        // scalar operations, for fixed small weights.
        let mut reg = ParamRegistry::new();
        let spec = MlpSpec::new(vec![2, 2, 1]);
        reg.insert("net/w0", param(vec![2, 2], vec![0.5, -0.25, 1.0, 0.75]));
        reg.insert("net/b0", param(vec![2], vec![0.1, -0.2]));
        reg.insert("net/w1", param(vec![1, 2], vec![2.0, -1.0]));
        reg.insert("net/b1", param(vec![1], vec![0.05]));
        let x = [0.4, 0.6];
        let (y, _) = mlp_forward(&reg, "net", &spec, &x).unwrap();

        let h0 = f64::max(0.5 * 0.4 + -0.25 * 0.6 + 0.1, 0.0);
        let h1 = f64::max(1.0 * 0.4 + 0.75 * 0.6 + -0.2, 0.0);
        let expected = 2.0 * h0 + -1.0 * h1 + 0.05;
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = stream_rng(5, "mlp-fd", 0);
        let mut reg = ParamRegistry::new();
        let spec = MlpSpec::new(vec![4, 8, 3]);
        init_mlp(&mut reg, "net", &spec, &mut rng);
        let x = [0.3, -0.9, 1.4, 0.2];
        let loss_of = |reg: &ParamRegistry| {
            let (y, _) = mlp_forward(reg, "net", &spec, &x).unwrap();
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let spec2 = spec.clone();
        let report = grad_check(
            &mut reg,
            move |reg| {
                let (y, cache) = mlp_forward(reg, "net", &spec2, &x).unwrap();
                let up: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
                mlp_backward(reg, "net", &spec2, &cache, &up);
                y.iter().map(|v| v * v).sum()
            },
            loss_of,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn adam_zero_gradient_leaves_fresh_parameter_unchanged() {
        let mut p = param(vec![2], vec![1.0, -2.0]);
        adam_step(&mut p, &AdamConfig::default());
        assert_eq!(p.value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        // For the first step, m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let mut p = param(vec![2], vec![0.0, 0.0]);
        p.grad.data_mut().copy_from_slice(&[0.4, -3.0]);
        adam_step(&mut p, &cfg);
        for (i, &g) in [0.4, -3.0].iter().enumerate() {
            let expected = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p.value.data()[i] - expected).abs() < 1e-15);
        }
        assert_eq!(p.grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_steps_are_deterministic() {
        let run = || {
            let mut p = param(vec![1], vec![0.5]);
            for _ in 0..2 {
                p.grad.data_mut()[0] = 0.3;
                adam_step(&mut p, &AdamConfig::default());
            }
            p.value.data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn clamp_is_applied_after_step() {
        let mut p = param(vec![1], vec![0.999_999]).with_clamp(0.0, 1.0);
        p.grad.data_mut()[0] = -10.0;
        adam_step(&mut p, &AdamConfig::default());
        assert!(p.value.data()[0] <= 1.0);
    }

    #[test]
    fn grad_check_quadratic_is_exact() {
        let mut reg = ParamRegistry::new();
        reg.insert("p", param(vec![3], vec![0.5, -1.0, 2.0]));
        let report = grad_check(
            &mut reg,
            |reg| {
                let v = reg.get("p").value.data().to_vec();
                reg.get_mut("p").grad.data_mut().copy_from_slice(&v);
                0.5 * v.iter().map(|x| x * x).sum::<f64>()
            },
            |reg| 0.5 * reg.get("p").value.data().iter().map(|x| x * x).sum::<f64>(),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-9);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn grad_check_skips_clamped_coordinates() {
        let mut reg = ParamRegistry::new();
        reg.insert("lambda", param(vec![1], vec![1.0]).with_clamp(0.0, 1.0));
        let report = grad_check(
            &mut reg,
            |_| 0.0,
            |_| 0.0,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.clamped, vec![("lambda".to_string(), 0)]);
        assert_eq!(report.checked, 0);
    }

    #[test]
    fn grad_check_rejects_non_finite_loss() {
        let mut reg = ParamRegistry::new();
        reg.insert("p", param(vec![1], vec![1.0]));
        let err = grad_check(&mut reg, |_| f64::NAN, |_| f64::NAN, 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss(_)));
    }
}
