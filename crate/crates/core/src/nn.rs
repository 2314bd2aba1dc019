//! Dense networks over the reals, quaternions and dual quaternions.
//!
//! An algebra-valued layer is a constrained real linear map: every weight
//! `w` acts on an input unit `x` by left multiplication, which is the real
//! matrix `block_matrix_of(w)` applied to the flattened `x`. Forward and
//! backward passes walk the sparse entries of that matrix (the
//! [`ProductTerm`] table), so weight gradients are the real weight-matrix
//! gradient folded back onto the `dim` components of each algebra weight.
//!
//! Flattened vectors store one algebra element per `dim` consecutive reals,
//! ordered `(w, x, y, z)` and, for dual quaternions, primal then dual.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{DualQuaternion, Quaternion};
use crate::lorenz::WindowDataset;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("cache was produced by different parameters")]
    StaleCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("layers mix algebras {0} and {1}")]
    AlgebraMismatch(AlgebraTag, AlgebraTag),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// The number system a layer computes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgebraTag {
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "quat")]
    Quaternion,
    #[serde(rename = "dq")]
    DualQuaternion,
}

impl AlgebraTag {
    pub const ALL: [AlgebraTag; 3] =
        [AlgebraTag::Real, AlgebraTag::Quaternion, AlgebraTag::DualQuaternion];

    /// Real components per algebra element.
    pub const fn dim(self) -> usize {
        match self {
            AlgebraTag::Real => 1,
            AlgebraTag::Quaternion => 4,
            AlgebraTag::DualQuaternion => 8,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            AlgebraTag::Real => "real",
            AlgebraTag::Quaternion => "quat",
            AlgebraTag::DualQuaternion => "dq",
        }
    }
}

impl fmt::Display for AlgebraTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgebraTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(AlgebraTag::Real),
            "quat" | "quaternion" => Ok(AlgebraTag::Quaternion),
            "dq" | "dual_quaternion" => Ok(AlgebraTag::DualQuaternion),
            other => Err(format!("unknown algebra '{other}' (expected real, quat or dq)")),
        }
    }
}

/// Product of two flattened algebra elements.
pub fn algebra_mul(tag: AlgebraTag, a: &[f64], b: &[f64]) -> Vec<f64> {
    match tag {
        AlgebraTag::Real => vec![a[0] * b[0]],
        AlgebraTag::Quaternion => {
            let q = Quaternion::from_array([a[0], a[1], a[2], a[3]])
                * Quaternion::from_array([b[0], b[1], b[2], b[3]]);
            q.to_array().to_vec()
        }
        AlgebraTag::DualQuaternion => {
            let mut x = [0.0; 8];
            let mut y = [0.0; 8];
            x.copy_from_slice(&a[..8]);
            y.copy_from_slice(&b[..8]);
            (DualQuaternion::from_array(x) * DualQuaternion::from_array(y)).to_array().to_vec()
        }
    }
}

/// One nonzero entry of the left-multiplication matrix:
/// `M(w)[row][col] += sign * w[weight]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductTerm {
    pub weight: usize,
    pub row: usize,
    pub col: usize,
    pub sign: f64,
}

/// Sparse structure of left multiplication, enumerated from `e_k ⊗ e_c`.
pub fn product_terms(tag: AlgebraTag) -> &'static [ProductTerm] {
    static TABLES: [OnceLock<Vec<ProductTerm>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match tag {
        AlgebraTag::Real => 0,
        AlgebraTag::Quaternion => 1,
        AlgebraTag::DualQuaternion => 2,
    };
    TABLES[slot].get_or_init(|| {
        let dim = tag.dim();
        let mut terms = Vec::new();
        for weight in 0..dim {
            for col in 0..dim {
                let prod = algebra_mul(tag, &basis(dim, weight), &basis(dim, col));
                for (row, &v) in prod.iter().enumerate() {
                    if v != 0.0 {
                        terms.push(ProductTerm { weight, row, col, sign: v });
                    }
                }
            }
        }
        terms
    })
}

fn basis(dim: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

/// Real `dim × dim` matrix `M` with `flatten(w ⊗ x) = M · flatten(x)`.
pub fn block_matrix_of(w: &[f64], tag: AlgebraTag) -> Vec<Vec<f64>> {
    let dim = tag.dim();
    let mut m = vec![vec![0.0; dim]; dim];
    for t in product_terms(tag) {
        m[t.row][t.col] += t.sign * w[t.weight];
    }
    m
}

/// Nonlinearity applied independently to every real component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    SplitRelu,
    SplitSigmoid,
    SplitTanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::SplitRelu => v.max(0.0),
            Activation::SplitSigmoid => sigmoid(v),
            Activation::SplitTanh => v.tanh(),
        }
    }

    /// Derivative at pre-activation `v`.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::SplitRelu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::SplitSigmoid => {
                let s = sigmoid(v);
                s * (1.0 - s)
            }
            Activation::SplitTanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Uniform read/write access to every trainable real, in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(NnError::ShapeMismatch { expected: n, got: flat.len() });
        }
        let mut off = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        Ok(())
    }
}

/// Weights and biases of one dense layer; also used for its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    algebra: AlgebraTag,
    fan_in: usize,
    fan_out: usize,
    /// `fan_out × fan_in` grid, row-major, components fastest.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_for(layer: &DenseLayer) -> Self {
        Self { weights: vec![0.0; layer.weights.len()], biases: vec![0.0; layer.biases.len()] }
    }
}

impl Parameters for DenseGrad {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.biases);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.biases);
    }
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
}

impl DenseLayer {
    /// Components drawn uniformly from `[-k, k]`, `k = 1/sqrt(dim·fan_in)`; zero biases.
    pub fn new(
        algebra: AlgebraTag,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let dim = algebra.dim();
        let k = 1.0 / ((dim * fan_in.max(1)) as f64).sqrt();
        let weights = (0..fan_out * fan_in * dim).map(|_| rng.random_range(-k..=k)).collect();
        Self { algebra, fan_in, fan_out, weights, biases: vec![0.0; fan_out * dim], activation }
    }

    pub fn zeros(algebra: AlgebraTag, fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        let dim = algebra.dim();
        Self {
            algebra,
            fan_in,
            fan_out,
            weights: vec![0.0; fan_out * fan_in * dim],
            biases: vec![0.0; fan_out * dim],
            activation,
        }
    }

    pub fn from_parts(
        algebra: AlgebraTag,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self, NnError> {
        let dim = algebra.dim();
        if weights.len() != fan_out * fan_in * dim {
            return Err(NnError::ShapeMismatch { expected: fan_out * fan_in * dim, got: weights.len() });
        }
        if biases.len() != fan_out * dim {
            return Err(NnError::ShapeMismatch { expected: fan_out * dim, got: biases.len() });
        }
        Ok(Self { algebra, fan_in, fan_out, weights, biases, activation })
    }

    pub fn algebra(&self) -> AlgebraTag {
        self.algebra
    }
    pub fn fan_in(&self) -> usize {
        self.fan_in
    }
    pub fn fan_out(&self) -> usize {
        self.fan_out
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// The algebra weight connecting input unit `i` to output unit `j`.
    pub fn weight(&self, j: usize, i: usize) -> &[f64] {
        let dim = self.algebra.dim();
        let off = (j * self.fan_in + i) * dim;
        &self.weights[off..off + dim]
    }

    pub fn weight_mut(&mut self, j: usize, i: usize) -> &mut [f64] {
        let dim = self.algebra.dim();
        let off = (j * self.fan_in + i) * dim;
        &mut self.weights[off..off + dim]
    }

    pub fn bias_mut(&mut self, j: usize) -> &mut [f64] {
        let dim = self.algebra.dim();
        &mut self.biases[j * dim..(j + 1) * dim]
    }

    pub fn input_width(&self) -> usize {
        self.fan_in * self.algebra.dim()
    }

    pub fn output_width(&self) -> usize {
        self.fan_out * self.algebra.dim()
    }

    /// Real parameters: `dim·(fan_in·fan_out + fan_out)`.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Real parameters in the weight grid alone.
    pub fn weight_grid_count(&self) -> usize {
        self.weights.len()
    }

    /// Pre-activation `Σ_i w_ji ⊗ x_i + b_j`, flattened.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_width() {
            return Err(NnError::DimensionMismatch { expected: self.input_width(), got: x.len() });
        }
        let dim = self.algebra.dim();
        let mut out = self.biases.clone();
        if dim == 1 {
            for (j, o) in out.iter_mut().enumerate() {
                let row = &self.weights[j * self.fan_in..(j + 1) * self.fan_in];
                *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            return Ok(out);
        }
        let terms = product_terms(self.algebra);
        for j in 0..self.fan_out {
            let o = &mut out[j * dim..(j + 1) * dim];
            for i in 0..self.fan_in {
                let w = self.weight(j, i);
                let xi = &x[i * dim..(i + 1) * dim];
                for t in terms {
                    o[t.row] += t.sign * w[t.weight] * xi[t.col];
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
        let pre = self.affine(x)?;
        let y = pre.iter().map(|&v| self.activation.apply(v)).collect();
        Ok((y, DenseCache { input: x.to_vec(), pre_activation: pre }))
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: &DenseCache, grad_out: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
        let delta: Vec<f64> = grad_out
            .iter()
            .zip(&cache.pre_activation)
            .map(|(g, &p)| g * self.activation.derivative(p))
            .collect();
        self.backward_affine(&cache.input, &delta, grad)
    }

    /// Backward pass of the affine part given the pre-activation gradient.
    pub fn backward_affine(&self, input: &[f64], delta: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
        let dim = self.algebra.dim();
        let mut grad_in = vec![0.0; self.input_width()];
        for (b, d) in grad.biases.iter_mut().zip(delta) {
            *b += d;
        }
        if dim == 1 {
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let base = j * self.fan_in;
                for i in 0..self.fan_in {
                    grad.weights[base + i] += d * input[i];
                    grad_in[i] += d * self.weights[base + i];
                }
            }
            return grad_in;
        }
        let terms = product_terms(self.algebra);
        for j in 0..self.fan_out {
            let dj = &delta[j * dim..(j + 1) * dim];
            for i in 0..self.fan_in {
                let off = (j * self.fan_in + i) * dim;
                let w = &self.weights[off..off + dim];
                let xi = &input[i * dim..(i + 1) * dim];
                let gw = &mut grad.weights[off..off + dim];
                let gx = &mut grad_in[i * dim..(i + 1) * dim];
                for t in terms {
                    let d = t.sign * dj[t.row];
                    gw[t.weight] += d * xi[t.col];
                    gx[t.col] += d * w[t.weight];
                }
            }
        }
        grad_in
    }

    /// Assembled real weight matrix (`output_width × input_width`).
    pub fn to_real_matrix(&self) -> Vec<Vec<f64>> {
        let dim = self.algebra.dim();
        let mut m = vec![vec![0.0; self.input_width()]; self.output_width()];
        for j in 0..self.fan_out {
            for i in 0..self.fan_in {
                let block = block_matrix_of(self.weight(j, i), self.algebra);
                for (r, row) in block.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        m[j * dim + r][i * dim + c] = *v;
                    }
                }
            }
        }
        m
    }
}

impl Parameters for DenseLayer {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.biases);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.biases);
    }
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// A chain of dense layers over one algebra.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    layers: Vec<DenseCache>,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrad>,
}

impl Parameters for MlpGrads {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

impl Mlp {
    /// `widths` counts algebra units per layer, input first.
    pub fn new(
        algebra: AlgebraTag,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::InvalidConfig(format!("bad layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let act = if l + 1 == n { output } else { hidden };
                DenseLayer::new(algebra, widths[l], widths[l + 1], act, &mut rng)
            })
            .collect();
        Ok(Self { layers, generation: next_generation() })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        let first = layers.first().ok_or_else(|| NnError::InvalidConfig("no layers".into()))?;
        let algebra = first.algebra;
        for pair in layers.windows(2) {
            if pair[1].algebra != algebra {
                return Err(NnError::AlgebraMismatch(algebra, pair[1].algebra));
            }
            if pair[0].fan_out != pair[1].fan_in {
                return Err(NnError::DimensionMismatch { expected: pair[0].fan_out, got: pair[1].fan_in });
            }
        }
        Ok(Self { layers, generation: next_generation() })
    }

    pub fn algebra(&self) -> AlgebraTag {
        self.layers[0].algebra
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Unit counts per layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in];
        w.extend(self.layers.iter().map(|l| l.fan_out));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn weight_grid_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::weight_grid_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let (y, c) = layer.forward(&cur)?;
            caches.push(c);
            cur = y;
        }
        Ok((cur, MlpCache { layers: caches, generation: self.generation }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let pre = layer.affine(&cur)?;
            cur = pre.into_iter().map(|v| layer.activation.apply(v)).collect();
        }
        Ok(cur)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads { layers: self.layers.iter().map(DenseGrad::zeros_for).collect() }
    }

    /// Gradients of a scalar loss given `loss_grad = ∂L/∂y`.
    pub fn backward(&self, cache: &MlpCache, loss_grad: &[f64]) -> Result<MlpGrads, NnError> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but accumulates into existing gradients.
    pub fn backward_into(
        &self,
        cache: &MlpCache,
        loss_grad: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>, NnError> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        if loss_grad.len() != self.output_width() {
            return Err(NnError::DimensionMismatch { expected: self.output_width(), got: loss_grad.len() });
        }
        let mut g = loss_grad.to_vec();
        for ((layer, c), lg) in self.layers.iter().zip(&cache.layers).zip(&mut grads.layers).rev() {
            g = layer.backward(c, &g, lg);
        }
        Ok(g)
    }
}

impl Parameters for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.generation = next_generation();
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    optimizer: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, n_params: usize) -> Self {
        let n = match optimizer {
            Optimizer::Sgd => 0,
            Optimizer::Adam { .. } => n_params,
        };
        Self { optimizer, m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::ShapeMismatch { expected: params.len(), got: grads.len() });
        }
        self.step += 1;
        match self.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                if self.m.len() != params.len() {
                    return Err(NnError::ShapeMismatch { expected: self.m.len(), got: params.len() });
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    FullBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub batch: Batch,
    pub seed: u64,
}

impl TrainConfig {
    pub fn sgd(epochs: usize, learning_rate: f64) -> Self {
        Self { epochs, learning_rate, optimizer: Optimizer::Sgd, batch: Batch::FullBatch, seed: 0 }
    }

    pub fn adam(epochs: usize, learning_rate: f64) -> Self {
        Self { epochs, learning_rate, optimizer: Optimizer::adam(), batch: Batch::FullBatch, seed: 0 }
    }

    /// `lr = 0` is accepted so that a run can be used as a no-op probe.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Full-batch mean squared error over every output component, and its gradient.
pub fn batch_loss(
    m: &Mlp,
    data: &WindowDataset,
    want_grads: bool,
) -> Result<(f64, Option<MlpGrads>), NnError> {
    let n = data.samples.len();
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    let width = m.output_width();
    let scale = 1.0 / (n * width) as f64;
    let mut loss = 0.0;
    let mut grads = want_grads.then(|| m.zero_grads());
    for s in &data.samples {
        if s.target.len() != width {
            return Err(NnError::DimensionMismatch { expected: width, got: s.target.len() });
        }
        let (y, cache) = m.forward(&s.input)?;
        let mut g = vec![0.0; width];
        for r in 0..width {
            let e = y[r] - s.target[r];
            loss += e * e;
            g[r] = 2.0 * e * scale;
        }
        if let Some(gr) = grads.as_mut() {
            m.backward_into(&cache, &g, gr)?;
        }
    }
    Ok((loss * scale, grads))
}

/// Trains with full-batch gradient steps. The history holds the training
/// loss measured before each epoch's update.
pub fn train_mlp(
    mut m: Mlp,
    data: &WindowDataset,
    config: &TrainConfig,
) -> Result<(Mlp, Vec<f64>), NnError> {
    config.validate()?;
    if data.samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if data.algebra != m.algebra() {
        return Err(NnError::AlgebraMismatch(m.algebra(), data.algebra));
    }
    let mut state = OptimizerState::new(config.optimizer, m.num_params());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = batch_loss(&m, data, true)?;
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch, loss });
        }
        history.push(loss);
        let grads = grads.expect("gradients requested").to_flat();
        let mut params = m.to_flat();
        state.step(&mut params, &grads, config.learning_rate)?;
        m.load_flat(&params)?;
    }
    Ok((m, history))
}
