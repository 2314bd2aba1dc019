//! Pose encoding and the LSTM variational autoencoder used for pose forecasting.
//!
//! A pose frame is stored per joint as the dual quaternion
//! `c + ε (p − c)`: the primal vector carries the center of mass `c` (global
//! motion) and the dual vector the joint offset (local pose). Models consume
//! the flattened encoding, 8 reals per joint, regardless of their algebra;
//! only the grouping of those reals into algebra units changes.
//!
//! The decoder is autoregressive and residual: step `k` receives the latent
//! code and the previous frame and emits `previous + Δ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{DualQuaternion, Point3, Quaternion};
use crate::nn::{
    sigmoid, Activation, AlgebraTag, DenseCache, DenseGrad, DenseLayer, NnError, OptimizerState, Parameters,
    TrainConfig,
};

pub const NUM_JOINTS: usize = 13;
/// Reals per encoded joint.
pub const JOINT_WIDTH: usize = 8;
pub const LOGVAR_MIN: f64 = -60.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeqError {
    #[error("observed sequence is empty")]
    EmptySequence,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub center: Point3,
    pub joints: [Point3; NUM_JOINTS],
}

impl PoseFrame {
    pub fn translated(&self, d: Point3) -> Self {
        let mut joints = self.joints;
        joints.iter_mut().for_each(|j| *j = *j + d);
        Self { center: self.center + d, joints }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub t_obs: usize,
    pub t_fut: usize,
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>, t_obs: usize, t_fut: usize) -> Result<Self, SeqError> {
        if t_obs == 0 || t_fut == 0 {
            return Err(SeqError::InvalidConfig("t_obs and t_fut must be at least 1".into()));
        }
        if frames.len() != t_obs + t_fut {
            return Err(SeqError::ShapeMismatch { expected: t_obs + t_fut, got: frames.len() });
        }
        Ok(Self { frames, t_obs, t_fut })
    }

    pub fn observed(&self) -> &[PoseFrame] {
        &self.frames[..self.t_obs]
    }

    pub fn future(&self) -> &[PoseFrame] {
        &self.frames[self.t_obs..]
    }
}

/// One dual quaternion per joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqPoseVector {
    pub entries: [DualQuaternion; NUM_JOINTS],
}

impl DqPoseVector {
    pub fn to_flat(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| e.to_array()).collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self, SeqError> {
        if v.len() != NUM_JOINTS * JOINT_WIDTH {
            return Err(SeqError::ShapeMismatch { expected: NUM_JOINTS * JOINT_WIDTH, got: v.len() });
        }
        let mut entries = [DualQuaternion::default(); NUM_JOINTS];
        for (e, chunk) in entries.iter_mut().zip(v.chunks_exact(JOINT_WIDTH)) {
            let mut a = [0.0; 8];
            a.copy_from_slice(chunk);
            *e = DualQuaternion::from_array(a);
        }
        Ok(Self { entries })
    }
}

pub fn encode_pose(f: &PoseFrame) -> DqPoseVector {
    let mut entries = [DualQuaternion::default(); NUM_JOINTS];
    for (e, j) in entries.iter_mut().zip(&f.joints) {
        *e = DualQuaternion::new(Quaternion::pure(f.center), Quaternion::pure(*j - f.center));
    }
    DqPoseVector { entries }
}

/// Center is the mean of the primal vectors; scalar parts are ignored.
pub fn decode_pose(v: &DqPoseVector) -> PoseFrame {
    let center = v
        .entries
        .iter()
        .fold(Point3::ZERO, |a, e| a + e.primal.vector())
        .scale(1.0 / NUM_JOINTS as f64);
    let mut joints = [Point3::ZERO; NUM_JOINTS];
    for (j, e) in joints.iter_mut().zip(&v.entries) {
        *j = center + e.dual.vector();
    }
    PoseFrame { center, joints }
}

pub fn encode_frames(frames: &[PoseFrame]) -> Vec<Vec<f64>> {
    frames.iter().map(|f| encode_pose(f).to_flat()).collect()
}

pub fn decode_frames(frames: &[Vec<f64>]) -> Result<Vec<PoseFrame>, SeqError> {
    frames.iter().map(|f| DqPoseVector::from_flat(f).map(|v| decode_pose(&v))).collect()
}

const GATES: usize = 4;
const GATE_IN: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_OUT: usize = 2;
const GATE_CAND: usize = 3;

/// LSTM cell whose gate maps are algebra-valued dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DqLstmCell {
    algebra: AlgebraTag,
    input_size: usize,
    hidden_size: usize,
    /// Input → gate maps, ordered input, forget, output, candidate.
    input_maps: Vec<DenseLayer>,
    /// Hidden → gate maps, same order.
    hidden_maps: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqLstmGrad {
    pub input_maps: Vec<DenseGrad>,
    pub hidden_maps: Vec<DenseGrad>,
}

impl Parameters for DqLstmGrad {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.input_maps.iter().chain(&self.hidden_maps).for_each(|g| g.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.input_maps.iter_mut().chain(&mut self.hidden_maps).for_each(|g| g.visit_mut(f));
    }
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; GATES],
    tanh_c: Vec<f64>,
}

impl DqLstmCell {
    pub fn new(algebra: AlgebraTag, input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let mut mk = |fan_in: usize| -> Vec<DenseLayer> {
            (0..GATES)
                .map(|_| DenseLayer::new(algebra, fan_in, hidden_size, Activation::Identity, rng))
                .collect()
        };
        let input_maps = mk(input_size);
        let hidden_maps = mk(hidden_size);
        Self { algebra, input_size, hidden_size, input_maps, hidden_maps }
    }

    pub fn zeros(algebra: AlgebraTag, input_size: usize, hidden_size: usize) -> Self {
        let mk = |fan_in| (0..GATES).map(|_| DenseLayer::zeros(algebra, fan_in, hidden_size, Activation::Identity)).collect();
        Self { algebra, input_size, hidden_size, input_maps: mk(input_size), hidden_maps: mk(hidden_size) }
    }

    pub fn algebra(&self) -> AlgebraTag {
        self.algebra
    }
    pub fn input_size(&self) -> usize {
        self.input_size
    }
    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// Reals in the hidden and cell states.
    pub fn state_width(&self) -> usize {
        self.hidden_size * self.algebra.dim()
    }

    pub fn input_width(&self) -> usize {
        self.input_size * self.algebra.dim()
    }

    pub fn zero_grad(&self) -> DqLstmGrad {
        DqLstmGrad {
            input_maps: self.input_maps.iter().map(DenseGrad::zeros_for).collect(),
            hidden_maps: self.hidden_maps.iter().map(DenseGrad::zeros_for).collect(),
        }
    }

    pub fn weight_grid_count(&self) -> usize {
        self.input_maps.iter().chain(&self.hidden_maps).map(DenseLayer::weight_grid_count).sum()
    }

    /// `(input, forget, output, candidate)` input→gate layers, mutable.
    pub fn input_maps_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.input_maps
    }

    pub fn hidden_maps_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.hidden_maps
    }

    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache), SeqError> {
        let sw = self.state_width();
        if h.len() != sw || c.len() != sw {
            return Err(NnError::DimensionMismatch { expected: sw, got: h.len().min(c.len()) }.into());
        }
        let mut gates: [Vec<f64>; GATES] = Default::default();
        for k in 0..GATES {
            let mut a = self.input_maps[k].affine(x)?;
            let b = self.hidden_maps[k].affine(h)?;
            a.iter_mut().zip(&b).for_each(|(u, v)| *u += v);
            if k == GATE_CAND {
                a.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                a.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            gates[k] = a;
        }
        let mut c_new = vec![0.0; sw];
        let mut h_new = vec![0.0; sw];
        let mut tanh_c = vec![0.0; sw];
        for r in 0..sw {
            c_new[r] = gates[GATE_FORGET][r] * c[r] + gates[GATE_IN][r] * gates[GATE_CAND][r];
            tanh_c[r] = c_new[r].tanh();
            h_new[r] = gates[GATE_OUT][r] * tanh_c[r];
        }
        let cache = LstmStepCache { x: x.to_vec(), h_prev: h.to_vec(), c_prev: c.to_vec(), gates, tanh_c };
        Ok((h_new, c_new, cache))
    }

    /// Returns `(dx, dh_prev, dc_prev)` and accumulates parameter gradients.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut DqLstmGrad,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sw = self.state_width();
        let g = &cache.gates;
        let mut dpre: [Vec<f64>; GATES] = [vec![0.0; sw], vec![0.0; sw], vec![0.0; sw], vec![0.0; sw]];
        let mut dc_prev = vec![0.0; sw];
        for r in 0..sw {
            let t = cache.tanh_c[r];
            let dct = dc[r] + dh[r] * g[GATE_OUT][r] * (1.0 - t * t);
            let (i, f, o, cand) = (g[GATE_IN][r], g[GATE_FORGET][r], g[GATE_OUT][r], g[GATE_CAND][r]);
            dpre[GATE_OUT][r] = dh[r] * t * o * (1.0 - o);
            dpre[GATE_FORGET][r] = dct * cache.c_prev[r] * f * (1.0 - f);
            dpre[GATE_IN][r] = dct * cand * i * (1.0 - i);
            dpre[GATE_CAND][r] = dct * i * (1.0 - cand * cand);
            dc_prev[r] = dct * f;
        }
        let mut dx = vec![0.0; cache.x.len()];
        let mut dh_prev = vec![0.0; sw];
        for k in 0..GATES {
            let gx = self.input_maps[k].backward_affine(&cache.x, &dpre[k], &mut grad.input_maps[k]);
            let gh = self.hidden_maps[k].backward_affine(&cache.h_prev, &dpre[k], &mut grad.hidden_maps[k]);
            dx.iter_mut().zip(&gx).for_each(|(a, b)| *a += b);
            dh_prev.iter_mut().zip(&gh).for_each(|(a, b)| *a += b);
        }
        (dx, dh_prev, dc_prev)
    }
}

impl Parameters for DqLstmCell {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.input_maps.iter().chain(&self.hidden_maps).for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.input_maps.iter_mut().chain(&mut self.hidden_maps).for_each(|l| l.visit_mut(f));
    }
}

/// One recurrence step, returning `(h', c')`.
pub fn dqlstm_step(cell: &DqLstmCell, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SeqError> {
    cell.step(x, h, c).map(|(h, c, _)| (h, c))
}

/// Widths in algebra units; `frame_units · dim` is the encoded frame width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub algebra: AlgebraTag,
    pub frame_units: usize,
    pub hidden: usize,
    pub latent: usize,
    pub kl_weight: f64,
}

impl VaeConfig {
    /// Architecture for `joints` joints with dual-quaternion widths `hidden`
    /// and `latent`, rescaled so every algebra has the same real widths.
    pub fn scaled(algebra: AlgebraTag, joints: usize, dq_hidden: usize, dq_latent: usize, kl_weight: f64) -> Self {
        let ratio = AlgebraTag::DualQuaternion.dim() / algebra.dim();
        Self {
            algebra,
            frame_units: joints * ratio,
            hidden: dq_hidden * ratio,
            latent: dq_latent * ratio,
            kl_weight,
        }
    }

    pub fn frame_width(&self) -> usize {
        self.frame_units * self.algebra.dim()
    }

    pub fn latent_width(&self) -> usize {
        self.latent * self.algebra.dim()
    }

    fn validate(&self) -> Result<(), SeqError> {
        if self.frame_units == 0 || self.hidden == 0 || self.latent == 0 {
            return Err(SeqError::InvalidConfig("widths must be positive".into()));
        }
        if !(self.kl_weight >= 0.0) {
            return Err(SeqError::InvalidConfig("kl_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Encoder LSTM → (mean, log-variance) heads; decoder of two stacked LSTMs and an output head.
#[derive(Debug, Clone, PartialEq)]
pub struct DqVae {
    pub config: VaeConfig,
    pub encoder: DqLstmCell,
    pub mean_head: DenseLayer,
    pub logvar_head: DenseLayer,
    pub decoder1: DqLstmCell,
    pub decoder2: DqLstmCell,
    pub output_head: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrad {
    pub encoder: DqLstmGrad,
    pub mean_head: DenseGrad,
    pub logvar_head: DenseGrad,
    pub decoder1: DqLstmGrad,
    pub decoder2: DqLstmGrad,
    pub output_head: DenseGrad,
}

impl Parameters for VaeGrad {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        self.mean_head.visit(f);
        self.logvar_head.visit(f);
        self.decoder1.visit(f);
        self.decoder2.visit(f);
        self.output_head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.mean_head.visit_mut(f);
        self.logvar_head.visit_mut(f);
        self.decoder1.visit_mut(f);
        self.decoder2.visit_mut(f);
        self.output_head.visit_mut(f);
    }
}

impl Parameters for DqVae {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        self.mean_head.visit(f);
        self.logvar_head.visit(f);
        self.decoder1.visit(f);
        self.decoder2.visit(f);
        self.output_head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.mean_head.visit_mut(f);
        self.logvar_head.visit_mut(f);
        self.decoder1.visit_mut(f);
        self.decoder2.visit_mut(f);
        self.output_head.visit_mut(f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    Sample(u64),
    MeanOnly,
}

#[derive(Debug, Clone)]
pub struct VaeOutput {
    pub predicted: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct VaeTrace {
    encoder: Vec<LstmStepCache>,
    mean_cache: DenseCache,
    logvar_cache: DenseCache,
    noise: Vec<f64>,
    decoder1: Vec<LstmStepCache>,
    decoder2: Vec<LstmStepCache>,
    output: Vec<DenseCache>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// `KL(N(mean, diag exp(logvar)) ‖ N(0, I))` with the log-variance clamped.
pub fn kl_divergence(mean: &[f64], logvar: &[f64]) -> f64 {
    mean.iter()
        .zip(logvar)
        .map(|(m, lv)| {
            let lv = lv.clamp(LOGVAR_MIN, LOGVAR_MAX);
            0.5 * (lv.exp() + m * m - 1.0 - lv)
        })
        .sum()
}

/// Summed squared error over the predicted frames plus `kl_weight · KL`.
pub fn vae_loss(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    mean: &[f64],
    logvar: &[f64],
    kl_weight: f64,
) -> Result<VaeLoss, SeqError> {
    if pred.len() != truth.len() {
        return Err(SeqError::ShapeMismatch { expected: truth.len(), got: pred.len() });
    }
    if mean.len() != logvar.len() {
        return Err(SeqError::ShapeMismatch { expected: mean.len(), got: logvar.len() });
    }
    let mut recon = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(SeqError::ShapeMismatch { expected: t.len(), got: p.len() });
        }
        recon += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let kl = kl_divergence(mean, logvar);
    Ok(VaeLoss { total: recon + kl_weight * kl, recon, kl })
}

fn add_into(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

impl DqVae {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self, SeqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = config.algebra;
        let encoder = DqLstmCell::new(a, config.frame_units, config.hidden, &mut rng);
        let mean_head = DenseLayer::new(a, config.hidden, config.latent, Activation::Identity, &mut rng);
        let logvar_head = DenseLayer::new(a, config.hidden, config.latent, Activation::Identity, &mut rng);
        let decoder1 = DqLstmCell::new(a, config.latent + config.frame_units, config.hidden, &mut rng);
        let decoder2 = DqLstmCell::new(a, config.hidden, config.hidden, &mut rng);
        let output_head = DenseLayer::new(a, config.hidden, config.frame_units, Activation::Identity, &mut rng);
        Ok(Self { config, encoder, mean_head, logvar_head, decoder1, decoder2, output_head })
    }

    pub fn zero_grad(&self) -> VaeGrad {
        VaeGrad {
            encoder: self.encoder.zero_grad(),
            mean_head: DenseGrad::zeros_for(&self.mean_head),
            logvar_head: DenseGrad::zeros_for(&self.logvar_head),
            decoder1: self.decoder1.zero_grad(),
            decoder2: self.decoder2.zero_grad(),
            output_head: DenseGrad::zeros_for(&self.output_head),
        }
    }

    pub fn param_count(&self) -> usize {
        self.num_params()
    }

    pub fn weight_grid_count(&self) -> usize {
        self.encoder.weight_grid_count()
            + self.mean_head.weight_grid_count()
            + self.logvar_head.weight_grid_count()
            + self.decoder1.weight_grid_count()
            + self.decoder2.weight_grid_count()
            + self.output_head.weight_grid_count()
    }

    pub fn forward(&self, observed: &[Vec<f64>], t_fut: usize, mode: LatentMode) -> Result<VaeOutput, SeqError> {
        self.forward_traced(observed, t_fut, mode).map(|(o, _)| o)
    }

    pub fn forward_traced(
        &self,
        observed: &[Vec<f64>],
        t_fut: usize,
        mode: LatentMode,
    ) -> Result<(VaeOutput, VaeTrace), SeqError> {
        let fw = self.config.frame_width();
        let last = observed.last().ok_or(SeqError::EmptySequence)?;
        if let Some(bad) = observed.iter().find(|f| f.len() != fw) {
            return Err(SeqError::ShapeMismatch { expected: fw, got: bad.len() });
        }
        let sw = self.encoder.state_width();
        let (mut h, mut c) = (vec![0.0; sw], vec![0.0; sw]);
        let mut enc = Vec::with_capacity(observed.len());
        for x in observed {
            let (h2, c2, cache) = self.encoder.step(x, &h, &c)?;
            enc.push(cache);
            h = h2;
            c = c2;
        }
        let (mean, mean_cache) = self.mean_head.forward(&h)?;
        let (logvar, logvar_cache) = self.logvar_head.forward(&h)?;
        let noise: Vec<f64> = match mode {
            LatentMode::MeanOnly => vec![0.0; mean.len()],
            LatentMode::Sample(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..mean.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        };
        let z: Vec<f64> = mean
            .iter()
            .zip(&logvar)
            .zip(&noise)
            .map(|((m, lv), e)| m + (0.5 * lv.clamp(LOGVAR_MIN, LOGVAR_MAX)).exp() * e)
            .collect();

        let dw = self.decoder1.state_width();
        let (mut h1, mut c1, mut h2, mut c2) = (vec![0.0; dw], vec![0.0; dw], vec![0.0; dw], vec![0.0; dw]);
        let mut prev = last.clone();
        let mut predicted = Vec::with_capacity(t_fut);
        let (mut d1, mut d2, mut out) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..t_fut {
            let mut input = z.clone();
            input.extend_from_slice(&prev);
            let (nh1, nc1, k1) = self.decoder1.step(&input, &h1, &c1)?;
            let (nh2, nc2, k2) = self.decoder2.step(&nh1, &h2, &c2)?;
            let (delta, ko) = self.output_head.forward(&nh2)?;
            let frame: Vec<f64> = prev.iter().zip(&delta).map(|(p, d)| p + d).collect();
            d1.push(k1);
            d2.push(k2);
            out.push(ko);
            (h1, c1, h2, c2) = (nh1, nc1, nh2, nc2);
            predicted.push(frame.clone());
            prev = frame;
        }
        let trace = VaeTrace { encoder: enc, mean_cache, logvar_cache, noise, decoder1: d1, decoder2: d2, output: out };
        Ok((VaeOutput { predicted, mean, logvar }, trace))
    }

    /// Gradients of `vae_loss` for one sequence, accumulated into `grad` scaled by `scale`.
    pub fn backward(
        &self,
        out: &VaeOutput,
        trace: &VaeTrace,
        truth: &[Vec<f64>],
        scale: f64,
        grad: &mut VaeGrad,
    ) -> Result<(), SeqError> {
        let t_fut = out.predicted.len();
        if truth.len() != t_fut {
            return Err(SeqError::ShapeMismatch { expected: t_fut, got: truth.len() });
        }
        let fw = self.config.frame_width();
        let lw = self.config.latent_width();
        let dw = self.decoder1.state_width();
        let mut dz = vec![0.0; lw];
        let mut carry_frame = vec![0.0; fw];
        let (mut dh1, mut dc1, mut dh2, mut dc2) = (vec![0.0; dw], vec![0.0; dw], vec![0.0; dw], vec![0.0; dw]);
        for k in (0..t_fut).rev() {
            let mut g: Vec<f64> =
                out.predicted[k].iter().zip(&truth[k]).map(|(p, t)| 2.0 * (p - t) * scale).collect();
            add_into(&mut g, &carry_frame);
            let dh_out =
                self.output_head.backward(&trace.output[k], &g, &mut grad.output_head);
            add_into(&mut dh2, &dh_out);
            let (dx2, dh2p, dc2p) = self.decoder2.step_backward(&trace.decoder2[k], &dh2, &dc2, &mut grad.decoder2);
            add_into(&mut dh1, &dx2);
            let (dx1, dh1p, dc1p) = self.decoder1.step_backward(&trace.decoder1[k], &dh1, &dc1, &mut grad.decoder1);
            (dh1, dc1, dh2, dc2) = (dh1p, dc1p, dh2p, dc2p);
            add_into(&mut dz, &dx1[..lw]);
            // residual path plus the frame fed to the decoder
            carry_frame = g;
            add_into(&mut carry_frame, &dx1[lw..]);
        }
        let beta = self.config.kl_weight * scale;
        let mut dmean = dz.clone();
        let mut dlogvar = vec![0.0; lw];
        for r in 0..lw {
            let lv = out.logvar[r];
            dmean[r] += beta * out.mean[r];
            if (LOGVAR_MIN..=LOGVAR_MAX).contains(&lv) {
                let std = (0.5 * lv).exp();
                dlogvar[r] = dz[r] * 0.5 * std * trace.noise[r] + beta * 0.5 * (lv.exp() - 1.0);
            }
        }
        let mut dh = self.mean_head.backward(&trace.mean_cache, &dmean, &mut grad.mean_head);
        add_into(&mut dh, &self.logvar_head.backward(&trace.logvar_cache, &dlogvar, &mut grad.logvar_head));
        let sw = self.encoder.state_width();
        let mut dc = vec![0.0; sw];
        for cache in trace.encoder.iter().rev() {
            let (_, dhp, dcp) = self.encoder.step_backward(cache, &dh, &dc, &mut grad.encoder);
            dh = dhp;
            dc = dcp;
        }
        Ok(())
    }

    /// Mean loss over `batch` and, optionally, its gradient. Sequence `i`
    /// samples its latent noise from `noise_seed + i`.
    pub fn batch_loss(
        &self,
        batch: &[EncodedSequence],
        noise_seed: Option<u64>,
        want_grad: bool,
    ) -> Result<(VaeLoss, Option<VaeGrad>), SeqError> {
        if batch.is_empty() {
            return Err(SeqError::EmptyDataset);
        }
        let scale = 1.0 / batch.len() as f64;
        let per_seq: Vec<Result<(VaeLoss, Option<VaeGrad>), SeqError>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mode = match noise_seed {
                    Some(seed) => LatentMode::Sample(seed.wrapping_add(i as u64)),
                    None => LatentMode::MeanOnly,
                };
                let (out, trace) = self.forward_traced(&s.observed, s.future.len(), mode)?;
                let loss = vae_loss(&out.predicted, &s.future, &out.mean, &out.logvar, self.config.kl_weight)?;
                let grad = if want_grad {
                    let mut g = self.zero_grad();
                    self.backward(&out, &trace, &s.future, scale, &mut g)?;
                    Some(g)
                } else {
                    None
                };
                Ok((loss, grad))
            })
            .collect();
        let mut total = VaeLoss { total: 0.0, recon: 0.0, kl: 0.0 };
        let mut grad: Option<Vec<f64>> = None;
        for r in per_seq {
            let (l, g) = r?;
            total.total += l.total * scale;
            total.recon += l.recon * scale;
            total.kl += l.kl * scale;
            if let Some(g) = g {
                let flat = g.to_flat();
                match grad.as_mut() {
                    None => grad = Some(flat),
                    Some(acc) => add_into(acc, &flat),
                }
            }
        }
        let grad = match grad {
            Some(flat) => {
                let mut g = self.zero_grad();
                g.load_flat(&flat)?;
                Some(g)
            }
            None => None,
        };
        Ok((total, grad))
    }
}

pub fn vae_forward(
    model: &DqVae,
    observed: &[Vec<f64>],
    t_fut: usize,
    mode: LatentMode,
) -> Result<VaeOutput, SeqError> {
    model.forward(observed, t_fut, mode)
}

/// Encoded observed and future frames of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub observed: Vec<Vec<f64>>,
    pub future: Vec<Vec<f64>>,
}

impl EncodedSequence {
    pub fn from_sequence(s: &PoseSequence) -> Self {
        Self { observed: encode_frames(s.observed()), future: encode_frames(s.future()) }
    }
}

pub fn encode_dataset(data: &[PoseSequence]) -> Vec<EncodedSequence> {
    data.iter().map(EncodedSequence::from_sequence).collect()
}

/// Halves the learning rate after `patience` epochs without a relative
/// improvement of `threshold`, never going below `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub floor: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64) -> Self {
        Self { lr, factor: 0.5, patience: 100, threshold: 1e-4, floor: 1e-5, best: f64::INFINITY, bad_epochs: 0 }
    }

    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.floor.min(self.lr));
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub lr: f64,
}

/// Full-batch Adam training with the plateau scheduler.
pub fn train_vae(
    mut model: DqVae,
    data: &[EncodedSequence],
    config: &TrainConfig,
) -> Result<(DqVae, Vec<VaeEpoch>), SeqError> {
    config.validate()?;
    if data.is_empty() {
        return Err(SeqError::EmptyDataset);
    }
    let mut state = OptimizerState::new(config.optimizer, model.num_params());
    let mut sched = PlateauScheduler::new(config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let noise_seed = config.seed.wrapping_mul(1_000_003).wrapping_add((epoch as u64) << 20);
        let (loss, grad) = model.batch_loss(data, Some(noise_seed), true)?;
        if !loss.total.is_finite() {
            return Err(SeqError::NonFiniteLoss { epoch, loss: loss.total });
        }
        let lr = sched.lr;
        history.push(VaeEpoch { total: loss.total, recon: loss.recon, kl: loss.kl, lr });
        let g = grad.expect("gradient requested").to_flat();
        let mut p = model.to_flat();
        state.step(&mut p, &g, lr)?;
        model.load_flat(&p)?;
        sched.observe(loss.total);
    }
    Ok((model, history))
}

/// Parameters of the synthetic walking-skeleton generator. Lengths are in
/// meters and times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSynthConfig {
    pub dt: f64,
    pub start_box: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Bound on the magnitude of the constant sideways acceleration.
    pub max_accel: f64,
    pub swing_amplitude: f64,
    pub freq_min: f64,
    pub freq_max: f64,
}

impl Default for PoseSynthConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 15.0,
            start_box: 1.0,
            speed_min: 0.5,
            speed_max: 1.5,
            max_accel: 0.2,
            swing_amplitude: 0.08,
            freq_min: 0.8,
            freq_max: 1.6,
        }
    }
}

impl PoseSynthConfig {
    /// Every frame of a sequence identical.
    pub fn still() -> Self {
        Self { speed_min: 0.0, speed_max: 0.0, max_accel: 0.0, swing_amplitude: 0.0, ..Self::default() }
    }
}

/// Rest offsets from the center of mass: head, shoulders, elbows, wrists,
/// hips, knees, ankles.
pub const REST_SKELETON: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.65],
    [-0.18, 0.0, 0.45],
    [0.18, 0.0, 0.45],
    [-0.25, 0.0, 0.18],
    [-0.25, 0.0, 0.18],
    [-0.28, 0.0, -0.05],
    [0.28, 0.0, -0.05],
    [-0.1, 0.0, -0.1],
    [0.1, 0.0, -0.1],
    [-0.1, 0.0, -0.5],
    [0.1, 0.0, -0.5],
    [-0.1, 0.0, -0.9],
    [0.1, 0.0, -0.9],
];

/// Limb index per joint; joints on one limb share phase and frequency.
const LIMB_OF: [usize; NUM_JOINTS] = [0, 1, 2, 1, 2, 1, 2, 3, 4, 3, 4, 3, 4];

/// Center of mass of a generated sequence at frame `t`.
fn center_at(start: Point3, velocity: Point3, accel: Point3, t: f64) -> Point3 {
    start + velocity.scale(t) + accel.scale(0.5 * t * t)
}

/// Deterministic synthetic walking sequences.
pub fn synth_pose_dataset(
    n_sequences: usize,
    t_obs: usize,
    t_fut: usize,
    seed: u64,
    cfg: &PoseSynthConfig,
) -> Result<Vec<PoseSequence>, SeqError> {
    if n_sequences == 0 || t_obs == 0 || t_fut == 0 {
        return Err(SeqError::InvalidConfig("counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_sequences);
    for _ in 0..n_sequences {
        let b = cfg.start_box;
        let start = Point3::new(rng.random_range(-b..=b), rng.random_range(-b..=b), 1.0);
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = if cfg.speed_max > cfg.speed_min {
            rng.random_range(cfg.speed_min..cfg.speed_max)
        } else {
            cfg.speed_min
        };
        let dir = Point3::new(heading.cos(), heading.sin(), 0.0);
        let side = Point3::new(-heading.sin(), heading.cos(), 0.0);
        let accel = side.scale(if cfg.max_accel > 0.0 { rng.random_range(-cfg.max_accel..=cfg.max_accel) } else { 0.0 });
        let velocity = dir.scale(speed);
        let mut phase = [0.0; 5];
        let mut freq = [0.0; 5];
        for l in 0..5 {
            phase[l] = rng.random_range(0.0..std::f64::consts::TAU);
            freq[l] = rng.random_range(cfg.freq_min..=cfg.freq_max);
        }
        let facing = Quaternion::from_axis_angle(Point3::new(0.0, 0.0, 1.0), heading).expect("unit axis");
        let frames = (0..t_obs + t_fut)
            .map(|f| {
                let t = f as f64 * cfg.dt;
                let center = center_at(start, velocity, accel, t);
                let mut joints = [Point3::ZERO; NUM_JOINTS];
                for (j, joint) in joints.iter_mut().enumerate() {
                    let l = LIMB_OF[j];
                    let swing = cfg.swing_amplitude * (std::f64::consts::TAU * freq[l] * t + phase[l]).sin();
                    let rest = Point3::from_array(REST_SKELETON[j]) + Point3::new(0.0, swing, 0.0);
                    *joint = center + facing.rotate_point(rest).expect("unit rotation");
                }
                PoseFrame { center, joints }
            })
            .collect();
        out.push(PoseSequence::new(frames, t_obs, t_fut)?);
    }
    Ok(out)
}

/// Synthetic pose comparison of the three algebras at equal real widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseStudyConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub t_obs: usize,
    pub t_fut: usize,
    /// Dual-quaternion unit widths; other algebras are rescaled.
    pub hidden: usize,
    pub latent: usize,
    pub kl_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub synth: PoseSynthConfig,
}

impl Default for PoseStudyConfig {
    fn default() -> Self {
        Self {
            n_train: 32,
            n_val: 16,
            t_obs: 16,
            t_fut: 14,
            hidden: 8,
            latent: 4,
            kl_weight: 1e-3,
            epochs: 200,
            learning_rate: 0.01,
            synth: PoseSynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseVariantReport {
    pub algebra: AlgebraTag,
    pub vim: f64,
    pub fde: f64,
    pub val_loss: f64,
    pub final_train_loss: f64,
    pub param_count: usize,
    pub weight_grid_count: usize,
    /// Weight-grid count relative to the real model.
    pub weight_grid_ratio: f64,
    /// Mean predicted center displacement over the horizon divided by the
    /// mean ground-truth displacement.
    pub center_displacement_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseStudyReport {
    pub seed_data: u64,
    pub seed_init: u64,
    pub config: PoseStudyConfig,
    pub variants: Vec<PoseVariantReport>,
}

impl PoseStudyReport {
    pub fn variant(&self, algebra: AlgebraTag) -> Option<&PoseVariantReport> {
        self.variants.iter().find(|v| v.algebra == algebra)
    }
}

/// VIM, FDE and center displacement of MeanOnly forecasts on `data`.
pub fn evaluate_forecasts(model: &DqVae, data: &[PoseSequence]) -> Result<(f64, f64, f64, f64), SeqError> {
    if data.is_empty() {
        return Err(SeqError::EmptyDataset);
    }
    let (mut vim_sum, mut fde_sum, mut loss_sum, mut pred_disp, mut true_disp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in data {
        let enc = EncodedSequence::from_sequence(s);
        let out = model.forward(&enc.observed, s.t_fut, LatentMode::MeanOnly)?;
        loss_sum += vae_loss(&out.predicted, &enc.future, &out.mean, &out.logvar, model.config.kl_weight)?.total;
        let pred = decode_frames(&out.predicted)?;
        let pj: Vec<&[Point3]> = pred.iter().map(|f| &f.joints[..]).collect();
        let tj: Vec<&[Point3]> = s.future().iter().map(|f| &f.joints[..]).collect();
        vim_sum += crate::metrics::vim(&pj, &tj).map_err(|e| SeqError::InvalidConfig(e.to_string()))?;
        fde_sum += crate::metrics::fde(&pj, &tj).map_err(|e| SeqError::InvalidConfig(e.to_string()))?;
        let start = s.observed()[s.t_obs - 1].center;
        pred_disp += pred[pred.len() - 1].center.distance(start);
        true_disp += s.frames[s.frames.len() - 1].center.distance(start);
    }
    let n = data.len() as f64;
    let ratio = if true_disp > 0.0 { pred_disp / true_disp } else { 0.0 };
    Ok((vim_sum / n, fde_sum / n, loss_sum / n, ratio))
}

/// Trains real, quaternion and dual-quaternion models on one synthetic dataset.
pub fn run_pose_study(cfg: &PoseStudyConfig, seed_data: u64, seed_init: u64) -> Result<PoseStudyReport, SeqError> {
    let all = synth_pose_dataset(cfg.n_train + cfg.n_val, cfg.t_obs, cfg.t_fut, seed_data, &cfg.synth)?;
    run_pose_study_on(cfg, &all, seed_data, seed_init)
}

/// Same as [`run_pose_study`] on caller-supplied sequences; the first
/// `cfg.n_train` train the models and the rest are held out.
pub fn run_pose_study_on(
    cfg: &PoseStudyConfig,
    all: &[PoseSequence],
    seed_data: u64,
    seed_init: u64,
) -> Result<PoseStudyReport, SeqError> {
    if cfg.n_train == 0 || all.len() <= cfg.n_train {
        return Err(SeqError::InvalidConfig(format!(
            "need more than {} sequences for training plus validation, got {}",
            cfg.n_train,
            all.len()
        )));
    }
    let (train, val) = all.split_at(cfg.n_train);
    let train_enc = encode_dataset(train);
    let mut variants = Vec::new();
    let mut real_grid = None;
    for algebra in [AlgebraTag::Real, AlgebraTag::Quaternion, AlgebraTag::DualQuaternion] {
        let vc = VaeConfig::scaled(algebra, NUM_JOINTS, cfg.hidden, cfg.latent, cfg.kl_weight);
        let model = DqVae::new(vc, seed_init)?;
        let tc = TrainConfig { seed: seed_init, ..TrainConfig::adam(cfg.epochs, cfg.learning_rate) };
        let (model, hist) = train_vae(model, &train_enc, &tc)?;
        let (vim, fde, val_loss, center_displacement_ratio) = evaluate_forecasts(&model, val)?;
        let grid = model.weight_grid_count();
        let base = *real_grid.get_or_insert(grid);
        variants.push(PoseVariantReport {
            algebra,
            vim,
            fde,
            val_loss,
            final_train_loss: hist.last().map_or(f64::NAN, |h| h.total),
            param_count: model.param_count(),
            weight_grid_count: grid,
            weight_grid_ratio: grid as f64 / base as f64,
            center_displacement_ratio,
        });
    }
    Ok(PoseStudyReport { seed_data, seed_init, config: *cfg, variants })
}
