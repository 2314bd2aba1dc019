//! Command-line pipeline: trajectory generation, training, evaluation under
//! rigid motions, the synthetic pose study and table rendering.
//!
//! File formats:
//!
//! - trajectory CSV: header `t,x,y,z`, floats printed with 17 significant digits;
//! - loss history CSV: header `epoch,loss`;
//! - checkpoint JSON: `{format_version, algebra, param_count, layers: [{fan_in, fan_out,
//!   activation, weights, biases}], train_config, seeds}` with weights row-major over
//!   `(output, input)` and algebra components fastest, ordered `(w, x, y, z)` and
//!   primal before dual;
//! - evaluation report: JSON array of [`EvalReport`];
//! - pose JSON lines: one `{"center": [x, y, z], "joints": [[x, y, z]; 13]}` per line.
//!
//! Every output is written to a temporary file in the target directory and renamed
//! into place.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Point3, RigidTransform};
use crate::lorenz::{
    build_test_variants, decode_output, encode_windows, integrate_rk4, split_fraction, LorenzError, LorenzParams,
    Trajectory, VariantKind, DEFAULT_TRANSLATION_RANGE,
};
use crate::metrics::{EvalReport, MetricsError};
use crate::nn::{
    train_mlp, Activation, AlgebraTag, DenseLayer, Mlp, NnError, TrainConfig,
};
use crate::seqmodels::{
    run_pose_study_on, synth_pose_dataset, PoseFrame, PoseSequence, PoseStudyConfig, PoseStudyReport,
    PoseSynthConfig, SeqError, NUM_JOINTS,
};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("checkpoint holds a {checkpoint} model but {requested} was requested")]
    AlgebraMismatch { checkpoint: AlgebraTag, requested: AlgebraTag },
    #[error(transparent)]
    Lorenz(#[from] LorenzError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Seq(SeqError),
}

impl CliError {
    /// 2 for configuration errors, 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            _ => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Malformed { path: path.to_path_buf(), reason: reason.into() }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            NnError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Nn(other),
        }
    }
}

impl From<SeqError> for CliError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            SeqError::InvalidConfig(m) => CliError::Config(m),
            SeqError::Nn(n) => n.into(),
            other => CliError::Seq(other),
        }
    }
}

/// The three independent seeds of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub transform: u64,
}

/// Every tunable of the pipeline. Loaded from a `key = value` file and then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lorenz: LorenzParams,
    pub x0: Point3,
    pub dt: f64,
    pub n_points: usize,
    pub train_fraction: f64,
    pub epochs: usize,
    pub lr_real: f64,
    pub lr_quat: f64,
    pub lr_dq: f64,
    pub translation_range: f64,
    pub identity_transforms: bool,
    pub seeds: Seeds,
    pub pose: PoseStudyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lorenz: LorenzParams::default(),
            x0: Point3::new(1.0, 1.0, 1.0),
            dt: 0.01,
            n_points: 10_000,
            train_fraction: 0.1,
            epochs: 250,
            lr_real: 3e-4,
            lr_quat: 9e-4,
            lr_dq: 9e-4,
            translation_range: DEFAULT_TRANSLATION_RANGE,
            identity_transforms: false,
            seeds: Seeds { data: 0, init: 0, transform: 0 },
            pose: PoseStudyConfig::default(),
        }
    }
}

/// Layer widths of the Lorenz predictor for each algebra.
pub fn lorenz_widths(algebra: AlgebraTag) -> [usize; 3] {
    match algebra {
        AlgebraTag::Real => [6, 128, 3],
        AlgebraTag::Quaternion => [2, 80, 1],
        AlgebraTag::DualQuaternion => [1, 53, 1],
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Config(format!("bad value '{v}' for key '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("bad boolean '{v}' for key '{key}'"))),
    }
}

impl ExperimentConfig {
    pub fn lr_for(&self, algebra: AlgebraTag) -> f64 {
        match algebra {
            AlgebraTag::Real => self.lr_real,
            AlgebraTag::Quaternion => self.lr_quat,
            AlgebraTag::DualQuaternion => self.lr_dq,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "sigma" => self.lorenz.sigma = parse_value(key, v)?,
            "rho" => self.lorenz.rho = parse_value(key, v)?,
            "beta" => self.lorenz.beta = parse_value(key, v)?,
            "x0" => {
                let parts: Vec<f64> =
                    v.split(',').map(|p| parse_value(key, p.trim())).collect::<Result<_, _>>()?;
                if parts.len() != 3 {
                    return Err(CliError::Config(format!("x0 needs three components, got '{v}'")));
                }
                self.x0 = Point3::new(parts[0], parts[1], parts[2]);
            }
            "dt" => self.dt = parse_value(key, v)?,
            "n" | "n_points" => self.n_points = parse_value(key, v)?,
            "train_fraction" => self.train_fraction = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "lr_real" => self.lr_real = parse_value(key, v)?,
            "lr_quat" => self.lr_quat = parse_value(key, v)?,
            "lr_dq" => self.lr_dq = parse_value(key, v)?,
            "translation_range" => self.translation_range = parse_value(key, v)?,
            "identity_transforms" => self.identity_transforms = parse_bool(key, v)?,
            "seed_data" => self.seeds.data = parse_value(key, v)?,
            "seed_init" => self.seeds.init = parse_value(key, v)?,
            "seed_transform" => self.seeds.transform = parse_value(key, v)?,
            "pose_n_train" => self.pose.n_train = parse_value(key, v)?,
            "pose_n_val" => self.pose.n_val = parse_value(key, v)?,
            "pose_t_obs" => self.pose.t_obs = parse_value(key, v)?,
            "pose_t_fut" => self.pose.t_fut = parse_value(key, v)?,
            "pose_hidden" => self.pose.hidden = parse_value(key, v)?,
            "pose_latent" => self.pose.latent = parse_value(key, v)?,
            "pose_kl_weight" => self.pose.kl_weight = parse_value(key, v)?,
            "pose_epochs" => self.pose.epochs = parse_value(key, v)?,
            "pose_lr" => self.pose.learning_rate = parse_value(key, v)?,
            "pose_still" => {
                if parse_bool(key, v)? {
                    self.pose.synth = PoseSynthConfig::still();
                }
            }
            _ => return Err(CliError::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Blank lines and `#` comments are skipped.
    pub fn parse_kv(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_kv(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.n_points < 3 {
            return bad("n_points must be at least 3");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        for lr in [self.lr_real, self.lr_quat, self.lr_dq, self.pose.learning_rate] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad("learning rates must be finite and non-negative");
            }
        }
        if !(self.translation_range >= 0.0 && self.translation_range.is_finite()) {
            return bad("translation_range must be finite and non-negative");
        }
        let p = &self.pose;
        if p.n_train == 0 || p.n_val == 0 || p.t_obs == 0 || p.t_fut == 0 || p.hidden == 0 || p.latent == 0 {
            return bad("pose counts and widths must be at least 1");
        }
        if p.epochs == 0 {
            return bad("pose_epochs must be at least 1");
        }
        if !(p.kl_weight >= 0.0) {
            return bad("pose_kl_weight must be non-negative");
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("bad output path {}", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_to_csv(t: &Trajectory) -> String {
    let mut s = String::from("t,x,y,z\n");
    for (i, p) in t.points.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", fmt17(t.time(i)), fmt17(p.x), fmt17(p.y), fmt17(p.z));
    }
    s
}

pub fn trajectory_from_csv(text: &str, path: &Path) -> Result<Trajectory, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "t,x,y,z" => {}
        _ => return Err(CliError::malformed(path, "missing 't,x,y,z' header")),
    }
    let mut times = Vec::new();
    let mut points = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::malformed(path, format!("row {}: {e}", no + 2)))?;
        if vals.len() != 4 {
            return Err(CliError::malformed(path, format!("row {}: expected 4 columns", no + 2)));
        }
        times.push(vals[0]);
        points.push(Point3::new(vals[1], vals[2], vals[3]));
    }
    let t0 = times.first().copied().unwrap_or(0.0);
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Ok(Trajectory { points, dt, t0 })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    trajectory_from_csv(&read_text(path)?, path)
}

pub fn loss_history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", fmt17(*l));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub algebra: AlgebraTag,
    pub param_count: usize,
    pub layers: Vec<LayerRecord>,
    pub train_config: TrainConfig,
    pub seeds: Seeds,
}

impl Checkpoint {
    pub fn from_model(m: &Mlp, train_config: TrainConfig, seeds: Seeds) -> Self {
        let layers = m
            .layers()
            .iter()
            .map(|l| LayerRecord {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                activation: l.activation(),
                weights: l.weights().to_vec(),
                biases: l.biases().to_vec(),
            })
            .collect();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            algebra: m.algebra(),
            param_count: m.param_count(),
            layers,
            train_config,
            seeds,
        }
    }

    pub fn to_model(&self) -> Result<Mlp, CliError> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                DenseLayer::from_parts(self.algebra, l.fan_in, l.fan_out, l.activation, l.weights.clone(), l.biases.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Mlp::from_layers(layers)?)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let c: Checkpoint =
            serde_json::from_str(&read_text(path)?).map_err(|e| CliError::malformed(path, e.to_string()))?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CliError::malformed(path, format!("unsupported format_version {}", c.format_version)));
        }
        Ok(c)
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize, Deserialize)]
struct PoseFrameRecord {
    center: [f64; 3],
    joints: Vec<[f64; 3]>,
}

pub fn pose_frames_to_jsonl(frames: &[PoseFrame]) -> String {
    let mut s = String::new();
    for f in frames {
        let rec = PoseFrameRecord { center: f.center.to_array(), joints: f.joints.iter().map(|j| j.to_array()).collect() };
        s.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        s.push('\n');
    }
    s
}

pub fn pose_frames_from_jsonl(text: &str, path: &Path) -> Result<Vec<PoseFrame>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseFrameRecord =
            serde_json::from_str(line).map_err(|e| CliError::malformed(path, format!("line {}: {e}", no + 1)))?;
        if rec.joints.len() != NUM_JOINTS {
            return Err(CliError::malformed(
                path,
                format!("line {}: expected {NUM_JOINTS} joints, got {}", no + 1, rec.joints.len()),
            ));
        }
        let mut joints = [Point3::ZERO; NUM_JOINTS];
        for (j, r) in joints.iter_mut().zip(&rec.joints) {
            *j = Point3::from_array(*r);
        }
        out.push(PoseFrame { center: Point3::from_array(rec.center), joints });
    }
    Ok(out)
}

/// Cuts consecutive frames into sequences of `t_obs + t_fut`, dropping a short tail.
pub fn frames_to_sequences(frames: &[PoseFrame], t_obs: usize, t_fut: usize) -> Result<Vec<PoseSequence>, CliError> {
    frames
        .chunks_exact(t_obs + t_fut)
        .map(|c| PoseSequence::new(c.to_vec(), t_obs, t_fut).map_err(CliError::from))
        .collect()
}

/// Outcome of a command: a human summary plus the files written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput, CliError> {
    cfg.validate()?;
    let t = integrate_rk4(&cfg.lorenz, cfg.x0, cfg.dt, cfg.n_points)?;
    write_atomic(out, trajectory_to_csv(&t).as_bytes())?;
    let (lo, hi) = t.points.iter().fold(
        ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]),
        |(mut lo, mut hi), p| {
            for (k, v) in p.to_array().into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
            (lo, hi)
        },
    );
    let summary = format!(
        "wrote {} rows to {}\nbounding box x [{:.3}, {:.3}] y [{:.3}, {:.3}] z [{:.3}, {:.3}]",
        t.len(),
        out.display(),
        lo[0],
        hi[0],
        lo[1],
        hi[1],
        lo[2],
        hi[2]
    );
    Ok(CommandOutput { summary, files: vec![out.to_path_buf()] })
}

/// `<stem>_<suffix>` next to `path`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}_{suffix}"))
}

/// Trains the per-algebra predictor on the training split of `traj`.
pub fn train_lorenz_model(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    algebra: AlgebraTag,
) -> Result<(Mlp, Vec<f64>, TrainConfig), CliError> {
    cfg.validate()?;
    let (train, _) = split_fraction(traj, cfg.train_fraction)?;
    let data = encode_windows(&train, algebra)?;
    let m = Mlp::new(algebra, &lorenz_widths(algebra), Activation::SplitRelu, Activation::Identity, cfg.seeds.init)?;
    let tc = TrainConfig { seed: cfg.seeds.init, ..TrainConfig::sgd(cfg.epochs, cfg.lr_for(algebra)) };
    let (m, hist) = train_mlp(m, &data, &tc)?;
    Ok((m, hist, tc))
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    trajectory: &Path,
    algebra: AlgebraTag,
    out: &Path,
) -> Result<CommandOutput, CliError> {
    cfg.validate()?;
    let traj = read_trajectory(trajectory)?;
    let (m, hist, tc) = train_lorenz_model(cfg, &traj, algebra)?;
    let ckpt = Checkpoint::from_model(&m, tc, cfg.seeds);
    write_atomic(out, &to_json(&ckpt))?;
    let loss_path = sibling_path(out, "loss.csv");
    write_atomic(&loss_path, loss_history_csv(&hist).as_bytes())?;
    let summary = format!(
        "trained {} model ({} parameters) for {} epochs: loss {:.6} -> {:.6}\ncheckpoint {}",
        algebra,
        ckpt.param_count,
        hist.len(),
        hist[0],
        hist[hist.len() - 1],
        out.display()
    );
    Ok(CommandOutput { summary, files: vec![out.to_path_buf(), loss_path] })
}

/// Predictions and metrics of one model on one test variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantEvaluation {
    pub report: EvalReport,
    pub times: Vec<f64>,
    pub predicted: Vec<Point3>,
    pub expected: Vec<Point3>,
}

/// Evaluates `model` on the requested rigidly moved copies of the test split.
pub fn evaluate_lorenz_model(
    cfg: &ExperimentConfig,
    model: &Mlp,
    traj: &Trajectory,
    variants: &[VariantKind],
) -> Result<Vec<VariantEvaluation>, CliError> {
    let algebra = model.algebra();
    let (_, test) = split_fraction(traj, cfg.train_fraction)?;
    let mut sets = build_test_variants(&test, cfg.seeds.transform, cfg.translation_range)?;
    if cfg.identity_transforms {
        for (v, t) in sets.iter_mut() {
            v.transform = RigidTransform::identity();
            *t = test.clone();
        }
    }
    sets.retain(|(v, _)| variants.contains(&v.kind));
    sets.par_iter()
        .map(|(v, t)| {
            let ds = encode_windows(t, algebra)?;
            let predicted = ds
                .samples
                .iter()
                .map(|s| model.predict(&s.input).map(|y| decode_output(&y, algebra)))
                .collect::<Result<Vec<_>, _>>()?;
            let expected = t.points[2..].to_vec();
            let mut report = EvalReport::evaluate(v.kind, &predicted, &expected)?;
            report.model = Some(algebra);
            let times = (2..t.len()).map(|i| t.time(i)).collect();
            Ok(VariantEvaluation { report, times, predicted, expected })
        })
        .collect()
}

pub fn prediction_csv(e: &VariantEvaluation) -> String {
    let mut s = String::from("t,x,y,z,x_expected,y_expected,z_expected\n");
    for ((t, p), q) in e.times.iter().zip(&e.predicted).zip(&e.expected) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt17(*t),
            fmt17(p.x),
            fmt17(p.y),
            fmt17(p.z),
            fmt17(q.x),
            fmt17(q.y),
            fmt17(q.z)
        );
    }
    s
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    trajectory: &Path,
    checkpoint: &Path,
    requested: Option<AlgebraTag>,
    variants: &[VariantKind],
    out: &Path,
) -> Result<CommandOutput, CliError> {
    cfg.validate()?;
    let ckpt = Checkpoint::read(checkpoint)?;
    if let Some(r) = requested {
        if r != ckpt.algebra {
            return Err(CliError::AlgebraMismatch { checkpoint: ckpt.algebra, requested: r });
        }
    }
    let model = ckpt.to_model()?;
    let traj = read_trajectory(trajectory)?;
    let evals = evaluate_lorenz_model(cfg, &model, &traj, variants)?;
    let reports: Vec<EvalReport> = evals.iter().map(|e| e.report.clone()).collect();
    write_atomic(out, &to_json(&reports))?;
    let mut files = vec![out.to_path_buf()];
    let mut summary = format!("{} model on {} variants\n", ckpt.algebra, reports.len());
    for e in &evals {
        let p = sibling_path(out, &format!("{}.csv", e.report.variant.name()));
        write_atomic(&p, prediction_csv(e).as_bytes())?;
        files.push(p);
        let _ = writeln!(
            summary,
            "  {:<20} mse {:>12.6}  gain {:>8.3} dB",
            e.report.variant.name(),
            e.report.mse,
            e.report.prediction_gain_db
        );
    }
    Ok(CommandOutput { summary: summary.trim_end().to_string(), files })
}

/// Trains all three Lorenz predictors and evaluates them on every variant.
pub fn run_lorenz_study(cfg: &ExperimentConfig) -> Result<Vec<(AlgebraTag, Vec<EvalReport>)>, CliError> {
    cfg.validate()?;
    let traj = integrate_rk4(&cfg.lorenz, cfg.x0, cfg.dt, cfg.n_points)?;
    AlgebraTag::ALL
        .par_iter()
        .map(|&a| {
            let (m, _, _) = train_lorenz_model(cfg, &traj, a)?;
            let evals = evaluate_lorenz_model(cfg, &m, &traj, &VariantKind::ALL)?;
            Ok((a, evals.into_iter().map(|e| e.report).collect()))
        })
        .collect()
}

pub fn cmd_pose(
    cfg: &ExperimentConfig,
    input: Option<&Path>,
    dump: Option<&Path>,
    out: &Path,
) -> Result<CommandOutput, CliError> {
    cfg.validate()?;
    let p = &cfg.pose;
    let sequences = match input {
        Some(path) => {
            let frames = pose_frames_from_jsonl(&read_text(path)?, path)?;
            frames_to_sequences(&frames, p.t_obs, p.t_fut)?
        }
        None => synth_pose_dataset(p.n_train + p.n_val, p.t_obs, p.t_fut, cfg.seeds.data, &p.synth)?,
    };
    let mut files = Vec::new();
    if let Some(d) = dump {
        let frames: Vec<PoseFrame> = sequences.iter().flat_map(|s| s.frames.iter().copied()).collect();
        write_atomic(d, pose_frames_to_jsonl(&frames).as_bytes())?;
        files.push(d.to_path_buf());
    }
    let report = run_pose_study_on(p, &sequences, cfg.seeds.data, cfg.seeds.init)?;
    write_atomic(out, &to_json(&report))?;
    files.insert(0, out.to_path_buf());
    Ok(CommandOutput { summary: pose_summary(&report), files })
}

pub fn pose_summary(r: &PoseStudyReport) -> String {
    let mut s = format!(
        "{:<6} {:>10} {:>10} {:>12} {:>10} {:>8} {:>8}\n",
        "model", "VIM", "FDE", "val loss", "params", "grid", "center"
    );
    for v in &r.variants {
        let _ = writeln!(
            s,
            "{:<6} {:>10.4} {:>10.4} {:>12.4} {:>10} {:>8.3} {:>8.3}",
            v.algebra.name(),
            v.vim,
            v.fde,
            v.val_loss,
            v.param_count,
            v.weight_grid_ratio,
            v.center_displacement_ratio
        );
    }
    s.trim_end().to_string()
}

/// One table row: a model and its metrics per variant.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub cells: BTreeMap<VariantKind, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub variants: Vec<VariantKind>,
    pub rows: Vec<TableRow>,
}

fn gain_text(g: f64) -> String {
    if g == f64::INFINITY {
        "inf".into()
    } else {
        g.to_string()
    }
}

impl ReportTable {
    /// Groups reports by model in order of first appearance. Unlabelled reports
    /// take `fallback` as their model name.
    pub fn build(groups: &[(String, Vec<EvalReport>)]) -> Self {
        let mut rows: Vec<TableRow> = Vec::new();
        let mut seen = Vec::new();
        for (fallback, reports) in groups {
            for r in reports {
                let name = r.model.map_or_else(|| fallback.clone(), |m| m.name().to_string());
                if !seen.contains(&r.variant) {
                    seen.push(r.variant);
                }
                let idx = match rows.iter().position(|row| row.model == name) {
                    Some(i) => i,
                    None => {
                        rows.push(TableRow { model: name, cells: BTreeMap::new() });
                        rows.len() - 1
                    }
                };
                rows[idx].cells.insert(r.variant, (r.mse, r.prediction_gain_db));
            }
        }
        let variants = VariantKind::ALL.into_iter().filter(|v| seen.contains(v)).collect();
        Self { variants, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for v in &self.variants {
            let _ = write!(s, ",{0}_mse,{0}_gain_db", v.name());
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.model);
            for v in &self.variants {
                match row.cells.get(v) {
                    Some((m, g)) => {
                        let _ = write!(s, ",{},{}", m, gain_text(*g));
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| CliError::malformed(path, "empty table"))?.split(',').collect();
        if header.first() != Some(&"model") || header.len() % 2 != 1 {
            return Err(CliError::malformed(path, "bad table header"));
        }
        let variants = header[1..]
            .chunks(2)
            .map(|c| {
                c[0].strip_suffix("_mse")
                    .and_then(VariantKind::parse)
                    .ok_or_else(|| CliError::malformed(path, format!("bad column '{}'", c[0])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != header.len() {
                return Err(CliError::malformed(path, "row width differs from header"));
            }
            let mut cells = BTreeMap::new();
            for (v, c) in variants.iter().zip(cols[1..].chunks(2)) {
                if c[0].is_empty() {
                    continue;
                }
                let num = |t: &str| -> Result<f64, CliError> {
                    if t == "inf" {
                        Ok(f64::INFINITY)
                    } else {
                        t.parse().map_err(|_| CliError::malformed(path, format!("bad number '{t}'")))
                    }
                };
                cells.insert(*v, (num(c[0])?, num(c[1])?));
            }
            rows.push(TableRow { model: cols[0].to_string(), cells });
        }
        Ok(Self { variants, rows })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8}", "model");
        for v in &self.variants {
            let _ = write!(s, " | {:^25}", v.name());
        }
        s.push('\n');
        let _ = write!(s, "{:<8}", "");
        for _ in &self.variants {
            let _ = write!(s, " | {:>12} {:>12}", "MSE", "gain dB");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<8}", row.model);
            for v in &self.variants {
                match row.cells.get(v) {
                    Some((m, g)) => {
                        let _ = write!(s, " | {:>12.4} {:>12.3}", m, g);
                    }
                    None => {
                        let _ = write!(s, " | {:>12} {:>12}", "-", "-");
                    }
                }
            }
            s.push('\n');
        }
        s.trim_end().to_string()
    }
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>, CliError> {
    let reports: Vec<EvalReport> =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::malformed(path, e.to_string()))?;
    if reports.is_empty() {
        return Err(CliError::malformed(path, "report holds no entries"));
    }
    Ok(reports)
}

pub fn cmd_report(reports: &[PathBuf], out: Option<&Path>) -> Result<CommandOutput, CliError> {
    if reports.is_empty() {
        return Err(CliError::Config("report needs at least one report file".into()));
    }
    let groups = reports
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
            Ok((name, read_reports(p)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let table = ReportTable::build(&groups);
    let mut files = Vec::new();
    if let Some(o) = out {
        write_atomic(o, table.to_csv().as_bytes())?;
        files.push(o.to_path_buf());
    }
    Ok(CommandOutput { summary: table.to_text(), files })
}

#[derive(Debug, Parser)]
#[command(name = "dqmotion", version, about = "Rigid-motion equivariant forecasting with dual-quaternion networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed_data: Option<u64>,
    #[arg(long, global = true)]
    pub seed_init: Option<u64>,
    #[arg(long, global = true)]
    pub seed_transform: Option<u64>,
    /// Additional `key=value` overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a Lorenz trajectory and write it as CSV.
    Gen {
        #[arg(long)]
        n: Option<usize>,
        #[arg(short, long, default_value = "lorenz.csv")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a one-step predictor on the training split of a trajectory.
    Train {
        #[arg(long)]
        algebra: AlgebraTag,
        #[arg(long, default_value = "lorenz.csv")]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on rigidly moved copies of the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "lorenz.csv")]
        data: PathBuf,
        /// Expected algebra of the checkpoint.
        #[arg(long)]
        algebra: Option<AlgebraTag>,
        #[arg(long, value_delimiter = ',', default_value = "original,translated,rotated,translated_rotated")]
        variants: Vec<String>,
        /// Replace every test transform with the identity.
        #[arg(long)]
        identity_transforms: bool,
        #[arg(short, long, default_value = "eval.json")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train real, quaternion and dual-quaternion pose forecasters.
    Pose {
        /// Pose JSON-lines input; synthetic data is generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write the sequences used as pose JSON lines.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(short, long, default_value = "pose.json")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Render evaluation reports as a model-by-variant table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed_data {
        cfg.seeds.data = s;
    }
    if let Some(s) = common.seed_init {
        cfg.seeds.init = s;
    }
    if let Some(s) = common.seed_transform {
        cfg.seeds.transform = s;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<CommandOutput, CliError> {
    match cli.command {
        Command::Gen { n, output, common } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(n) = n {
                cfg.n_points = n;
            }
            cmd_gen(&cfg, &output)
        }
        Command::Train { algebra, data, epochs, lr, output, common } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(lr) = lr {
                match algebra {
                    AlgebraTag::Real => cfg.lr_real = lr,
                    AlgebraTag::Quaternion => cfg.lr_quat = lr,
                    AlgebraTag::DualQuaternion => cfg.lr_dq = lr,
                }
            }
            let output = output.unwrap_or_else(|| PathBuf::from(format!("{}.json", algebra.name())));
            cmd_train(&cfg, &data, algebra, &output)
        }
        Command::Eval { checkpoint, data, algebra, variants, identity_transforms, output, common } => {
            let mut cfg = resolve_config(&common)?;
            cfg.identity_transforms |= identity_transforms;
            let kinds = variants
                .iter()
                .map(|v| VariantKind::parse(v.trim()).ok_or_else(|| CliError::Config(format!("unknown variant '{v}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            cmd_eval(&cfg, &data, &checkpoint, algebra, &kinds, &output)
        }
        Command::Pose { input, dump, epochs, output, common } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(e) = epochs {
                cfg.pose.epochs = e;
            }
            cmd_pose(&cfg, input.as_deref(), dump.as_deref(), &output)
        }
        Command::Report { reports, output } => cmd_report(&reports, output.as_deref()),
    }
}

/// Parses `args`, runs the command and prints its summary. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", out.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
