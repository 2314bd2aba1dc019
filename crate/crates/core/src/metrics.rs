//! Error metrics for trajectory and pose forecasts.
//!
//! FDE is the L2 norm between the flattened final predicted pose and the
//! flattened final ground-truth pose.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Point3;
use crate::lorenz::VariantKind;
use crate::nn::AlgebraTag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("shape mismatch at frame {frame}: {pred} vs {truth} joints")]
    ShapeMismatch { frame: usize, pred: usize, truth: usize },
    #[error("prediction error has zero variance")]
    ZeroErrorVariance,
    #[error("variance needs at least two samples, got {0}")]
    TooFewSamples(usize),
}

/// Mean squared Euclidean distance.
pub fn mse(pred: &[Point3], truth: &[Point3]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (*p - *t).dot(*p - *t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Unbiased variance pooled over x, y and z after removing each coordinate's mean.
pub fn pooled_variance(v: &[Point3]) -> Result<f64, MetricsError> {
    if v.len() < 2 {
        return Err(MetricsError::TooFewSamples(v.len()));
    }
    let n = v.len() as f64;
    let mean = v.iter().fold(Point3::ZERO, |a, p| a + *p).scale(1.0 / n);
    let ss: f64 = v.iter().map(|p| (*p - mean).dot(*p - mean)).sum();
    Ok(ss / (3.0 * (n - 1.0)))
}

/// `10 log10(σ_s² / σ_e²)` in dB.
pub fn gain_from_variances(signal_var: f64, error_var: f64) -> Result<f64, MetricsError> {
    if error_var <= 0.0 {
        return Err(MetricsError::ZeroErrorVariance);
    }
    Ok(10.0 * (signal_var / error_var).log10())
}

/// Prediction gain of a forecast whose residuals are `errors`.
pub fn prediction_gain(signal: &[Point3], errors: &[Point3]) -> Result<f64, MetricsError> {
    if signal.is_empty() || errors.is_empty() {
        return Err(MetricsError::Empty);
    }
    gain_from_variances(pooled_variance(signal)?, pooled_variance(errors)?)
}

fn check_shapes<P: AsRef<[Point3]>>(pred: &[P], truth: &[P]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (frame, (p, t)) in pred.iter().zip(truth).enumerate() {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() || p.is_empty() {
            return Err(MetricsError::ShapeMismatch { frame, pred: p.len(), truth: t.len() });
        }
    }
    Ok(())
}

/// Mean per-joint Euclidean distance over all frames.
pub fn vim<P: AsRef<[Point3]>>(pred: &[P], truth: &[P]) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.as_ref().iter().zip(t.as_ref()) {
            sum += a.distance(*b);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// L2 distance between the final poses, flattened.
pub fn fde<P: AsRef<[Point3]>>(pred: &[P], truth: &[P]) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let p = pred[pred.len() - 1].as_ref();
    let t = truth[truth.len() - 1].as_ref();
    Ok(p.iter().zip(t).map(|(a, b)| (*a - *b).dot(*a - *b)).sum::<f64>().sqrt())
}

/// One row of the Lorenz evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Algebra of the evaluated model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<AlgebraTag>,
    pub variant: VariantKind,
    pub mse: f64,
    /// `+∞` when the prediction is exact; serialized as the string `"inf"`.
    #[serde(with = "gain_serde")]
    pub prediction_gain_db: f64,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn evaluate(variant: VariantKind, pred: &[Point3], truth: &[Point3]) -> Result<Self, MetricsError> {
        let mse = mse(pred, truth)?;
        let errors: Vec<Point3> = pred.iter().zip(truth).map(|(p, t)| *p - *t).collect();
        let prediction_gain_db = match prediction_gain(truth, &errors) {
            Err(MetricsError::ZeroErrorVariance) => f64::INFINITY,
            other => other?,
        };
        Ok(Self { model: None, variant, mse, prediction_gain_db, n_samples: pred.len() })
    }
}

mod gain_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!("bad gain value '{t}'"))),
        }
    }
}
