//! Lorenz trajectories, sliding-window datasets and rigidly moved test sets.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, DualQuaternion, Point3, Quaternion, RigidTransform};
use crate::nn::AlgebraTag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LorenzError {
    #[error("trajectory too short: need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("integration produced a non-finite state at step {0}")]
    NonFiniteState(usize),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub beta: f64,
    pub rho: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self { sigma: 10.0, beta: 8.0 / 3.0, rho: 28.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point3>,
    pub dt: f64,
    pub t0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

pub fn lorenz_derivative(p: Point3, params: &LorenzParams) -> Point3 {
    Point3::new(
        params.sigma * (p.y - p.x),
        p.x * (params.rho - p.z) - p.y,
        p.x * p.y - params.beta * p.z,
    )
}

/// Classic fourth-order Runge–Kutta; `n` points including `x0`.
pub fn integrate_rk4(
    params: &LorenzParams,
    x0: Point3,
    dt: f64,
    n: usize,
) -> Result<Trajectory, LorenzError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LorenzError::InvalidStep(dt));
    }
    let mut points = Vec::with_capacity(n);
    if n == 0 {
        return Ok(Trajectory { points, dt, t0: 0.0 });
    }
    let mut p = x0;
    points.push(p);
    for step in 1..n {
        let k1 = lorenz_derivative(p, params);
        let k2 = lorenz_derivative(p + k1.scale(0.5 * dt), params);
        let k3 = lorenz_derivative(p + k2.scale(0.5 * dt), params);
        let k4 = lorenz_derivative(p + k3.scale(dt), params);
        p = p + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        if !p.is_finite() {
            return Err(LorenzError::NonFiniteState(step));
        }
        points.push(p);
    }
    Ok(Trajectory { points, dt, t0: 0.0 })
}

/// Contiguous split: the first `floor(len/10)` points train, the rest test.
pub fn split_train_test(t: &Trajectory) -> Result<(Trajectory, Trajectory), LorenzError> {
    split_fraction(t, 0.1)
}

pub fn split_fraction(t: &Trajectory, train_fraction: f64) -> Result<(Trajectory, Trajectory), LorenzError> {
    if t.len() < 30 {
        return Err(LorenzError::TooShort { need: 30, got: t.len() });
    }
    let n_train = (t.len() as f64 * train_fraction).floor() as usize;
    let train = Trajectory { points: t.points[..n_train].to_vec(), dt: t.dt, t0: t.t0 };
    let test = Trajectory { points: t.points[n_train..].to_vec(), dt: t.dt, t0: t.time(n_train) };
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// One-step-ahead pairs built from a 2-step sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub algebra: AlgebraTag,
    pub samples: Vec<Sample>,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Flattened network input for the window `(prev, cur)`.
pub fn encode_input(prev: Point3, cur: Point3, algebra: AlgebraTag) -> Vec<f64> {
    match algebra {
        AlgebraTag::Real => vec![prev.x, prev.y, prev.z, cur.x, cur.y, cur.z],
        AlgebraTag::Quaternion => vec![0.0, prev.x, prev.y, prev.z, 0.0, cur.x, cur.y, cur.z],
        AlgebraTag::DualQuaternion => {
            DualQuaternion::new(Quaternion::pure(prev), Quaternion::pure(cur)).to_array().to_vec()
        }
    }
}

/// Flattened network target for the next position.
pub fn encode_target(next: Point3, algebra: AlgebraTag) -> Vec<f64> {
    match algebra {
        AlgebraTag::Real => next.to_array().to_vec(),
        AlgebraTag::Quaternion => Quaternion::pure(next).to_array().to_vec(),
        AlgebraTag::DualQuaternion => DualQuaternion::from_rotation(Quaternion::pure(next)).to_array().to_vec(),
    }
}

/// Reads the predicted position out of a network output.
pub fn decode_output(y: &[f64], algebra: AlgebraTag) -> Point3 {
    match algebra {
        AlgebraTag::Real => Point3::new(y[0], y[1], y[2]),
        AlgebraTag::Quaternion | AlgebraTag::DualQuaternion => Point3::new(y[1], y[2], y[3]),
    }
}

pub fn encode_windows(t: &Trajectory, algebra: AlgebraTag) -> Result<WindowDataset, LorenzError> {
    if t.len() < 3 {
        return Err(LorenzError::TooShort { need: 3, got: t.len() });
    }
    let samples = t
        .points
        .windows(3)
        .map(|w| Sample { input: encode_input(w[0], w[1], algebra), target: encode_target(w[2], algebra) })
        .collect();
    Ok(WindowDataset { algebra, samples })
}

/// Deterministic random rigid motion: uniform translation box, uniform axis
/// on the sphere and uniform angle in `[0, 2π)`.
pub fn random_rigid_transform(
    seed: u64,
    translation_range: f64,
    rotation: bool,
    translation: bool,
) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = if translation && translation_range > 0.0 {
        let r = translation_range;
        Point3::new(rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r))
    } else {
        Point3::ZERO
    };
    let rot = if rotation {
        let axis: [f64; 3] = UnitSphere.sample(&mut rng);
        let angle = rng.random_range(0.0..TAU);
        let axis = Point3::from_array(axis);
        let axis = axis.scale(1.0 / axis.norm());
        Quaternion::from_axis_angle(axis, angle).expect("unit axis")
    } else {
        Quaternion::ONE
    };
    RigidTransform { rotation: rot, translation: offset }
}

/// Maps every point through the dual-quaternion sandwich of `g`.
pub fn apply_transform(t: &Trajectory, g: &RigidTransform) -> Result<Trajectory, LorenzError> {
    let q = DualQuaternion::from_rigid(g)?;
    let points = t.points.iter().map(|&p| q.transform_point(p)).collect::<Result<_, _>>()?;
    Ok(Trajectory { points, dt: t.dt, t0: t.t0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Original,
    Translated,
    Rotated,
    TranslatedRotated,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Original,
        VariantKind::Translated,
        VariantKind::Rotated,
        VariantKind::TranslatedRotated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::Translated => "translated",
            VariantKind::Rotated => "rotated",
            VariantKind::TranslatedRotated => "translated_rotated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestVariant {
    pub kind: VariantKind,
    pub transform: RigidTransform,
}

/// Default half-width of the random translation box.
pub const DEFAULT_TRANSLATION_RANGE: f64 = 20.0;

/// The original, translated, rotated and rotated-then-translated test sets.
/// One translation and one rotation are drawn from `seed` and shared.
pub fn build_test_variants(
    test: &Trajectory,
    seed: u64,
    translation_range: f64,
) -> Result<Vec<(TestVariant, Trajectory)>, LorenzError> {
    let shift = random_rigid_transform(seed, translation_range, false, true).translation;
    let rot = random_rigid_transform(seed.wrapping_add(0x9E37_79B9_7F4A_7C15), 1.0, true, false).rotation;
    let transforms = [
        RigidTransform::identity(),
        RigidTransform::translation(shift),
        RigidTransform::rotation(rot),
        RigidTransform { rotation: rot, translation: shift },
    ];
    VariantKind::ALL
        .into_iter()
        .zip(transforms)
        .map(|(kind, transform)| {
            let traj = if kind == VariantKind::Original { test.clone() } else { apply_transform(test, &transform)? };
            Ok((TestVariant { kind, transform }, traj))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_traj(n: usize) -> Trajectory {
        Trajectory {
            points: (0..n).map(|i| Point3::new(i as f64, 2.0 * i as f64, -(i as f64))).collect(),
            dt: 0.01,
            t0: 0.0,
        }
    }

    #[test]
    fn derivative_cases() {
        let p = LorenzParams::default();
        let d = lorenz_derivative(Point3::new(1.0, 1.0, 1.0), &p);
        assert_eq!(d, Point3::new(0.0, 26.0, 1.0 - 8.0 / 3.0));
        assert_eq!(lorenz_derivative(Point3::ZERO, &p), Point3::ZERO);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, y, z): (f64, f64, f64) =
                (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..50.0));
            let d = lorenz_derivative(Point3::new(x, y, z), &p);
            let (s, b, r) = (10.0, 8.0 / 3.0, 28.0);
            assert!((d.x - s * (y - x)).abs() <= 1e-15 * d.x.abs().max(1.0));
            assert!((d.y - (x * (r - z) - y)).abs() <= 1e-15 * d.y.abs().max(1.0));
            assert!((d.z - (x * y - b * z)).abs() <= 1e-15 * d.z.abs().max(1.0));
        }
    }

    #[test]
    fn integrate_edge_cases() {
        let p = LorenzParams::default();
        let t = integrate_rk4(&p, Point3::new(1.0, 1.0, 1.0), 0.01, 1).unwrap();
        assert_eq!(t.points, vec![Point3::new(1.0, 1.0, 1.0)]);
        assert!(matches!(integrate_rk4(&p, Point3::ZERO, 0.0, 5), Err(LorenzError::InvalidStep(_))));
        let wild = LorenzParams { sigma: 1e300, beta: 1.0, rho: 1e300 };
        assert!(matches!(
            integrate_rk4(&wild, Point3::new(1.0, 2.0, 3.0), 1.0, 50),
            Err(LorenzError::NonFiniteState(_))
        ));
    }

    #[test]
    fn attractor_bounds() {
        let t = integrate_rk4(&LorenzParams::default(), Point3::new(1.0, 1.0, 1.0), 0.01, 10_000).unwrap();
        assert_eq!(t.len(), 10_000);
        for p in &t.points {
            assert!(p.x.abs() < 30.0 && p.y.abs() < 30.0 && p.z > 0.0 && p.z < 60.0, "{p:?}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let params = LorenzParams::default();
        let x0 = Point3::new(1.0, 1.0, 1.0);
        let end = |dt: f64| {
            let n = (0.5 / dt).round() as usize + 1;
            *integrate_rk4(&params, x0, dt, n).unwrap().points.last().unwrap()
        };
        let (a, b, c) = (end(0.01), end(0.005), end(0.0025));
        let ratio = a.distance(b) / b.distance(c);
        // error ∝ dt⁴ → successive differences shrink by ~16
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn chaos_sensitivity() {
        let p = LorenzParams::default();
        // from (1, 1, 1) a 1e-9 nudge first exceeds unit separation near step 3350
        let a = integrate_rk4(&p, Point3::new(1.0, 1.0, 1.0), 0.01, 4000).unwrap();
        let b = integrate_rk4(&p, Point3::new(1.0 + 1e-9, 1.0, 1.0), 0.01, 4000).unwrap();
        let max = a.points.iter().zip(&b.points).map(|(x, y)| x.distance(*y)).fold(0.0, f64::max);
        assert!(max > 1.0, "max separation {max}");
    }

    #[test]
    fn split_cases() {
        let t = short_traj(10_000);
        let (a, b) = split_train_test(&t).unwrap();
        assert_eq!((a.len(), b.len()), (1000, 9000));
        let t = short_traj(30);
        let (a, b) = split_train_test(&t).unwrap();
        assert_eq!((a.len(), b.len()), (3, 27));
        let joined: Vec<_> = a.points.iter().chain(&b.points).copied().collect();
        assert_eq!(joined, t.points);
        assert!((b.t0 - 0.03).abs() < 1e-15);
        assert!(matches!(split_train_test(&short_traj(29)), Err(LorenzError::TooShort { .. })));
    }

    #[test]
    fn encoding_widths_and_layout() {
        let t = short_traj(3);
        for tag in AlgebraTag::ALL {
            let ds = encode_windows(&t, tag).unwrap();
            assert_eq!(ds.len(), 1);
            let s = &ds.samples[0];
            assert_eq!(decode_output(&s.target, tag), t.points[2]);
        }
        let real = encode_windows(&t, AlgebraTag::Real).unwrap();
        assert_eq!((real.samples[0].input.len(), real.samples[0].target.len()), (6, 3));
        let dq = encode_windows(&t, AlgebraTag::DualQuaternion).unwrap();
        let s = &dq.samples[0];
        assert_eq!(s.input[0], 0.0);
        assert_eq!(s.input[4], 0.0);
        assert_eq!(&s.input[1..4], &t.points[0].to_array());
        assert_eq!(&s.input[5..8], &t.points[1].to_array());
        assert_eq!(&s.target[4..], &[0.0; 4]);
        assert!(matches!(encode_windows(&short_traj(2), AlgebraTag::Real), Err(LorenzError::TooShort { .. })));
        assert_eq!(encode_windows(&short_traj(50), AlgebraTag::Real).unwrap().len(), 48);
    }

    #[test]
    fn random_transform_cases() {
        let id = random_rigid_transform(5, 20.0, false, false);
        assert_eq!(id, RigidTransform::identity());
        assert_eq!(random_rigid_transform(5, 20.0, true, true), random_rigid_transform(5, 20.0, true, true));
        let g = random_rigid_transform(5, 20.0, true, true);
        assert!((g.rotation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_moments_are_uniform() {
        let range = 20.0;
        let vals: Vec<f64> = (0..10_000u64)
            .flat_map(|s| random_rigid_transform(s, range, false, true).translation.to_array())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let want = range * range / 3.0;
        // standard error of the mean is ~0.07 here
        assert!(mean.abs() < 0.01 * range, "mean {mean}");
        assert!((var - want).abs() < 0.01 * want, "var {var} vs {want}");
    }

    #[test]
    fn apply_transform_cases() {
        let t = integrate_rk4(&LorenzParams::default(), Point3::new(1.0, 1.0, 1.0), 0.01, 200).unwrap();
        assert_eq!(apply_transform(&t, &RigidTransform::identity()).unwrap(), t);
        let d = Point3::new(3.0, -1.0, 2.0);
        let moved = apply_transform(&t, &RigidTransform::translation(d)).unwrap();
        for (a, b) in t.points.iter().zip(&moved.points) {
            assert!((*b - *a).distance(d) < 1e-12);
        }
        let g = random_rigid_transform(3, 20.0, true, true);
        let moved = apply_transform(&t, &g).unwrap();
        for i in (0..t.len()).step_by(7) {
            for j in (0..t.len()).step_by(11) {
                let a = t.points[i].distance(t.points[j]);
                let b = moved.points[i].distance(moved.points[j]);
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn variants_construction() {
        let t = integrate_rk4(&LorenzParams::default(), Point3::new(1.0, 1.0, 1.0), 0.01, 100).unwrap();
        let v = build_test_variants(&t, 42, 20.0).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0].1, t);
        assert!(v.iter().all(|(_, tr)| tr.len() == t.len()));
        let kinds: Vec<_> = v.iter().map(|(k, _)| k.kind).collect();
        assert_eq!(kinds, VariantKind::ALL.to_vec());
        let rot = v[2].0.transform.rotation;
        let shift = v[1].0.transform.translation;
        let expect = apply_transform(&apply_transform(&t, &RigidTransform::rotation(rot)).unwrap(),
            &RigidTransform::translation(shift)).unwrap();
        for (a, b) in expect.points.iter().zip(&v[3].1.points) {
            assert!(a.distance(*b) < 1e-12);
        }
        assert_eq!(build_test_variants(&t, 42, 20.0).unwrap(), v);
    }
}
