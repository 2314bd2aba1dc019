//! Quaternions, dual numbers and dual quaternions with value semantics.
//!
//! A unit dual quaternion `q0 + ε qε` encodes a rigid motion: `q0` is the
//! rotation and `qε = ½ t q0` carries the translation `t`. Points are embedded
//! as `1 + ε p` and moved with the combined-conjugate sandwich
//! `q̂ p̂ (q0* − ε qε*)`.
//!
//! All operations are pure functions over `f64` values.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold below which a norm counts as zero.
pub const ZERO_NORM_EPS: f64 = 1e-15;
/// Tolerance used to accept unit quaternions, unit axes and unit dual quaternions.
pub const UNIT_TOL: f64 = 1e-9;
/// Below this value of `sin(θ/2)` a motion is treated as a pure translation.
pub const PURE_TRANSLATION_SIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AlgebraError {
    #[error("quaternion norm {0:e} is too small to normalize")]
    ZeroNorm(f64),
    #[error("rotation axis must be a unit vector (|u| = {0})")]
    NonUnitAxis(f64),
    #[error("expected a unit quaternion (|q| = {0})")]
    NonUnitQuaternion(f64),
    #[error("expected a unit dual quaternion (|q0| = {norm}, <q0, qε> = {dot:e})")]
    NonUnitDualQuaternion { norm: f64, dot: f64 },
    #[error("invalid screw parameters: {0}")]
    InvalidScrew(&'static str),
}

/// A point (or free vector) in 3D space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// `w + x î + y ĵ + z k̂`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion with vector part `v`.
    pub fn pure(v: Point3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Four-component Euclidean inner product.
    pub fn dot(self, o: Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn normalize(self) -> Result<Self, AlgebraError> {
        let n = self.norm();
        if n <= ZERO_NORM_EPS {
            return Err(AlgebraError::ZeroNorm(n));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Polar form `cos(θ/2) + sin(θ/2) u` for a unit axis `u`.
    pub fn from_axis_angle(axis: Point3, theta: f64) -> Result<Self, AlgebraError> {
        let n = axis.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(AlgebraError::NonUnitAxis(n));
        }
        let (s, c) = (0.5 * theta).sin_cos();
        Ok(Self::new(c, s * axis.x, s * axis.y, s * axis.z))
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    /// Rotates `p` by the sandwich `q p q*`.
    pub fn rotate_point(self, p: Point3) -> Result<Point3, AlgebraError> {
        if !self.is_unit() {
            return Err(AlgebraError::NonUnitQuaternion(self.norm()));
        }
        Ok((self * Quaternion::pure(p) * self.conj()).vector())
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product.
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.w, self.x, self.y, self.z)
    }
}

/// `primal + ε dual` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualNumber {
    pub primal: f64,
    pub dual: f64,
}

impl DualNumber {
    pub const fn new(primal: f64, dual: f64) -> Self {
        Self { primal, dual }
    }
}

impl Mul for DualNumber {
    type Output = DualNumber;
    fn mul(self, b: DualNumber) -> DualNumber {
        DualNumber::new(self.primal * b.primal, self.primal * b.dual + self.dual * b.primal)
    }
}

impl Add for DualNumber {
    type Output = DualNumber;
    fn add(self, b: DualNumber) -> DualNumber {
        DualNumber::new(self.primal + b.primal, self.dual + b.dual)
    }
}

/// `q0 + ε qε`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualQuaternion {
    pub primal: Quaternion,
    pub dual: Quaternion,
}

impl DualQuaternion {
    pub const IDENTITY: DualQuaternion = DualQuaternion::new(Quaternion::ONE, Quaternion::ZERO);

    pub const fn new(primal: Quaternion, dual: Quaternion) -> Self {
        Self { primal, dual }
    }

    /// `1 + ε/2 d`.
    pub fn from_translation(d: Point3) -> Self {
        Self::new(Quaternion::ONE, Quaternion::pure(d.scale(0.5)))
    }

    pub fn from_rotation(q: Quaternion) -> Self {
        Self::new(q, Quaternion::ZERO)
    }

    /// Components ordered `(w, x, y, z)` of the primal part then of the dual part.
    pub fn to_array(self) -> [f64; 8] {
        let p = self.primal.to_array();
        let d = self.dual.to_array();
        [p[0], p[1], p[2], p[3], d[0], d[1], d[2], d[3]]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self::new(
            Quaternion::new(a[0], a[1], a[2], a[3]),
            Quaternion::new(a[4], a[5], a[6], a[7]),
        )
    }

    pub fn norm(self) -> f64 {
        (self.primal.dot(self.primal) + self.dual.dot(self.dual)).sqrt()
    }

    /// Quaternion conjugate `q0* + ε qε*`; the inverse motion for unit inputs.
    pub fn conj(self) -> Self {
        Self::new(self.primal.conj(), self.dual.conj())
    }

    /// Combined conjugate `q0* − ε qε*`, the right factor of the point sandwich.
    pub fn combined_conj(self) -> Self {
        Self::new(self.primal.conj(), -self.dual.conj())
    }

    /// Rigid-motion unit test: `|q0| = 1` and `<q0, qε> = 0`.
    pub fn check_unit(self) -> Result<(), AlgebraError> {
        let norm = self.primal.norm();
        let dot = self.primal.dot(self.dual);
        let dot_tol = UNIT_TOL * (1.0 + self.dual.norm());
        if (norm - 1.0).abs() > UNIT_TOL || dot.abs() > dot_tol {
            return Err(AlgebraError::NonUnitDualQuaternion { norm, dot });
        }
        Ok(())
    }

    pub fn is_unit(self) -> bool {
        self.check_unit().is_ok()
    }

    /// Translation component `2 qε q0*` of a unit dual quaternion.
    pub fn translation(self) -> Point3 {
        (self.dual * self.primal.conj()).vector().scale(2.0)
    }

    /// Moves `p` by the sandwich `q̂ (1 + ε p) q̂‡`.
    pub fn transform_point(self, p: Point3) -> Result<Point3, AlgebraError> {
        self.check_unit()?;
        let embedded = DualQuaternion::new(Quaternion::ONE, Quaternion::pure(p));
        Ok((self * embedded * self.combined_conj()).dual.vector())
    }

    pub fn from_rigid(t: &RigidTransform) -> Result<Self, AlgebraError> {
        if !t.rotation.is_unit() {
            return Err(AlgebraError::NonUnitQuaternion(t.rotation.norm()));
        }
        let dual = (Quaternion::pure(t.translation) * t.rotation).scale(0.5);
        Ok(Self::new(t.rotation, dual))
    }

    pub fn to_rigid(self) -> Result<RigidTransform, AlgebraError> {
        self.check_unit()?;
        Ok(RigidTransform { rotation: self.primal, translation: self.translation() })
    }

    /// Screw motion `cos(θ̂/2) + ĥ sin(θ̂/2)` with `θ̂ = θ + ε s` and
    /// `ĥ = direction + ε moment`.
    pub fn from_screw(s: &ScrewParams) -> Result<Self, AlgebraError> {
        s.validate()?;
        let (sin_h, cos_h) = (0.5 * s.theta).sin_cos();
        let half_slide = 0.5 * s.slide;
        let u = s.direction;
        let m = s.moment;
        let primal = Quaternion::new(cos_h, sin_h * u.x, sin_h * u.y, sin_h * u.z);
        let dv = u.scale(half_slide * cos_h) + m.scale(sin_h);
        let dual = Quaternion::new(-half_slide * sin_h, dv.x, dv.y, dv.z);
        Ok(Self::new(primal, dual))
    }

    /// Screw decomposition of a unit dual quaternion.
    ///
    /// The result is canonical: with rotation, `direction` has its first
    /// nonzero component positive and `theta ∈ (0, 2π)`; a pure translation
    /// has `theta = 0`, `slide ≥ 0` and zero moment; the identity maps to
    /// `direction = (0, 0, 1)`.
    pub fn to_screw(self) -> Result<ScrewParams, AlgebraError> {
        self.check_unit()?;
        let mut q = self;
        let v0 = q.primal.vector();
        let sin_h = v0.norm();
        if sin_h < PURE_TRANSLATION_SIN {
            if q.primal.w < 0.0 {
                q = DualQuaternion::new(-q.primal, -q.dual);
            }
            let t = q.translation();
            let slide = t.norm();
            if slide <= ZERO_NORM_EPS {
                return Ok(ScrewParams::identity());
            }
            return Ok(ScrewParams {
                theta: 0.0,
                slide,
                direction: t.scale(1.0 / slide),
                moment: Point3::ZERO,
            });
        }
        let half_theta = sin_h.atan2(q.primal.w);
        let cos_h = half_theta.cos();
        let mut direction = v0.scale(1.0 / sin_h);
        let mut slide = -2.0 * q.dual.w / sin_h;
        let dv = q.dual.vector();
        let mut moment = (dv - direction.scale(0.5 * slide * cos_h)).scale(1.0 / sin_h);
        // strip any numerical component along the axis
        moment = moment - direction.scale(moment.dot(direction));
        let mut theta = 2.0 * half_theta;
        if !first_nonzero_positive(direction) {
            direction = -direction;
            moment = -moment;
            slide = -slide;
            theta = TAU - theta;
        }
        Ok(ScrewParams { theta: wrap_angle(theta), slide, direction, moment })
    }
}

impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, b: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(
            self.primal * b.primal,
            self.primal * b.dual + self.dual * b.primal,
        )
    }
}

impl Add for DualQuaternion {
    type Output = DualQuaternion;
    fn add(self, b: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.primal + b.primal, self.dual + b.dual)
    }
}

fn first_nonzero_positive(v: Point3) -> bool {
    for c in v.to_array() {
        if c.abs() > 1e-12 {
            return c > 0.0;
        }
    }
    true
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Screw motion: rotation `theta` about the line `(direction, moment)`
/// followed by a slide along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrewParams {
    pub theta: f64,
    pub slide: f64,
    pub direction: Point3,
    pub moment: Point3,
}

impl ScrewParams {
    pub fn identity() -> Self {
        Self { theta: 0.0, slide: 0.0, direction: Point3::new(0.0, 0.0, 1.0), moment: Point3::ZERO }
    }

    /// Screw about the line through `point` with unit direction `direction`.
    pub fn about_line(theta: f64, slide: f64, direction: Point3, point: Point3) -> Self {
        Self { theta, slide, direction, moment: point.cross(direction) }
    }

    /// The point of the axis closest to the origin.
    pub fn axis_offset(&self) -> Point3 {
        self.direction.cross(self.moment)
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        if !(self.theta.is_finite() && self.slide.is_finite())
            || !self.direction.is_finite()
            || !self.moment.is_finite()
        {
            return Err(AlgebraError::InvalidScrew("non-finite parameter"));
        }
        let moving = self.theta != 0.0 || self.slide != 0.0;
        if !moving {
            if self.moment.norm() > 0.0 {
                return Err(AlgebraError::InvalidScrew("no motion but nonzero axis moment"));
            }
            return Ok(());
        }
        let n = self.direction.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(AlgebraError::NonUnitAxis(n));
        }
        if self.direction.dot(self.moment).abs() > UNIT_TOL * (1.0 + self.moment.norm()) {
            return Err(AlgebraError::InvalidScrew("moment is not perpendicular to direction"));
        }
        Ok(())
    }
}

/// Rotation about the origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Quaternion,
    pub translation: Point3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Quaternion::ONE, translation: Point3::ZERO }
    }

    pub fn translation(d: Point3) -> Self {
        Self { rotation: Quaternion::ONE, translation: d }
    }

    pub fn rotation(q: Quaternion) -> Self {
        Self { rotation: q, translation: Point3::ZERO }
    }

    pub fn apply(&self, p: Point3) -> Result<Point3, AlgebraError> {
        DualQuaternion::from_rigid(self)?.transform_point(p)
    }
}

/// Angle in `[0, 2π)` equivalent to `theta`.
pub fn canonical_angle(theta: f64) -> f64 {
    wrap_angle(theta)
}

/// Smallest absolute difference between two angles modulo 2π.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}
