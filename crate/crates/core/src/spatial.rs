//! Rigid transforms and spatial (6D) algebra.
//!
//! Frames are right-handed and all quantities are SI. Spatial vectors are
//! ordered `(angular; linear)`. Quaternions are stored `(w, x, y, z)` and
//! renormalized after every composition.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Axis norms below this are rejected.
pub const MIN_AXIS_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("rotation axis has norm below {MIN_AXIS_NORM}")]
    ZeroAxis,
    #[error("invalid spatial inertia: {0}")]
    InvalidInertia(String),
}

// ---------------------------------------------------------------------------
// Vec3

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl<T: Real> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zeros() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn unit_x() -> Self {
        Vec3::new(T::one(), T::zero(), T::zero())
    }

    pub fn unit_y() -> Self {
        Vec3::new(T::zero(), T::one(), T::zero())
    }

    pub fn unit_z() -> Self {
        Vec3::new(T::zero(), T::zero(), T::one())
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Vec3::new(T::lit(x), T::lit(y), T::lit(z))
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn try_normalize(&self) -> Option<Self> {
        let n = self.norm();
        if n < T::lit(MIN_AXIS_NORM) || !n.is_finite() {
            None
        } else {
            Some(*self / n)
        }
    }

    pub fn max_abs(&self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component_mul(&self, o: &Self) -> Self {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

// ---------------------------------------------------------------------------
// Mat3

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Mat3<T> {
    pub rows: [[T; 3]; 3],
}

impl<T: Real> Default for Mat3<T> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real> Mat3<T> {
    pub fn from_rows(rows: [[T; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub fn zeros() -> Self {
        Mat3 { rows: [[T::zero(); 3]; 3] }
    }

    pub fn identity() -> Self {
        Self::from_diagonal(Vec3::new(T::one(), T::one(), T::one()))
    }

    pub fn from_diagonal(d: Vec3<T>) -> Self {
        let mut m = Self::zeros();
        m.rows[0][0] = d.x;
        m.rows[1][1] = d.y;
        m.rows[2][2] = d.z;
        m
    }

    /// Cross-product matrix: `skew(a) * b == a × b`.
    pub fn skew(v: Vec3<T>) -> Self {
        let z = T::zero();
        Mat3::from_rows([[z, -v.z, v.y], [v.z, z, -v.x], [-v.y, v.x, z]])
    }

    pub fn outer(a: Vec3<T>, b: Vec3<T>) -> Self {
        let a = a.to_array();
        let b = b.to_array();
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] = a[i] * b[j];
            }
        }
        m
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] = self.rows[j][i];
            }
        }
        m
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut m = *self;
        for row in m.rows.iter_mut() {
            for x in row.iter_mut() {
                *x = f(*x);
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn trace(&self) -> T {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn determinant(&self) -> T {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    pub fn try_inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det.abs() <= T::epsilon() * T::lit(1e-3) || !det.is_finite() {
            return None;
        }
        let r = &self.rows;
        let cof = |a: usize, b: usize, c: usize, d: usize| r[a][b] * r[c][d] - r[a][d] * r[c][b];
        let inv = Mat3::from_rows([
            [cof(1, 1, 2, 2), -cof(0, 1, 2, 2), cof(0, 1, 1, 2)],
            [-cof(1, 0, 2, 2), cof(0, 0, 2, 2), -cof(0, 0, 1, 2)],
            [cof(1, 0, 2, 1), -cof(0, 0, 2, 1), cof(0, 0, 1, 1)],
        ]);
        Some(inv.scale(T::one() / det))
    }

    pub fn max_asymmetry(&self) -> T {
        let r = &self.rows;
        (r[0][1] - r[1][0]).abs().max((r[0][2] - r[2][0]).abs()).max((r[1][2] - r[2][1]).abs())
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        let mut m = Mat3::<U>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] = U::lit(self.rows[i][j].as_f64());
            }
        }
        m
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] += o.rows[i][j];
            }
        }
        m
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

// ---------------------------------------------------------------------------
// Quaternion

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 4]", into = "[T; 4]")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> From<[T; 4]> for Quat<T> {
    fn from(a: [T; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl<T: Real> From<Quat<T>> for [T; 4] {
    fn from(q: Quat<T>) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl<T: Real> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Quat<T> {
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    /// Rotation of `angle` about a unit `axis`. The axis is not checked.
    pub fn from_axis_angle_unchecked(axis: &Vec3<T>, angle: T) -> Self {
        let half = angle * T::lit(0.5);
        let (s, c) = half.sin_cos();
        Quat::new(c, axis.x * s, axis.y * s, axis.z * s)
    }

    /// Rotation from a rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(v: &Vec3<T>) -> Self {
        let angle = v.norm();
        if angle <= T::epsilon() {
            // first-order expansion
            return Quat::new(T::one(), v.x * T::lit(0.5), v.y * T::lit(0.5), v.z * T::lit(0.5)).normalize();
        }
        Self::from_axis_angle_unchecked(&(*v / angle), angle)
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Mat3<T>) -> Self {
        let r = &m.rows;
        let one = T::one();
        let two = T::lit(2.0);
        let quarter = T::lit(0.25);
        let tr = m.trace();
        let q = if tr > T::zero() {
            let s = (tr + one).sqrt() * two;
            Quat::new(quarter * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s)
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (one + r[0][0] - r[1][1] - r[2][2]).sqrt() * two;
            Quat::new((r[2][1] - r[1][2]) / s, quarter * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s)
        } else if r[1][1] > r[2][2] {
            let s = (one + r[1][1] - r[0][0] - r[2][2]).sqrt() * two;
            Quat::new((r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, quarter * s, (r[1][2] + r[2][1]) / s)
        } else {
            let s = (one + r[2][2] - r[0][0] - r[1][1]).sqrt() * two;
            Quat::new((r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, quarter * s)
        };
        q.normalize()
    }

    /// URDF roll-pitch-yaw: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: T, pitch: T, yaw: T) -> Self {
        let qx = Self::from_axis_angle_unchecked(&Vec3::unit_x(), roll);
        let qy = Self::from_axis_angle_unchecked(&Vec3::unit_y(), pitch);
        let qz = Self::from_axis_angle_unchecked(&Vec3::unit_z(), yaw);
        qz.mul(&qy).mul(&qx).normalize()
    }

    /// Inverse of [`Quat::from_rpy`].
    pub fn to_rpy(&self) -> (T, T, T) {
        let m = self.to_matrix().rows;
        let pitch = (-m[2][0]).max(-T::one()).min(T::one()).asin();
        if (T::one() - m[2][0].abs()) > T::lit(1e-12) {
            let roll = m[2][1].atan2(m[2][2]);
            let yaw = m[1][0].atan2(m[0][0]);
            (roll, pitch, yaw)
        } else {
            // gimbal lock: fold roll into yaw
            let yaw = (-m[0][1]).atan2(m[1][1]);
            (T::zero(), pitch, yaw)
        }
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * o` (apply `o` first).
    #[inline]
    pub fn mul(&self, o: &Self) -> Self {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        // v + 2w(u × v) + 2u × (u × v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * T::lit(2.0);
        *v + t * self.w + u.cross(&t)
    }

    pub fn inverse_rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        self.conjugate().rotate(v)
    }

    pub fn to_matrix(&self) -> Mat3<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = T::lit(2.0);
        let one = T::one();
        Mat3::from_rows([
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ])
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> T {
        let v = Vec3::new(self.x, self.y, self.z).norm();
        T::lit(2.0) * v.atan2(self.w.abs())
    }

    /// Rotation vector (axis · angle) with angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3<T> {
        let q = if self.w < T::zero() { Quat::new(-self.w, -self.x, -self.y, -self.z) } else { *self };
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s <= T::epsilon() {
            return v * T::lit(2.0);
        }
        let angle = T::lit(2.0) * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn cast<U: Real>(&self) -> Quat<U> {
        Quat::new(U::lit(self.w.as_f64()), U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
///
/// The axis is normalized; axes shorter than [`MIN_AXIS_NORM`] are rejected.
pub fn axis_angle_to_quaternion<T: Real>(axis: &Vec3<T>, angle: T) -> Result<Quat<T>, SpatialError> {
    let n = axis.norm();
    if !(n >= T::lit(MIN_AXIS_NORM)) {
        return Err(SpatialError::ZeroAxis);
    }
    Ok(Quat::from_axis_angle_unchecked(&(*axis / n), angle).normalize())
}

// ---------------------------------------------------------------------------
// Transform

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Transform<T> {
    pub rotation: Quat<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for Transform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Transform<T> {
    pub fn new(rotation: Quat<T>, translation: Vec3<T>) -> Self {
        Transform { rotation: rotation.normalize(), translation }
    }

    pub fn identity() -> Self {
        Transform { rotation: Quat::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Transform { rotation: Quat::identity(), translation: t }
    }

    pub fn from_rotation(q: Quat<T>) -> Self {
        Transform::new(q, Vec3::zeros())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    #[inline]
    pub fn compose(&self, other: &Self) -> Self {
        Transform {
            rotation: self.rotation.mul(&other.rotation).normalize(),
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.conjugate();
        Transform { rotation: r, translation: -r.rotate(&self.translation) }
    }

    /// Rotates then translates `p`.
    #[inline]
    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(p) + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(v)
    }

    pub fn inverse_transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.inverse_rotate(&(*p - self.translation))
    }

    /// Homogeneous 4×4 matrix.
    pub fn to_homogeneous(&self) -> [[T; 4]; 4] {
        let r = self.rotation.to_matrix().rows;
        let t = self.translation;
        let z = T::zero();
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [z, z, z, T::one()],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite()
            && self.rotation.w.is_finite()
            && self.rotation.x.is_finite()
            && self.rotation.y.is_finite()
            && self.rotation.z.is_finite()
    }

    pub fn cast<U: Real>(&self) -> Transform<U> {
        Transform { rotation: self.rotation.cast(), translation: self.translation.cast() }
    }
}

/// See [`Transform::compose`].
pub fn compose<T: Real>(a: &Transform<T>, b: &Transform<T>) -> Transform<T> {
    a.compose(b)
}

/// See [`Transform::transform_point`].
pub fn transform_point<T: Real>(t: &Transform<T>, p: &Vec3<T>) -> Vec3<T> {
    t.transform_point(p)
}

// ---------------------------------------------------------------------------
// Spatial vectors

/// Motion (twist) or force (wrench) vector, `(angular; linear)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SpatialVector<T> {
    pub angular: Vec3<T>,
    pub linear: Vec3<T>,
}

impl<T: Real> SpatialVector<T> {
    pub fn new(angular: Vec3<T>, linear: Vec3<T>) -> Self {
        SpatialVector { angular, linear }
    }

    pub fn zeros() -> Self {
        SpatialVector::new(Vec3::zeros(), Vec3::zeros())
    }

    /// Motion cross product `self ×m m`.
    #[inline]
    pub fn cross_motion(&self, m: &Self) -> Self {
        SpatialVector::new(
            self.angular.cross(&m.angular),
            self.angular.cross(&m.linear) + self.linear.cross(&m.angular),
        )
    }

    /// Force cross product `self ×f f`.
    #[inline]
    pub fn cross_force(&self, f: &Self) -> Self {
        SpatialVector::new(
            self.angular.cross(&f.angular) + self.linear.cross(&f.linear),
            self.angular.cross(&f.linear),
        )
    }

    /// Pairing of a motion and a force vector (power).
    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.angular.dot(&o.angular) + self.linear.dot(&o.linear)
    }

    pub fn scale(&self, s: T) -> Self {
        SpatialVector::new(self.angular * s, self.linear * s)
    }

    /// Classical velocity of the body point `p`, for a twist expressed at the
    /// coordinate origin.
    pub fn point_velocity(&self, p: &Vec3<T>) -> Vec3<T> {
        self.linear + self.angular.cross(p)
    }

    pub fn to_array(&self) -> [T; 6] {
        [self.angular.x, self.angular.y, self.angular.z, self.linear.x, self.linear.y, self.linear.z]
    }

    pub fn from_array(a: [T; 6]) -> Self {
        SpatialVector::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]))
    }

    pub fn max_abs(&self) -> T {
        self.angular.max_abs().max(self.linear.max_abs())
    }
}

impl<T: Real> Add for SpatialVector<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        SpatialVector::new(self.angular + o.angular, self.linear + o.linear)
    }
}

impl<T: Real> AddAssign for SpatialVector<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for SpatialVector<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        SpatialVector::new(self.angular - o.angular, self.linear - o.linear)
    }
}

impl<T: Real> SubAssign for SpatialVector<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for SpatialVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        SpatialVector::new(-self.angular, -self.linear)
    }
}

impl<T: Real> Mul<T> for SpatialVector<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

// ---------------------------------------------------------------------------
// Mat6

/// Dense 6×6 matrix acting on spatial vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat6<T> {
    pub m: [[T; 6]; 6],
}

impl<T: Real> Mat6<T> {
    pub fn zeros() -> Self {
        Mat6 { m: [[T::zero(); 6]; 6] }
    }

    /// Builds `[[a, b], [c, d]]` from 3×3 blocks.
    pub fn from_blocks(a: Mat3<T>, b: Mat3<T>, c: Mat3<T>, d: Mat3<T>) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = a.rows[i][j];
                out.m[i][j + 3] = b.rows[i][j];
                out.m[i + 3][j] = c.rows[i][j];
                out.m[i + 3][j + 3] = d.rows[i][j];
            }
        }
        out
    }

    #[inline]
    pub fn mul_vec(&self, v: &SpatialVector<T>) -> SpatialVector<T> {
        let a = v.to_array();
        let mut out = [T::zero(); 6];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.m[i];
            *o = row[0] * a[0] + row[1] * a[1] + row[2] * a[2] + row[3] * a[3] + row[4] * a[4] + row[5] * a[5];
        }
        SpatialVector::from_array(out)
    }

    /// `u wᵀ`
    pub fn outer(u: &SpatialVector<T>, w: &SpatialVector<T>) -> Self {
        let a = u.to_array();
        let b = w.to_array();
        let mut out = Self::zeros();
        for i in 0..6 {
            for j in 0..6 {
                out.m[i][j] = a[i] * b[j];
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }
}

impl<T: Real> Add for Mat6<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..6 {
            for j in 0..6 {
                out.m[i][j] += o.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> AddAssign for Mat6<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Mat6<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

// ---------------------------------------------------------------------------
// Spatial inertia

/// Rigid-body inertia: mass, centre of mass and rotational inertia about the
/// centre of mass, all expressed in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SpatialInertia<T> {
    pub mass: T,
    pub com: Vec3<T>,
    pub inertia: Mat3<T>,
}

impl<T: Real> SpatialInertia<T> {
    /// Validated constructor: mass > 0, inertia symmetric and PSD.
    pub fn new(mass: T, com: Vec3<T>, inertia: Mat3<T>) -> Result<Self, SpatialError> {
        let si = SpatialInertia { mass, com, inertia };
        si.validate()?;
        Ok(si)
    }

    pub fn point_mass(mass: T, at: Vec3<T>) -> Self {
        SpatialInertia { mass, com: at, inertia: Mat3::zeros() }
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        if !(self.mass > T::zero()) || !self.mass.is_finite() {
            return Err(SpatialError::InvalidInertia(format!("mass must be positive, got {}", self.mass)));
        }
        if !self.com.is_finite() {
            return Err(SpatialError::InvalidInertia("non-finite centre of mass".into()));
        }
        let scale = self.inertia.trace().abs().max(T::one());
        if self.inertia.max_asymmetry() > T::lit(1e-12) * scale {
            return Err(SpatialError::InvalidInertia("inertia matrix is not symmetric".into()));
        }
        // Sylvester-style PSD check on the symmetric part via principal minors
        // is unreliable for singular PSD matrices; use eigenvalue bounds of the
        // 3×3 symmetric matrix instead.
        let min_eig = symmetric_min_eigenvalue(&self.inertia);
        if min_eig < -T::lit(1e-12) * scale {
            return Err(SpatialError::InvalidInertia("inertia matrix is not positive semi-definite".into()));
        }
        Ok(())
    }

    /// Expresses this inertia in the parent frame of `t`.
    pub fn transformed(&self, t: &Transform<T>) -> Self {
        let r = t.rotation.to_matrix();
        SpatialInertia {
            mass: self.mass,
            com: t.transform_point(&self.com),
            inertia: r.mul_mat(&self.inertia).mul_mat(&r.transpose()),
        }
    }

    /// Sum of two inertias expressed in the same frame.
    pub fn combine(&self, o: &Self) -> Self {
        let m = self.mass + o.mass;
        let com = (self.com * self.mass + o.com * o.mass) / m;
        let shift = |si: &Self| {
            let d = si.com - com;
            si.inertia + (Mat3::identity().scale(d.dot(&d)) - Mat3::outer(d, d)).scale(si.mass)
        };
        SpatialInertia { mass: m, com, inertia: shift(self) + shift(o) }
    }

    pub fn scaled(&self, factor: T) -> Self {
        SpatialInertia { mass: self.mass * factor, com: self.com, inertia: self.inertia.scale(factor) }
    }

    /// 6×6 spatial inertia about the frame origin.
    pub fn to_mat6(&self) -> Mat6<T> {
        let cx = Mat3::skew(self.com);
        let m = self.mass;
        let top_left = self.inertia + cx.mul_mat(&cx.transpose()).scale(m);
        Mat6::from_blocks(top_left, cx.scale(m), cx.transpose().scale(m), Mat3::identity().scale(m))
    }

    pub fn cast<U: Real>(&self) -> SpatialInertia<U> {
        SpatialInertia { mass: U::lit(self.mass.as_f64()), com: self.com.cast(), inertia: self.inertia.cast() }
    }
}

/// Smallest eigenvalue of a symmetric 3×3 matrix (closed form).
pub fn symmetric_min_eigenvalue<T: Real>(a: &Mat3<T>) -> T {
    let r = &a.rows;
    let p1 = r[0][1] * r[0][1] + r[0][2] * r[0][2] + r[1][2] * r[1][2];
    let q = a.trace() / T::lit(3.0);
    if p1 <= T::epsilon() * T::epsilon() {
        return r[0][0].min(r[1][1]).min(r[2][2]);
    }
    let p2 = (r[0][0] - q).powi(2) + (r[1][1] - q).powi(2) + (r[2][2] - q).powi(2) + T::lit(2.0) * p1;
    let p = (p2 / T::lit(6.0)).sqrt();
    let b = (*a - Mat3::identity().scale(q)).scale(T::one() / p);
    let half_det = b.determinant() / T::lit(2.0);
    let phi = half_det.max(-T::one()).min(T::one()).acos() / T::lit(3.0);
    q + T::lit(2.0) * p * (phi + T::lit(2.0) * T::PI() / T::lit(3.0)).cos()
}
