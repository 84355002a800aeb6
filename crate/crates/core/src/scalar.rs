//! Scalar abstraction and small fixed-size linear algebra.
//!
//! Everything numeric in the crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Two-component complex vectors
//! ([`Spinor`]) carry sublattice amplitudes; [`Vec2`] carries momenta and
//! lattice vectors.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Floating-point scalar usable throughout the simulator.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Infallible for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine tolerance appropriate for "exact" comparisons.
    fn eps_scale() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase<T: Real>(x: T) -> T {
    let two_pi = T::TAU();
    let mut y = x % two_pi;
    if y > T::PI() {
        y -= two_pi;
    } else if y <= -T::PI() {
        y += two_pi;
    }
    y
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_positive<T: Real>(x: T) -> T {
    let two_pi = T::TAU();
    let y = x % two_pi;
    let y = if y < T::zero() { y + two_pi } else { y };
    if y >= two_pi {
        T::zero()
    } else {
        y
    }
}

/// Planar vector: a momentum, a lattice vector or a force.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> From<[T; 2]> for Vec2<T> {
    fn from(v: [T; 2]) -> Self {
        Vec2 { x: v[0], y: v[1] }
    }
}

impl<T: Real> From<Vec2<T>> for [T; 2] {
    fn from(v: Vec2<T>) -> Self {
        [v.x, v.y]
    }
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec2::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Point at fraction `s` of the way from `self` to `o`.
    #[inline]
    pub fn lerp(self, o: Self, s: T) -> Self {
        self + (o - self).scale(s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// Two-component complex vector in the (A, B) sublattice basis.
pub type Spinor<T> = [Complex<T>; 2];

/// 2x2 complex matrix, row major.
pub type Mat2<T> = [[Complex<T>; 2]; 2];

/// `⟨a|b⟩`
#[inline]
pub fn inner<T: Real>(a: &Spinor<T>, b: &Spinor<T>) -> Complex<T> {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

#[inline]
pub fn norm_sqr<T: Real>(a: &Spinor<T>) -> T {
    a[0].norm_sqr() + a[1].norm_sqr()
}

#[inline]
pub fn scale<T: Real>(a: &Spinor<T>, s: Complex<T>) -> Spinor<T> {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn add<T: Real>(a: &Spinor<T>, b: &Spinor<T>) -> Spinor<T> {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn mat_vec<T: Real>(m: &Mat2<T>, v: &Spinor<T>) -> Spinor<T> {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat_mul<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn adjoint<T: Real>(a: &Mat2<T>) -> Mat2<T> {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

/// Largest entry-wise modulus of `a - b`.
pub fn mat_max_diff<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> T {
    let mut m = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).norm());
        }
    }
    m
}

/// Splits a nonzero vector into `(amplitude, unit vector)` where the unit
/// vector has its largest-modulus component real and positive (ties go to
/// the first component).
pub fn canonical_split<T: Real>(w: &Spinor<T>) -> (Complex<T>, Spinor<T>) {
    let n = norm_sqr(w).sqrt();
    if n == T::zero() {
        let zero = Complex::new(T::zero(), T::zero());
        return (zero, [Complex::new(T::one(), T::zero()), zero]);
    }
    let pivot = if w[0].norm() >= w[1].norm() { w[0] } else { w[1] };
    let phase = pivot / pivot.norm();
    let amp = phase * n;
    let unit = scale(w, Complex::new(T::one(), T::zero()) / amp);
    (amp, unit)
}

/// Complex unit `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}
