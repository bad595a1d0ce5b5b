//! Arithmetic of the first Heisenberg group and its Korányi gauge.
//!
//! Points are `(x1, x2, x3)` with the product
//! `p * q = (p1 + q1, p2 + q2, p3 + q3 + (p1 q2 - p2 q1) / 2)`.
//! The Korányi gauge is `((x1² + x2²)² + 16 x3²)^(1/4)` and the metric
//! `d(p, q) = ‖q⁻¹ p‖` is left invariant.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::ops::Mul;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HPoint<T> {
    pub x1: T,
    pub x2: T,
    pub x3: T,
}

impl<T: Real> HPoint<T> {
    #[inline]
    pub const fn new(x1: T, x2: T, x3: T) -> Self {
        Self { x1, x2, x3 }
    }

    /// Like [`HPoint::new`] but rejects non-finite coordinates.
    pub fn try_new(x1: T, x2: T, x3: T) -> Result<Self> {
        if x1.is_finite() && x2.is_finite() && x3.is_finite() {
            Ok(Self { x1, x2, x3 })
        } else {
            Err(Error::NonFinite("HPoint"))
        }
    }

    #[inline]
    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// The horizontal point `(v, 0)`.
    #[inline]
    pub fn horizontal(v1: T, v2: T) -> Self {
        Self::new(v1, v2, T::zero())
    }

    #[inline]
    pub fn inv(&self) -> Self {
        group_inv(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        koranyi_norm(self)
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// Coordinatewise sup-distance, used for rounding-level comparisons.
    pub fn max_abs_diff(&self, q: &Self) -> T {
        (self.x1 - q.x1)
            .abs()
            .max((self.x2 - q.x2).abs())
            .max((self.x3 - q.x3).abs())
    }

    pub fn max_abs(&self) -> T {
        self.x1.abs().max(self.x2.abs()).max(self.x3.abs())
    }

    pub fn cast<U: Real>(&self) -> HPoint<U> {
        HPoint::new(
            U::lit(self.x1.as_f64()),
            U::lit(self.x2.as_f64()),
            U::lit(self.x3.as_f64()),
        )
    }
}

impl<T: Real> Mul for HPoint<T> {
    type Output = HPoint<T>;

    #[inline]
    fn mul(self, rhs: Self) -> Self::Output {
        group_mul(&self, &rhs)
    }
}

#[inline]
pub fn group_mul<T: Real>(p: &HPoint<T>, q: &HPoint<T>) -> HPoint<T> {
    HPoint::new(
        p.x1 + q.x1,
        p.x2 + q.x2,
        p.x3 + q.x3 + T::half() * (p.x1 * q.x2 - p.x2 * q.x1),
    )
}

#[inline]
pub fn group_inv<T: Real>(p: &HPoint<T>) -> HPoint<T> {
    HPoint::new(-p.x1, -p.x2, -p.x3)
}

/// Fourth power of the Korányi gauge; avoids the two square roots when only
/// comparisons are needed.
#[inline]
pub fn koranyi_norm4<T: Real>(p: &HPoint<T>) -> T {
    let h = p.x1 * p.x1 + p.x2 * p.x2;
    h * h + T::lit(16.0) * p.x3 * p.x3
}

#[inline]
pub fn koranyi_norm<T: Real>(p: &HPoint<T>) -> T {
    koranyi_norm4(p).sqrt().sqrt()
}

#[inline]
pub fn koranyi_dist<T: Real>(p: &HPoint<T>, q: &HPoint<T>) -> T {
    koranyi_norm(&group_mul(&group_inv(q), p))
}

/// Anisotropic dilation `(r x1, r x2, r² x3)`.
pub fn dilate<T: Real>(r: T, p: &HPoint<T>) -> Result<HPoint<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::NonPositiveDilation(r.as_f64()));
    }
    Ok(HPoint::new(r * p.x1, r * p.x2, r * r * p.x3))
}

/// Rotation of the horizontal plane, `(x', x3) -> (O x', x3)`.
///
/// Every such map is a group automorphism and an isometry of the Korányi
/// metric, since the twist `x1 y2 - x2 y1` is a determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation2<T> {
    angle: T,
    cos: T,
    sin: T,
}

impl<T: Real> Rotation2<T> {
    pub fn new(angle: T) -> Self {
        Self {
            angle,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    pub fn angle(&self) -> T {
        self.angle
    }

    pub fn inverse(&self) -> Self {
        Self {
            angle: -self.angle,
            cos: self.cos,
            sin: -self.sin,
        }
    }

    /// Rotates a planar vector.
    #[inline]
    pub fn apply2(&self, v1: T, v2: T) -> (T, T) {
        (self.cos * v1 - self.sin * v2, self.sin * v1 + self.cos * v2)
    }

    #[inline]
    pub fn apply(&self, p: &HPoint<T>) -> HPoint<T> {
        let (a, b) = self.apply2(p.x1, p.x2);
        HPoint::new(a, b, p.x3)
    }
}

#[inline]
pub fn rotate<T: Real>(o: &Rotation2<T>, p: &HPoint<T>) -> HPoint<T> {
    o.apply(p)
}
