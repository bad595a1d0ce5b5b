//! Real roots of cubics.
//!
//! Closed-form (Cardano / trigonometric) roots followed by two Newton steps
//! on the original polynomial.

use crate::scalar::Real;

/// Up to three real roots, ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roots<T> {
    len: usize,
    vals: [T; 3],
}

impl<T: Real> Roots<T> {
    fn empty() -> Self {
        Self {
            len: 0,
            vals: [T::zero(); 3],
        }
    }

    fn push(&mut self, x: T) {
        if self.len < 3 && x.is_finite() {
            self.vals[self.len] = x;
            self.len += 1;
        }
    }

    fn sort(&mut self) {
        let s = &mut self.vals[..self.len];
        s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    }

    pub fn as_slice(&self) -> &[T] {
        &self.vals[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// The unique real root of `x³ + p x + q = 0` for `p ≥ 0`.
///
/// With `p ≥ 0` the cubic is strictly increasing (or `x³ + q`), so there is
/// exactly one real root. The form used here has no cancellation.
#[inline]
pub fn monotone_depressed_root<T: Real>(p: T, q: T) -> T {
    debug_assert!(p >= T::zero());
    if q == T::zero() {
        return T::zero();
    }
    let three = T::lit(3.0);
    let h = q * q / T::lit(4.0) + p * p * p / T::lit(27.0);
    let a = (q.abs() / T::two() + h.sqrt()).cbrt();
    let mut x = if a == T::zero() {
        T::zero()
    } else {
        -q.signum() * (a - p / (three * a))
    };
    // polish
    for _ in 0..2 {
        let f = x * x * x + p * x + q;
        let d = three * x * x + p;
        if d > T::zero() {
            x = x - f / d;
        }
    }
    x
}

/// Real roots of `c3 x³ + c2 x² + c1 x + c0`.
///
/// Falls back to the quadratic or linear formula when the leading
/// coefficients vanish relative to the others.
pub fn real_cubic_roots<T: Real>(c3: T, c2: T, c1: T, c0: T) -> Roots<T> {
    let scale = c2.abs().max(c1.abs()).max(c0.abs());
    if c3.abs() <= T::epsilon() * scale || c3 == T::zero() {
        return real_quadratic_roots(c2, c1, c0);
    }
    let a = c2 / c3;
    let b = c1 / c3;
    let c = c0 / c3;
    let three = T::lit(3.0);
    let third = a / three;
    // x = t - a/3 gives t³ + p t + q
    let p = b - a * a / three;
    let q = T::two() * a * a * a / T::lit(27.0) - a * b / three + c;
    let mut out = Roots::empty();
    let disc = q * q / T::lit(4.0) + p * p * p / T::lit(27.0);
    if disc > T::zero() || p >= T::zero() {
        let t = if p >= T::zero() {
            monotone_depressed_root(p, q)
        } else {
            let s = disc.sqrt();
            let u = (-q / T::two() + s).cbrt();
            let v = (-q / T::two() - s).cbrt();
            u + v
        };
        out.push(t - third);
    } else {
        // three real roots
        let m = T::two() * (-p / three).sqrt();
        let arg = (three * q / (p * m)).max(-T::one()).min(T::one());
        let theta = arg.acos() / three;
        let tau = T::TAU() / three;
        for k in 0..3 {
            let t = m * (theta - tau * T::lit(k as f64)).cos();
            out.push(t - third);
        }
    }
    for x in out.vals[..out.len].iter_mut() {
        for _ in 0..2 {
            let f = ((c3 * *x + c2) * *x + c1) * *x + c0;
            let d = (three * c3 * *x + T::two() * c2) * *x + c1;
            if d != T::zero() {
                let nx = *x - f / d;
                if nx.is_finite() {
                    *x = nx;
                }
            }
        }
    }
    out.sort();
    out
}

pub fn real_quadratic_roots<T: Real>(c2: T, c1: T, c0: T) -> Roots<T> {
    let mut out = Roots::empty();
    let scale = c1.abs().max(c0.abs());
    if c2.abs() <= T::epsilon() * scale || c2 == T::zero() {
        if c1 != T::zero() {
            out.push(-c0 / c1);
        }
        return out;
    }
    let disc = c1 * c1 - T::lit(4.0) * c2 * c0;
    if disc < T::zero() {
        return out;
    }
    let s = disc.sqrt();
    // stable form
    let qq = -T::half() * (c1 + c1.signum() * s);
    if qq != T::zero() {
        out.push(qq / c2);
        out.push(c0 / qq);
    } else {
        out.push(T::zero());
        out.push(T::zero());
    }
    out.sort();
    out
}
