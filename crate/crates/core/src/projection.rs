//! The vertical projection `π_W` onto `W = {x1 = 0}` along cosets of the
//! `x1`-axis, and its action on tubes.
//!
//! `π_W(x1, x2, x3) = (x2, x3 + x1 x2 / 2)` (identifying `W` with `ℝ²`). The
//! image of the core of a tube with direction `e = (cos φ, sin φ)`,
//! `sin φ > 0`, is the parabola arc `s ↦ (s, a s²/2 + b s + c)` with
//!
//! ```text
//! a = cot φ,  b = y1 - a y2,  c = y3 - y1 y2 / 2 + a y2² / 2,
//! s ∈ [y2 - sin φ / 2, y2 + sin φ / 2].
//! ```
//!
//! For `x = p · z` with `p` on the core and `‖z‖ ≤ δ` the projected point sits
//! at arc parameter `p2 + z2` with vertical offset `z3 + z1 z2 / 2 - a z2² / 2`,
//! which is at most `(1 + |a|) δ² / 2` in absolute value.

use crate::error::{Error, Result};
use crate::heis::{group_mul, HPoint};
use crate::roots::real_cubic_roots;
use crate::sampling::rng_for;
use crate::tubes::{sample_in_tube, segment_point, tube_contains, Tube};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The arc `{(s, a s²/2 + b s + c) : s ∈ [s_minus, s_plus]}` together with
/// the radius of the neighbourhood that contains the projected tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub nbhd_radius: f64,
}

impl ParabolaParams {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (0.5 * self.a * s + self.b) * s + self.c
    }
}

#[inline]
pub fn pi_w(p: &HPoint<f64>) -> (f64, f64) {
    (p.x2, p.x3 + 0.5 * p.x1 * p.x2)
}

/// The point `(0, w1, w2)` of `W`.
#[inline]
pub fn w_point(w: (f64, f64)) -> HPoint<f64> {
    HPoint::new(0.0, w.0, w.1)
}

/// `(1 + |a|) δ² / 2`.
pub fn nbhd_radius_for(a: f64, delta: f64) -> f64 {
    0.5 * (1.0 + a.abs()) * delta * delta
}

/// Arc parameters of the projected tube.
///
/// A tube and its reversal `T_δ(y, -e)` are the same set, so directions with
/// `sin φ < 0` are handled through `-e`. Directions with `sin φ = 0` have no
/// graph parametrization and are rejected; rotate them first.
pub fn tube_to_parabola(tube: &Tube<f64>) -> Result<ParabolaParams> {
    let (mut e1, mut e2) = tube.dir.e();
    if e2.abs() <= 1e-15 {
        return Err(Error::DegenerateDirection(tube.dir.phi()));
    }
    if e2 < 0.0 {
        e1 = -e1;
        e2 = -e2;
    }
    let y = tube.base;
    let a = e1 / e2;
    let half_len = 0.5 / (1.0 + a * a).sqrt();
    Ok(ParabolaParams {
        a,
        b: y.x1 - a * y.x2,
        c: y.x3 - 0.5 * y.x1 * y.x2 + 0.5 * a * y.x2 * y.x2,
        s_minus: y.x2 - half_len,
        s_plus: y.x2 + half_len,
        nbhd_radius: nbhd_radius_for(a, tube.radius()),
    })
}

pub fn parabola_point(pp: &ParabolaParams, s: f64) -> (f64, f64) {
    (s, pp.eval(s))
}

/// Euclidean distance from `(px, py)` to the arc of `s ↦ a s²/2 + b s + c`
/// over `[lo, hi]`, with the minimising parameter.
///
/// Critical parameters are the real roots of the derivative of the squared
/// distance,
/// `(a²/2) s³ + (3ab/2) s² + (b² + a d + 1) s + (b d - px)` with `d = c - py`;
/// the minimum is taken over the clamped roots and the endpoints.
pub fn arc_distance(a: f64, b: f64, c: f64, lo: f64, hi: f64, px: f64, py: f64) -> (f64, f64) {
    let d = c - py;
    let sq = |s: f64| {
        let dx = s - px;
        let dy = (0.5 * a * s + b) * s + d;
        dx * dx + dy * dy
    };
    let mut best_s = lo;
    let mut best = sq(lo);
    let mut consider = |s: f64| {
        let s = s.clamp(lo, hi);
        let v = sq(s);
        if v < best {
            best = v;
            best_s = s;
        }
    };
    consider(hi);
    let roots = real_cubic_roots(0.5 * a * a, 1.5 * a * b, b * b + a * d + 1.0, b * d - px);
    for &s in roots.as_slice() {
        consider(s);
    }
    (best.sqrt(), best_s)
}

/// Distance from `pt` to the arc `γ([lo, hi])` of `pp`.
pub fn dist_to_arc(pp: &ParabolaParams, lo: f64, hi: f64, pt: (f64, f64)) -> f64 {
    arc_distance(pp.a, pp.b, pp.c, lo, hi, pt.0, pt.1).0
}

/// Largest Euclidean deviation between `π_W(y · (s' e, 0))` and the arc
/// point at parameter `y2 + s' sin φ`, over `n` equally spaced `s'`.
pub fn verify_segment_projection(tube: &Tube<f64>, n: usize) -> Result<f64> {
    let pp = tube_to_parabola(tube)?;
    let (mut e1, mut e2) = tube.dir.e();
    if e2 < 0.0 {
        e1 = -e1;
        e2 = -e2;
    }
    let dir = crate::tubes::Direction::from_vector(e1, e2);
    let n = n.max(2);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let s_prime = (-0.5 + k as f64 / (n - 1) as f64).clamp(-0.5, 0.5);
        let x = segment_point(&tube.base, &dir, s_prime)?;
        let (u, v) = pi_w(&x);
        let (gu, gv) = parabola_point(&pp, tube.base.x2 + s_prime * e2);
        worst = worst.max(((u - gu).powi(2) + (v - gv).powi(2)).sqrt());
    }
    Ok(worst)
}

/// Summary of a sampled lemma check; serializes to
/// `{lemma, params, n_samples, violations, max_ratio}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub params: BTreeMap<String, f64>,
    pub n_samples: usize,
    pub violations: usize,
    pub max_ratio: f64,
}

impl LemmaReport {
    pub fn new(lemma: &str) -> Self {
        Self {
            lemma: lemma.to_string(),
            params: BTreeMap::new(),
            n_samples: 0,
            violations: 0,
            max_ratio: 0.0,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Accumulates another report of the same lemma.
    pub fn merge(&mut self, other: &LemmaReport) {
        self.n_samples += other.n_samples;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Samples `n` points of the tube and checks that each projects within
/// `(1 + |a|) δ² / 2` of the arc over `[s₋ - δ, s₊ + δ]`. `max_ratio` is the
/// largest observed distance divided by `δ²`.
pub fn verify_tube_projection(tube: &Tube<f64>, n: usize, seed: u64) -> Result<LemmaReport> {
    let pp = tube_to_parabola(tube)?;
    let delta = tube.radius();
    let lo = pp.s_minus - delta;
    let hi = pp.s_plus + delta;
    let mut rng = rng_for(seed, 0x9a0);
    let mut report = LemmaReport::new("tube-projection")
        .with_param("delta", delta)
        .with_param("a", pp.a)
        .with_param("r", pp.nbhd_radius);
    for _ in 0..n {
        let x = sample_in_tube(&mut rng, tube);
        let d = dist_to_arc(&pp, lo, hi, pi_w(&x));
        if d > pp.nbhd_radius + 1e-12 {
            report.violations += 1;
        }
        report.max_ratio = report.max_ratio.max(d / (delta * delta));
    }
    report.n_samples = n;
    Ok(report)
}

/// Whether the direction makes an angle of at most π/4 with the `x2`-axis.
pub fn satisfies_angle_hypothesis(tube: &Tube<f64>) -> bool {
    tube.dir.e().1.abs() >= std::f64::consts::FRAC_1_SQRT_2 * (1.0 - 1e-12)
}

/// Length of `{x ∈ ℝ : w · (x, 0, 0) ∈ T}`, measured by midpoint sampling at
/// the given step over `[y1 - 2, y1 + 2]` (the tube's horizontal shadow lies
/// inside this window).
pub fn fiber_length(tube: &Tube<f64>, w: (f64, f64), step: f64) -> Result<f64> {
    if !satisfies_angle_hypothesis(tube) {
        return Err(Error::AngleHypothesis(tube.dir.phi()));
    }
    if !(step > 0.0) {
        return Err(Error::OutOfRange {
            name: "fiber step",
            value: step,
            range: "(0, inf)",
        });
    }
    let wp = w_point(w);
    let lo = tube.base.x1 - 2.0;
    let n = (4.0 / step).ceil() as usize;
    let count = (0..n)
        .filter(|&k| {
            let x = lo + (k as f64 + 0.5) * step;
            tube_contains(tube, &group_mul(&wp, &HPoint::new(x, 0.0, 0.0)))
        })
        .count();
    Ok(count as f64 * step)
}

/// The bound `2√2 δ` on fiber lengths under the angle hypothesis.
pub fn fiber_bound(delta: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * delta
}

/// Relative discrepancy between `∫ h` and `∫_W ∫_ℝ h((0, y, t) · (x, 0, 0))`.
///
/// Both sides use the tensor trapezoid rule with `quad_n` nodes per axis on
/// `[-L, L]² × [-L3, L3]`, `L3 = L + L²/2`, which contains the sheared image
/// of `[-L, L]³`. For smooth integrands decaying well inside the box the rule
/// converges spectrally, so the discrepancy is pure quadrature error.
pub fn fubini_check<F>(h: F, half_width: f64, quad_n: usize) -> f64
where
    F: Fn(&HPoint<f64>) -> f64,
{
    let l = half_width;
    let l3 = l + 0.5 * l * l;
    let n = quad_n.max(2);
    let nodes = |len: f64| -> Vec<(f64, f64)> {
        let step = 2.0 * len / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                (-len + step * i as f64, w * step)
            })
            .collect()
    };
    let hz = nodes(l);
    let vt = nodes(l3);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for &(x, wx) in &hz {
        for &(y, wy) in &hz {
            let mut acc_l = 0.0;
            let mut acc_r = 0.0;
            for &(t, wt) in &vt {
                acc_l += wt * h(&HPoint::new(x, y, t));
                // (0, y, t) · (x, 0, 0) = (x, y, t - x y / 2)
                acc_r += wt * h(&group_mul(&HPoint::new(0.0, y, t), &HPoint::new(x, 0.0, 0.0)));
            }
            lhs += wx * wy * acc_l;
            rhs += wx * wy * acc_r;
        }
    }
    if lhs == 0.0 {
        if rhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((lhs - rhs) / lhs).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heis::koranyi_dist;
    use crate::sampling::uniform_in_ball;
    use crate::tubes::{Direction, Tube};
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn tube(y: HPoint<f64>, phi: f64, delta: f64) -> Tube<f64> {
        Tube::new(y, Direction::new(phi), delta).unwrap()
    }

    #[test]
    fn pi_w_examples() {
        assert_eq!(pi_w(&HPoint::new(0.0, 0.7, -1.2)), (0.7, -1.2));
        assert_eq!(pi_w(&HPoint::new(1.0, 1.0, 0.0)), (1.0, 0.5));
        let mut rng = rng_for(3, 0);
        for _ in 0..1000 {
            let (x, y, t): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let p = group_mul(&HPoint::new(0.0, y, t), &HPoint::new(x, 0.0, 0.0));
            let (u, v) = pi_w(&p);
            assert!((u - y).abs() < 1e-15 && (v - t).abs() < 1e-15);
        }
    }

    #[test]
    fn parabola_params_examples() {
        let pp = tube_to_parabola(&tube(HPoint::identity(), FRAC_PI_2, 0.1)).unwrap();
        assert!(pp.a.abs() < 1e-15 && pp.b.abs() < 1e-15 && pp.c.abs() < 1e-15);
        assert!((pp.s_minus + 0.5).abs() < 1e-15 && (pp.s_plus - 0.5).abs() < 1e-15);
        assert!((pp.nbhd_radius - 0.005).abs() < 1e-15);

        let pp = tube_to_parabola(&tube(HPoint::new(1.0, 2.0, 3.0), FRAC_PI_4, 0.1)).unwrap();
        assert!((pp.a - 1.0).abs() < 1e-15);
        assert!((pp.b + 1.0).abs() < 1e-15);
        assert!((pp.c - 4.0).abs() < 1e-14);
        assert!((pp.s_minus - (2.0 - 0.5 / SQRT_2)).abs() < 1e-15);
        assert!((pp.s_plus - (2.0 + 0.5 / SQRT_2)).abs() < 1e-15);
        assert!((pp.s_plus - pp.s_minus - 1.0 / (1.0 + pp.a * pp.a).sqrt()).abs() < 1e-15);

        assert!(matches!(
            tube_to_parabola(&tube(HPoint::identity(), 0.0, 0.1)),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn parabola_point_examples() {
        let pp = |a, b, c| ParabolaParams { a, b, c, s_minus: 0.0, s_plus: 1.0, nbhd_radius: 0.0 };
        assert_eq!(parabola_point(&pp(0.0, 0.0, 0.0), 1.0), (1.0, 0.0));
        assert_eq!(parabola_point(&pp(2.0, 0.0, 0.0), 1.0), (1.0, 1.0));
        assert_eq!(parabola_point(&pp(1.0, -1.0, 4.0), 2.0), (2.0, 4.0));
    }

    #[test]
    fn endpoint_of_diagonal_tube() {
        let t = tube(HPoint::new(1.0, 2.0, 3.0), FRAC_PI_4, 0.1);
        let x = segment_point(&t.base, &t.dir, 0.5).unwrap();
        let want = (2.0 + 0.5 / SQRT_2, {
            let s: f64 = 2.0 + 0.5 / SQRT_2;
            0.5 * s * s - s + 4.0
        });
        let got = pi_w(&x);
        assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12);
        assert!(verify_segment_projection(&t, 1000).unwrap() < 1e-12);
    }

    #[test]
    fn segment_projection_exact_on_random_quadrant_tubes() {
        let mut rng = rng_for(4, 0);
        for _ in 0..100 {
            let phi = rng.random_range(FRAC_PI_4..=3.0 * FRAC_PI_4);
            let t = tube(uniform_in_ball(&mut rng, 2.0), phi, 0.1);
            assert!(verify_segment_projection(&t, 1000).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn lower_half_directions_use_reversed_segment() {
        let t = tube(HPoint::new(0.2, -0.1, 0.4), FRAC_PI_4 + std::f64::consts::PI, 0.1);
        assert!(verify_segment_projection(&t, 200).unwrap() < 1e-12);
        let r = verify_tube_projection(&t, 2000, 1).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn a_coefficients_separate_with_directions() {
        // a = cot φ is bi-Lipschitz in the chord on the quadrant; the smallest
        // ratio |a - a'| / |e - e'| is attained near φ = π/2.
        let mut rng = rng_for(5, 0);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..10_000 {
            let p1 = rng.random_range(FRAC_PI_4..=3.0 * FRAC_PI_4);
            let p2 = rng.random_range(FRAC_PI_4..=3.0 * FRAC_PI_4);
            let (d1, d2) = (Direction::new(p1), Direction::new(p2));
            let chord = d1.chord(&d2);
            if chord < 1e-6 {
                continue;
            }
            let a1 = 1.0 / p1.tan();
            let a2 = 1.0 / p2.tan();
            min_ratio = min_ratio.min((a1 - a2).abs() / chord);
        }
        assert!(min_ratio >= 0.99, "{min_ratio}");
    }

    #[test]
    fn tube_projection_containment() {
        for (k, phi) in [(4, FRAC_PI_2), (6, 1.0), (4, 2.2)] {
            let delta = 2f64.powi(-k);
            let t = tube(HPoint::new(0.3, -0.4, 0.1), phi, delta);
            let r = verify_tube_projection(&t, 10_000, k as u64).unwrap();
            assert_eq!(r.violations, 0);
            let a = tube_to_parabola(&t).unwrap().a;
            assert!(r.max_ratio <= (1.0 + a.abs()) / 2.0 + 1e-9);
        }
        let t = tube(HPoint::identity(), FRAC_PI_2, 0.05);
        let r = verify_tube_projection(&t, 5000, 2).unwrap();
        assert!(r.max_ratio <= 0.5 + 1e-9);
        let json = r.to_json();
        for key in ["lemma", "params", "n_samples", "violations", "max_ratio"] {
            assert!(json.contains(key));
        }
    }

    #[test]
    fn arc_distance_matches_dense_sampling() {
        let mut rng = rng_for(6, 0);
        for _ in 0..500 {
            let (a, b, c) = (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
            let (lo, hi) = (-0.7, 0.9);
            let (px, py) = (rng.random_range(-1.5..1.5), rng.random_range(-2.0..2.0));
            let exact = arc_distance(a, b, c, lo, hi, px, py).0;
            let n = 20_000;
            let dense = (0..=n)
                .map(|i| {
                    let s = lo + (hi - lo) * i as f64 / n as f64;
                    let y = 0.5 * a * s * s + b * s + c;
                    ((s - px).powi(2) + (y - py).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(exact <= dense + 1e-12);
            assert!(dense - exact < 1e-3, "exact {exact} dense {dense}");
        }
    }

    #[test]
    fn fiber_examples() {
        let delta = 0.05;
        let t = tube(HPoint::identity(), FRAC_PI_2, delta);
        let step = delta / 200.0;
        let len = fiber_length(&t, (0.0, 0.0), step).unwrap();
        assert!((len - 2.0 * delta).abs() <= 2.0 * step, "{len}");
        assert_eq!(fiber_length(&t, (5.0, 0.0), step).unwrap(), 0.0);
        assert!(matches!(
            fiber_length(&tube(HPoint::identity(), 0.3, delta), (0.0, 0.0), step),
            Err(Error::AngleHypothesis(_))
        ));
        let diag = tube(HPoint::identity(), FRAC_PI_4, delta);
        let mut rng = rng_for(7, 0);
        for _ in 0..100 {
            let w = (rng.random_range(-0.4..0.4), rng.random_range(-0.01..0.01));
            let len = fiber_length(&diag, w, step).unwrap();
            assert!(len <= fiber_bound(delta) + 2.0 * step);
        }
    }

    #[test]
    fn fiber_length_left_translation_invariant() {
        let delta = 0.04;
        let step = delta / 200.0;
        let mut rng = rng_for(8, 0);
        for _ in 0..20 {
            let phi = rng.random_range(FRAC_PI_4..=3.0 * FRAC_PI_4);
            let t = tube(HPoint::identity(), phi, delta);
            let w = (rng.random_range(-0.3..0.3), rng.random_range(-0.02..0.02));
            let z = uniform_in_ball(&mut rng, 1.0);
            // z · (w · L) is the coset π_W(z · w) · L
            let w2 = pi_w(&group_mul(&z, &w_point(w)));
            let a = fiber_length(&t, w, step).unwrap();
            let b = fiber_length(&t.translated(&z), w2, step).unwrap();
            assert!((a - b).abs() <= 2.0 * step + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn fiber_points_are_at_distance_checked_by_metric() {
        // a fiber point counted inside the tube really is within δ of the core
        let t = tube(HPoint::new(0.1, 0.2, 0.0), 1.3, 0.1);
        let wp = w_point((0.2, 0.0));
        let x = group_mul(&wp, &HPoint::new(0.1, 0.0, 0.0));
        let d = (0..=10_000)
            .map(|i| koranyi_dist(&x, &segment_point(&t.base, &t.dir, -0.5 + i as f64 / 10_000.0).unwrap()))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(tube_contains(&t, &x), d <= 0.1);
    }

    #[test]
    fn fubini_examples() {
        let gauss = |p: &HPoint<f64>| (-(p.x1 * p.x1 + p.x2 * p.x2 + p.x3 * p.x3)).exp();
        assert!(fubini_check(gauss, 6.0, 64) <= 1e-6);
        assert_eq!(fubini_check(|_| 0.0, 6.0, 64), 0.0);
        let bump = |p: &HPoint<f64>| {
            let r2 = p.x1 * p.x1 + p.x2 * p.x2 + p.x3 * p.x3;
            1.0 / (1.0 + (4.0 * (r2 - 1.0)).exp())
        };
        let coarse = fubini_check(bump, 5.0, 24);
        let fine = fubini_check(bump, 5.0, 96);
        assert!(fine < coarse, "{fine} !< {coarse}");
    }
}
