//! Lemma-level checks run by the `verify-suite` scenario. Each check
//! produces a [`LemmaReport`] row and a [`Check`] on its violation count or
//! worst deviation.

use super::{Check, Table};
use crate::error::Result;
use crate::heis::{dilate, group_inv, group_mul, koranyi_dist, koranyi_norm, rotate, HPoint, Rotation2};
use crate::parabola2d::{check_nonconcentration, family_random_coeffs};
use crate::projection::{
    fiber_bound, fiber_length, fubini_check, pi_w, verify_segment_projection, verify_tube_projection,
    LemmaReport,
};
use crate::sampling::{rng_for, stream_key, str_key, uniform_in_ball};
use crate::tubes::{
    check_tube_inclusion, inclusion_counterexample, sample_in_tube, tube_contains, Direction, Tube,
    INCLUSION_C1,
};
use rand::Rng;
use std::f64::consts::{FRAC_PI_4, TAU};

/// Columns of the verify-suite CSV.
pub const TABLE_HEADER: [&str; 5] = ["lemma", "n_samples", "violations", "max_ratio", "pass"];

/// Relative tolerance of the algebra checks.
pub const ALGEBRA_TOL: f64 = 1e-12;

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= ALGEBRA_TOL * scale.max(1.0)
}

fn close_pt(a: &HPoint<f64>, b: &HPoint<f64>, scale: f64) -> bool {
    a.max_abs_diff(b) <= ALGEBRA_TOL * scale.max(1.0)
}

/// Group axioms, left invariance and rotation invariance of the metric,
/// dilation homogeneity and the triangle inequality on `n` random cases
/// with coordinates in `[-4, 4]`. Tolerances are relative to the magnitude
/// of the quantities compared. `max_ratio` is the largest observed
/// deviation over its tolerance.
pub fn check_group_laws(n: usize, seed: u64) -> LemmaReport {
    let mut rng = rng_for(seed, 0xa19e);
    let mut rep = LemmaReport::new("group-laws").with_param("tol", ALGEBRA_TOL);
    let pt = |rng: &mut crate::sampling::StreamRng| -> HPoint<f64> {
        HPoint::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
        )
    };
    let id = HPoint::identity();
    for _ in 0..n {
        let (p, q, r) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
        let lam: f64 = rng.random_range(0.1..10.0);
        let rot = Rotation2::new(rng.random_range(0.0..TAU));
        let s: f64 = p.max_abs().max(q.max_abs()).max(r.max_abs());
        let mut ok = true;
        let mut worst: f64 = 0.0;
        let mut cmp = |a: f64, b: f64, scale: f64| {
            worst = worst.max((a - b).abs() / (ALGEBRA_TOL * scale.max(1.0)));
            close(a, b, scale)
        };
        // associativity, identity, inverses
        let lhs = group_mul(&group_mul(&p, &q), &r);
        let rhs = group_mul(&p, &group_mul(&q, &r));
        ok &= close_pt(&lhs, &rhs, s * s * s);
        ok &= group_mul(&p, &id) == p && group_mul(&id, &p) == p;
        ok &= close_pt(&group_mul(&p, &group_inv(&p)), &id, s * s);
        // left invariance and rotation invariance of the distance
        let d = koranyi_dist(&p, &q);
        ok &= cmp(koranyi_dist(&group_mul(&r, &p), &group_mul(&r, &q)), d, s * s);
        ok &= cmp(koranyi_dist(&rotate(&rot, &p), &rotate(&rot, &q)), d, s * s);
        // dilations: homogeneous gauge, automorphism of the group
        let dp = dilate(lam, &p).expect("positive factor");
        ok &= cmp(koranyi_norm(&dp), lam * koranyi_norm(&p), lam * s);
        let dq = dilate(lam, &q).expect("positive factor");
        let dpq = dilate(lam, &group_mul(&p, &q)).expect("positive factor");
        ok &= close_pt(&dpq, &group_mul(&dp, &dq), lam * lam * s * s);
        // triangle inequality
        let (a, b, c) = (koranyi_dist(&p, &r), koranyi_dist(&p, &q), koranyi_dist(&q, &r));
        ok &= a <= b + c + ALGEBRA_TOL * s.max(1.0);
        rep.max_ratio = rep.max_ratio.max(worst);
        if !ok {
            rep.violations += 1;
        }
    }
    rep.n_samples = n;
    rep
}

fn random_quadrant_tube(rng: &mut crate::sampling::StreamRng, delta: f64) -> Tube<f64> {
    let phi = rng.random_range(FRAC_PI_4..=3.0 * FRAC_PI_4);
    let y = uniform_in_ball(rng, 2.0);
    Tube::new(y, Direction::new(phi), delta).expect("radius in (0, 1)")
}

/// Largest deviation of projected segment points from their parabola over
/// `n_tubes` random tubes with directions within π/4 of the `x2`-axis.
pub fn check_segment_projection(n_tubes: usize, n_samples: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = rng_for(seed, 0x5e9);
    let mut rep = LemmaReport::new("segment-projection").with_param("tol", 1e-10);
    for _ in 0..n_tubes {
        let t = random_quadrant_tube(&mut rng, 0.1);
        let dev = verify_segment_projection(&t, n_samples)?;
        rep.max_ratio = rep.max_ratio.max(dev);
        if dev > 1e-10 {
            rep.violations += 1;
        }
        rep.n_samples += n_samples;
    }
    Ok(rep)
}

/// Projected tube samples against the arc neighbourhood of radius
/// `(1 + |a|) δ² / 2`.
pub fn check_tube_projection(delta: f64, n_tubes: usize, n_samples: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = rng_for(seed, 0x7b9);
    let mut rep = LemmaReport::new("tube-projection").with_param("delta", delta);
    for k in 0..n_tubes {
        let t = random_quadrant_tube(&mut rng, delta);
        rep.merge(&verify_tube_projection(&t, n_samples, stream_key(&[seed, k as u64]))?);
    }
    Ok(rep)
}

/// Fiber lengths through random points of random tubes against
/// `2√2 δ · 1.02 + 2 step`; `max_ratio` is the largest length over that
/// bound.
pub fn check_fiber_length(delta: f64, n_cases: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = rng_for(seed, 0xf1b);
    let step = delta / 64.0;
    let bound = fiber_bound(delta) * 1.02 + 2.0 * step;
    let mut rep = LemmaReport::new("fiber-length")
        .with_param("delta", delta)
        .with_param("step", step);
    for _ in 0..n_cases {
        let t = random_quadrant_tube(&mut rng, delta);
        let w = pi_w(&sample_in_tube(&mut rng, &t));
        let len = fiber_length(&t, w, step)?;
        rep.max_ratio = rep.max_ratio.max(len / bound);
        if len > bound {
            rep.violations += 1;
        }
    }
    rep.n_samples = n_cases;
    Ok(rep)
}

/// The Fubini identity for the vertical projection on a Gaussian.
pub fn check_fubini(quad_n: usize) -> LemmaReport {
    let h = |x: &HPoint<f64>| (-(x.x1 * x.x1 + x.x2 * x.x2 + x.x3 * x.x3)).exp();
    let rel = fubini_check(h, 6.0, quad_n);
    let mut rep = LemmaReport::new("fubini").with_param("nodes_per_axis", quad_n as f64);
    rep.n_samples = quad_n * quad_n * quad_n;
    rep.max_ratio = rel / 1e-6;
    rep.violations = (rel > 1e-6) as usize;
    rep
}

/// `T_δ(y, e) ⊆ T_2δ(y, e')` at the extreme chord `|e - e'| = c1 δ²`;
/// `max_ratio` is the largest sample distance over 2δ.
pub fn check_inclusion(delta: f64, n_cases: usize, n_samples: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = rng_for(seed, 0x1ac);
    let mut rep = LemmaReport::new("tube-inclusion")
        .with_param("delta", delta)
        .with_param("c1", INCLUSION_C1);
    // the angle whose chord is c1 δ², nudged inside the precondition
    let angle = 2.0 * (0.5 * INCLUSION_C1 * delta * delta).asin() * (1.0 - 1e-9);
    for k in 0..n_cases {
        let y = uniform_in_ball(&mut rng, 1.0);
        let e = Direction::new(rng.random_range(0.0..TAU));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let e2 = Direction::new(e.phi() + sign * angle);
        let r = check_tube_inclusion(&y, &e, &e2, delta, n_samples, stream_key(&[seed, k as u64]))?;
        rep.n_samples += r.n_samples;
        rep.violations += r.violations;
        rep.max_ratio = rep.max_ratio.max(r.max_ratio / 2.0);
    }
    Ok(rep)
}

/// The witness point lies in `T_δ(0, e)` but not in `T_2δ(0, e')` for
/// `δ = 2^-k`, `k` in `ks`.
pub fn check_counterexample(ks: std::ops::RangeInclusive<i32>) -> Result<LemmaReport> {
    let mut rep = LemmaReport::new("inclusion-witness");
    for k in ks {
        let d = 2f64.powi(-k);
        let (e, e2, x) = inclusion_counterexample(d);
        let inner = tube_contains(&Tube::new(HPoint::identity(), e, d)?, &x);
        let outer = tube_contains(&Tube::new(HPoint::identity(), e2, 2.0 * d)?, &x);
        rep.n_samples += 1;
        if !inner || outer {
            rep.violations += 1;
        }
    }
    Ok(rep)
}

/// Non-concentration of random a-separated coefficient families;
/// `max_ratio` is the largest `card(Z ∩ B) δ / ρ`, whose bound is 2.5.
pub fn check_families_nonconcentration(ks: std::ops::RangeInclusive<i32>, seed: u64) -> Result<LemmaReport> {
    let mut rep = LemmaReport::new("nonconcentration");
    for k in ks {
        let d = 2f64.powi(-k);
        let key = stream_key(&[seed, k as u64]);
        let fam = family_random_coeffs(d, 1.0, key)?;
        let r = check_nonconcentration(&fam, d, 0.2, 2000, key)?;
        rep.n_samples += r.n_balls;
        rep.violations += r.violations + (!r.separated) as usize + (r.max_ratio > 2.5) as usize;
        rep.max_ratio = rep.max_ratio.max(r.max_ratio);
    }
    Ok(rep)
}

/// Runs every check; returns one [`Check`] per report (violations ≤ 0) and
/// the report table.
pub fn verify_suite(seed: u64) -> Result<(Vec<Check>, Table)> {
    let s = |name: &str| stream_key(&[seed, str_key(name)]);
    let reports = vec![
        check_group_laws(100_000, s("group-laws")),
        check_segment_projection(100, 1000, s("segment-projection"))?,
        check_tube_projection(2f64.powi(-4), 100, 10_000, s("tube-projection-4"))?,
        check_tube_projection(2f64.powi(-6), 100, 10_000, s("tube-projection-6"))?,
        check_fiber_length(2f64.powi(-5), 100, s("fiber-length"))?,
        check_fubini(64),
        check_inclusion(2f64.powi(-5), 20, 10_000, s("tube-inclusion"))?,
        check_counterexample(6..=10)?,
        check_families_nonconcentration(4..=7, s("nonconcentration"))?,
    ];
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for r in &reports {
        let name = match r.params.get("delta") {
            Some(d) => format!("{}@{}", r.lemma, d),
            None => r.lemma.clone(),
        };
        let c = Check::at_most(name.clone(), r.violations as f64, 0.0);
        rows.push(vec![
            name,
            r.n_samples.to_string(),
            r.violations.to_string(),
            format!("{:.16e}", r.max_ratio),
            c.holds().to_string(),
        ]);
        checks.push(c);
    }
    Ok((
        checks,
        Table {
            header: TABLE_HEADER.iter().map(|s| s.to_string()).collect(),
            rows,
        },
    ))
}
