//! Horizontal unit segments and Heisenberg δ-tubes.
//!
//! `T_δ(y, e)` is the Korányi δ-neighbourhood of the segment
//! `y · {(s e, 0) : s ∈ [-1/2, 1/2]}`.
//!
//! Membership is exact. In the frame of the tube write `w = y⁻¹ x`,
//! `u = <w', e>`, `v = <w', e⊥>` and `τ = w3 - u v / 2`. With `σ = s - u`
//! the fourth power of `d(x, y · (s e, 0))` is
//!
//! ```text
//! F(σ) = (σ² + v²)² + 4 (2τ - σ v)²
//! ```
//!
//! which is convex in `σ` (`F'' = 12 (σ² + v²)`). Its unconstrained minimiser
//! is the single real root of `σ³ + 3 v² σ - 4 v τ = 0`, and clamping it to
//! the segment gives the constrained minimiser.

use crate::error::{Error, Result};
use crate::heis::{group_inv, group_mul, HPoint, Rotation2};
use crate::roots::monotone_depressed_root;
use crate::sampling::{rng_for, uniform_in_ball};
use crate::scalar::Real;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Constant in `d(e, e') ≤ C √|e - e'|` for unit horizontal vectors.
pub const SQRT_CHORD_CONSTANT: f64 = 1.681_792_830_507_429; // 8^(1/4)

/// `c1 = 1 / C²`: directions closer than `c1 δ²` give nested tubes.
pub const INCLUSION_C1: f64 = 0.353_553_390_593_273_8; // 1 / (2√2)

/// Unit horizontal direction `(cos φ, sin φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction<T> {
    phi: T,
    e1: T,
    e2: T,
}

impl<T: Real> Direction<T> {
    /// Builds the direction for any finite angle; the stored angle is reduced
    /// to `[0, 2π)`.
    pub fn new(phi: T) -> Self {
        let tau = T::TAU();
        let mut p = phi % tau;
        if p < T::zero() {
            p = p + tau;
        }
        if p >= tau {
            p = p - tau;
        }
        Self {
            phi: p,
            e1: p.cos(),
            e2: p.sin(),
        }
    }

    /// Direction of a nonzero planar vector.
    pub fn from_vector(v1: T, v2: T) -> Self {
        Self::new(v2.atan2(v1))
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    #[inline]
    pub fn e(&self) -> (T, T) {
        (self.e1, self.e2)
    }

    /// Euclidean chord `|e - e'|`.
    pub fn chord(&self, other: &Self) -> T {
        let d1 = self.e1 - other.e1;
        let d2 = self.e2 - other.e2;
        (d1 * d1 + d2 * d2).sqrt()
    }

    pub fn rotated(&self, o: &Rotation2<T>) -> Self {
        Self::new(self.phi + o.angle())
    }

    /// The horizontal point `(s e, 0)`.
    #[inline]
    pub fn at(&self, s: T) -> HPoint<T> {
        HPoint::horizontal(s * self.e1, s * self.e2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tube<T> {
    pub base: HPoint<T>,
    pub dir: Direction<T>,
    radius: T,
}

/// Coordinates of a point in the frame of a tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeFrame<T> {
    /// position along the core
    pub u: T,
    /// horizontal offset across the core
    pub v: T,
    /// vertical coordinate with the twist `u v / 2` removed
    pub tau: T,
}

impl<T: Real> Tube<T> {
    pub fn new(base: HPoint<T>, dir: Direction<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero() && radius < T::one()) {
            return Err(Error::OutOfRange {
                name: "tube radius",
                value: radius.as_f64(),
                range: "(0, 1)",
            });
        }
        if !base.is_finite() {
            return Err(Error::NonFinite("tube base"));
        }
        Ok(Self { base, dir, radius })
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// Rotated copy; `R_O(T_δ(y, e)) = T_δ(R_O y, O e)`.
    pub fn rotated(&self, o: &Rotation2<T>) -> Self {
        Self {
            base: o.apply(&self.base),
            dir: self.dir.rotated(o),
            radius: self.radius,
        }
    }

    /// Left translate `z · T`.
    pub fn translated(&self, z: &HPoint<T>) -> Self {
        Self {
            base: group_mul(z, &self.base),
            dir: self.dir,
            radius: self.radius,
        }
    }

    pub fn frame(&self, x: &HPoint<T>) -> TubeFrame<T> {
        let w = group_mul(&group_inv(&self.base), x);
        let (e1, e2) = self.dir.e();
        let u = e1 * w.x1 + e2 * w.x2;
        let v = e1 * w.x2 - e2 * w.x1;
        TubeFrame {
            u,
            v,
            tau: w.x3 - T::half() * u * v,
        }
    }

    /// Inverse of [`Tube::frame`].
    pub fn from_frame(&self, f: &TubeFrame<T>) -> HPoint<T> {
        let (e1, e2) = self.dir.e();
        let w = HPoint::new(
            f.u * e1 - f.v * e2,
            f.u * e2 + f.v * e1,
            f.tau + T::half() * f.u * f.v,
        );
        group_mul(&self.base, &w)
    }

    /// Fourth power of the Korányi distance from `x` to the core segment,
    /// together with the minimising segment parameter.
    pub fn core_gauge4(&self, x: &HPoint<T>) -> (T, T) {
        let f = self.frame(x);
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        let sigma = monotone_depressed_root(three * f.v * f.v, -four * f.v * f.tau);
        let lo = -T::half() - f.u;
        let hi = T::half() - f.u;
        let sigma = sigma.max(lo).min(hi);
        let a = sigma * sigma + f.v * f.v;
        let b = T::two() * f.tau - sigma * f.v;
        (a * a + four * b * b, sigma + f.u)
    }
}

/// `y · (s e, 0)` for `s ∈ [-1/2, 1/2]`.
pub fn segment_point<T: Real>(y: &HPoint<T>, e: &Direction<T>, s: T) -> Result<HPoint<T>> {
    if !(s.abs() <= T::half()) {
        return Err(Error::SegmentParameter(s.as_f64()));
    }
    Ok(group_mul(y, &e.at(s)))
}

/// Korányi distance from `x` to the core segment of `tube`.
///
/// Exact up to rounding (see the module docs).
pub fn dist_to_segment<T: Real>(tube: &Tube<T>, x: &HPoint<T>) -> T {
    tube.core_gauge4(x).0.max(T::zero()).sqrt().sqrt()
}

#[inline]
pub fn tube_contains<T: Real>(tube: &Tube<T>, x: &HPoint<T>) -> bool {
    let r = tube.radius;
    tube.core_gauge4(x).0 <= r * r * r * r
}

/// Equally spaced directions whose consecutive chord distance is at least
/// `scale` and less than `2 scale`.
pub fn direction_net<T: Real>(scale: T) -> Result<Vec<Direction<T>>> {
    if !(scale > T::zero() && scale <= T::one()) {
        return Err(Error::OutOfRange {
            name: "direction net scale",
            value: scale.as_f64(),
            range: "(0, 1]",
        });
    }
    let n = net_size(scale.as_f64());
    let step = std::f64::consts::TAU / n as f64;
    Ok((0..n)
        .map(|k| Direction::new(T::lit(step * k as f64)))
        .collect())
}

fn net_size(scale: f64) -> usize {
    let arc = 2.0 * (scale / 2.0).asin();
    let chord_ok = |n: usize| 2.0 * (std::f64::consts::PI / n as f64).sin() >= scale * (1.0 - 1e-14);
    // the floor may land one off either way through rounding; chords equal
    // to the scale up to the last ulps are accepted
    let mut n = (std::f64::consts::TAU / arc).floor() as usize;
    while chord_ok(n + 1) {
        n += 1;
    }
    while n > 2 && !chord_ok(n) {
        n -= 1;
    }
    n.max(2)
}

/// Chord spacing of two consecutive net points.
pub fn net_spacing(n: usize) -> f64 {
    2.0 * (std::f64::consts::PI / n as f64).sin()
}

/// Uniform sample of the parameter space `[-1/2, 1/2] × B(0, δ)` mapped into
/// the tube: `y · (s e, 0) · z`.
pub fn sample_in_tube<R: Rng + ?Sized>(rng: &mut R, tube: &Tube<f64>) -> HPoint<f64> {
    let s = rng.random_range(-0.5..=0.5);
    let z = uniform_in_ball(rng, tube.radius());
    group_mul(&group_mul(&tube.base, &tube.dir.at(s)), &z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub n_samples: usize,
    pub violations: usize,
    /// largest observed distance from a sample to the core of the wider tube
    pub max_dist: f64,
    /// `max_dist / δ`; at most 2 when there are no violations
    pub max_ratio: f64,
}

/// Samples `T_δ(y, e)` and checks that every sample lies in `T_{2δ}(y, e')`.
pub fn check_tube_inclusion(
    y: &HPoint<f64>,
    e: &Direction<f64>,
    e_prime: &Direction<f64>,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<InclusionReport> {
    let chord = e.chord(e_prime);
    let bound = INCLUSION_C1 * delta * delta;
    if chord > bound * (1.0 + 1e-12) {
        return Err(Error::InclusionPrecondition { chord, bound });
    }
    let inner = Tube::new(*y, *e, delta)?;
    let outer = Tube::new(*y, *e_prime, (2.0 * delta).min(1.0 - f64::EPSILON))?;
    let mut rng = rng_for(seed, 0x1c1);
    let mut violations = 0;
    let mut max_dist: f64 = 0.0;
    for _ in 0..n_samples {
        let x = sample_in_tube(&mut rng, &inner);
        let d = dist_to_segment(&outer, &x);
        max_dist = max_dist.max(d);
        if d > 2.0 * delta {
            violations += 1;
        }
    }
    Ok(InclusionReport {
        n_samples,
        violations,
        max_dist,
        max_ratio: max_dist / delta,
    })
}

/// The witness of the failure of tube inclusion for `δ`-close directions:
/// `(e, e', x)` with `x ∈ T_δ(0, e)`.
pub fn inclusion_counterexample(delta: f64) -> (Direction<f64>, Direction<f64>, HPoint<f64>) {
    let n = (1.0 + delta * delta).sqrt();
    let e = Direction::from_vector(1.0 / n, delta / n);
    let e_prime = Direction::new(0.0);
    let x = HPoint::new(1.0 / (2.0 * n), delta / (2.0 * n), 0.0);
    (e, e_prime, x)
}

/// Which directions a random family draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionRange {
    /// `|φ - π/2| ≤ π/4`
    Quadrant,
    Full,
}

/// Index `j` of the quadrant `S_j = {|φ - j π/2| ≤ π/4}` containing `φ`.
/// Boundary angles go to the lower index.
pub fn quadrant_index(phi: f64) -> usize {
    let q = std::f64::consts::FRAC_PI_2;
    let k = ((phi + q / 2.0) / q).floor() as i64;
    k.rem_euclid(4) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeFamily<T> {
    pub tubes: Vec<Tube<T>>,
    /// target chord separation of the directions (δ² for Kakeya families)
    pub separation_scale: T,
    /// smallest chord separation actually present
    pub min_separation: T,
    pub label: String,
}

impl<T: Real> TubeFamily<T> {
    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    pub fn radius(&self) -> Option<T> {
        self.tubes.first().map(|t| t.radius())
    }

    /// Exhaustive pairwise minimum chord distance of the directions.
    pub fn pairwise_min_separation(&self) -> T {
        let mut best = T::infinity();
        for (i, a) in self.tubes.iter().enumerate() {
            for b in &self.tubes[i + 1..] {
                best = best.min(a.dir.chord(&b.dir));
            }
        }
        best
    }
}

impl TubeFamily<f64> {
    /// Splits into the four quadrant families, each rotated by `-(j-1) π/2`
    /// so that every part points into `S_1`.
    pub fn quadrant_parts(&self) -> [TubeFamily<f64>; 4] {
        let mut parts: [Vec<Tube<f64>>; 4] = Default::default();
        for t in &self.tubes {
            let j = quadrant_index(t.dir.phi());
            let o = Rotation2::new(-(j as f64 - 1.0) * std::f64::consts::FRAC_PI_2);
            parts[j].push(t.rotated(&o));
        }
        parts.map(|tubes| {
            let mut f = TubeFamily {
                tubes,
                separation_scale: self.separation_scale,
                min_separation: 0.0,
                label: format!("{}-quadrant", self.label),
            };
            f.min_separation = sorted_min_separation(&f.tubes);
            f
        })
    }

    /// CSV with header `phi,y1,y2,y3,delta`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,y1,y2,y3,delta\n");
        for t in &self.tubes {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t.dir.phi(),
                t.base.x1,
                t.base.x2,
                t.base.x3,
                t.radius()
            );
        }
        out
    }

    pub fn from_csv(text: &str, label: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "phi,y1,y2,y3,delta" => {}
            _ => return Err(Error::Parse("missing tube family header".into())),
        }
        let mut tubes = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
            if vals.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", i + 2)));
            }
            let dir = Direction {
                phi: vals[0],
                e1: vals[0].cos(),
                e2: vals[0].sin(),
            };
            tubes.push(Tube::new(HPoint::new(vals[1], vals[2], vals[3]), dir, vals[4])?);
        }
        let min_separation = sorted_min_separation(&tubes);
        Ok(Self {
            separation_scale: tubes
                .first()
                .map(|t| t.radius() * t.radius())
                .unwrap_or(0.0),
            min_separation,
            tubes,
            label: label.to_string(),
        })
    }
}

/// Minimum chord separation via sorting by angle (neighbours only).
fn sorted_min_separation(tubes: &[Tube<f64>]) -> f64 {
    if tubes.len() < 2 {
        return f64::INFINITY;
    }
    let mut dirs: Vec<Direction<f64>> = tubes.iter().map(|t| t.dir).collect();
    dirs.sort_by(|a, b| a.phi().total_cmp(&b.phi()));
    let mut best = dirs[0].chord(&dirs[dirs.len() - 1]);
    for w in dirs.windows(2) {
        best = best.min(w[0].chord(&w[1]));
    }
    best
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        })
    }
}

/// One tube per direction of the `δ²`-net (restricted to `S_1` for
/// [`DirectionRange::Quadrant`]) with bases uniform in the Korányi ball
/// `B(0, region_radius)`.
pub fn family_random(
    delta: f64,
    region_radius: f64,
    seed: u64,
    range: DirectionRange,
) -> Result<TubeFamily<f64>> {
    check_delta(delta)?;
    let net = direction_net(delta * delta)?;
    let mut rng = rng_for(seed, 0xfa41);
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut tubes = Vec::new();
    for d in net {
        if range == DirectionRange::Quadrant
            && (d.phi() - std::f64::consts::FRAC_PI_2).abs() > quarter
        {
            continue;
        }
        let y = if region_radius > 0.0 {
            uniform_in_ball(&mut rng, region_radius)
        } else {
            HPoint::identity()
        };
        tubes.push(Tube::new(y, d, delta)?);
    }
    let min_separation = sorted_min_separation(&tubes);
    Ok(TubeFamily {
        tubes,
        separation_scale: delta * delta,
        min_separation,
        label: "random".into(),
    })
}

/// Tubes centred at the origin in every direction of the `δ²`-net.
pub fn family_bush(delta: f64) -> Result<TubeFamily<f64>> {
    check_delta(delta)?;
    let tubes = direction_net(delta * delta)?
        .into_iter()
        .map(|d| Tube::new(HPoint::identity(), d, delta))
        .collect::<Result<Vec<_>>>()?;
    let min_separation = sorted_min_separation(&tubes);
    Ok(TubeFamily {
        tubes,
        separation_scale: delta * delta,
        min_separation,
        label: "bush".into(),
    })
}

/// Same tubes as [`family_bush`]; the cores sweep the disk of radius 1/2 in
/// the plane `x3 = 0`.
pub fn family_disk(delta: f64) -> Result<TubeFamily<f64>> {
    let mut f = family_bush(delta)?;
    f.label = "disk".into();
    Ok(f)
}

/// Tubes of the bush spread far apart by central translations
/// `(0, 0, k · gap)`, so their supports are pairwise disjoint.
pub fn family_disjoint(delta: f64, gap: f64) -> Result<TubeFamily<f64>> {
    let mut f = family_bush(delta)?;
    for (k, t) in f.tubes.iter_mut().enumerate() {
        *t = t.translated(&HPoint::new(0.0, 0.0, gap * k as f64));
    }
    f.label = "disjoint".into();
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heis::{dilate, koranyi_dist};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    /// Independent oracle: brute-force scan over the segment parameter. The
    /// objective is 1-Lipschitz in `s`, so the scan overestimates the true
    /// minimum by at most `step`.
    fn scan_dist(t: &Tube<f64>, x: &HPoint<f64>, step: f64) -> f64 {
        let n = (1.0 / step).ceil() as usize;
        (0..=n)
            .map(|i| {
                let s = -0.5 + i as f64 / n as f64;
                koranyi_dist(x, &group_mul(&t.base, &t.dir.at(s)))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn segment_point_examples() {
        let y = HPoint::identity();
        let p = segment_point(&y, &Direction::new(0.0), 0.5).unwrap();
        assert_eq!(p, HPoint::new(0.5, 0.0, 0.0));
        let p = segment_point(&HPoint::new(1.0, 2.0, 3.0), &Direction::new(FRAC_PI_2), 0.5).unwrap();
        assert!(p.max_abs_diff(&HPoint::new(1.0, 2.5, 3.25)) < 1e-15);
        assert!(segment_point(&y, &Direction::new(0.0), 0.51).is_err());
    }

    #[test]
    fn dist_on_core_and_above_center() {
        let delta: f64 = 0.1;
        let t = Tube::new(HPoint::identity(), Direction::new(0.0), delta).unwrap();
        assert!(dist_to_segment(&t, &HPoint::new(0.3, 0.0, 0.0)) < 1e-12);
        let x = HPoint::new(0.0, 0.0, delta * delta / 16.0);
        assert!((dist_to_segment(&t, &x) - delta / 2.0).abs() < 1e-14);
        let far = HPoint::new(0.0, 3.0 * delta, 0.0);
        assert!(!tube_contains(&t, &far));
    }

    #[test]
    fn exact_distance_matches_scan_oracle() {
        let mut rng = rng_for(11, 0);
        for _ in 0..2000 {
            let t = Tube::new(
                uniform_in_ball(&mut rng, 1.0),
                Direction::new(rng.random_range(0.0..TAU)),
                rng.random_range(0.01..0.5),
            )
            .unwrap();
            let x = group_mul(&t.base, &uniform_in_ball(&mut rng, 0.8));
            let exact = dist_to_segment(&t, &x);
            let step = 1e-4;
            let scanned = scan_dist(&t, &x, step);
            assert!(exact <= scanned + 1e-12, "exact {exact} > scan {scanned}");
            assert!(scanned - exact <= step + 1e-12, "exact {exact} scan {scanned}");
        }
    }

    #[test]
    fn contains_segment_points_and_fattened_points() {
        let mut rng = rng_for(12, 0);
        for _ in 0..2000 {
            let delta = rng.random_range(0.01..0.9);
            let t = Tube::new(
                uniform_in_ball(&mut rng, 2.0),
                Direction::new(rng.random_range(0.0..TAU)),
                delta,
            )
            .unwrap();
            let s = rng.random_range(-0.5..=0.5);
            let core = segment_point(&t.base, &t.dir, s).unwrap();
            assert!(tube_contains(&t, &core));
            // z of norm exactly 0.9 δ
            let raw = HPoint::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let z = dilate(0.9 * delta / raw.norm(), &raw).unwrap();
            assert!(tube_contains(&t, &group_mul(&core, &z)));
        }
    }

    #[test]
    fn frame_round_trip() {
        let t = Tube::new(HPoint::new(0.3, -0.2, 0.7), Direction::new(1.1), 0.2).unwrap();
        let x = HPoint::new(-0.4, 0.9, 0.05);
        let back = t.from_frame(&t.frame(&x));
        assert!(back.max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn direction_net_examples() {
        assert_eq!(direction_net(1.0).unwrap().len(), 6);
        assert_eq!(net_size(2f64.sqrt()), 4);
        assert!(direction_net(1.5).is_err());
        assert!(direction_net(0.0).is_err());
    }

    #[test]
    fn direction_net_cardinality_bounds() {
        for k in 2..=10 {
            let s = 2f64.powi(-k);
            let n = direction_net(s).unwrap().len() as f64;
            assert!(n >= TAU / (2.0 * s) * (1.0 - s), "s={s} n={n}");
            assert!(n <= TAU / s * (1.0 + s), "s={s} n={n}");
        }
    }

    #[test]
    fn direction_net_separated_and_maximal_exhaustive() {
        let s = 2f64.powi(-8);
        let net = direction_net(s).unwrap();
        for (i, a) in net.iter().enumerate() {
            for b in &net[i + 1..] {
                assert!(a.chord(b) >= s * (1.0 - 1e-12));
            }
        }
        let n = net.len();
        let gap = net_spacing(n);
        assert!(gap >= s && gap < 2.0 * s);
        // every point of the circle lies within chord distance s of the net
        for k in 0..10_000 {
            let d = Direction::new(TAU * k as f64 / 10_000.0);
            let j = ((d.phi() / (TAU / n as f64)).round() as usize) % n;
            assert!(d.chord(&net[j]) <= s);
        }
    }

    #[test]
    fn inclusion_lemma_examples() {
        let e = Direction::new(0.7);
        let r = check_tube_inclusion(&HPoint::new(0.1, 0.2, 0.3), &e, &e, 0.1, 2000, 1).unwrap();
        assert_eq!(r.violations, 0);
        let delta = 2f64.powi(-5);
        let arc = 2.0 * (INCLUSION_C1 * delta * delta / 2.0).asin();
        let e2 = Direction::new(0.7 + arc * (1.0 - 1e-12));
        assert!(e.chord(&e2) <= INCLUSION_C1 * delta * delta);
        let r = check_tube_inclusion(&HPoint::new(-0.3, 0.5, 0.2), &e, &e2, delta, 10_000, 2).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 2.0);
    }

    #[test]
    fn inclusion_precondition_is_distinct_error() {
        let e = Direction::new(0.0);
        let e2 = Direction::new(0.1);
        let err = check_tube_inclusion(&HPoint::identity(), &e, &e2, 0.1, 10, 0).unwrap_err();
        assert!(matches!(err, Error::InclusionPrecondition { .. }));
    }

    #[test]
    fn counterexample_point() {
        for k in 6..=10 {
            let delta = 2f64.powi(-k);
            let (e, e_prime, x) = inclusion_counterexample(delta);
            let inner = Tube::new(HPoint::identity(), e, delta).unwrap();
            let outer = Tube::new(HPoint::identity(), e_prime, 2.0 * delta).unwrap();
            assert!(tube_contains(&inner, &x));
            assert!(!tube_contains(&outer, &x), "delta = {delta}");
        }
    }

    #[test]
    fn random_family_properties() {
        let delta = 0.125;
        let f = family_random(delta, 1.0, 9, DirectionRange::Quadrant).unwrap();
        let expect = FRAC_PI_2 / (delta * delta);
        let n = f.len() as f64;
        assert!(n >= expect / 2.0 && n <= expect * 2.0, "n = {n}");
        assert_eq!(f, family_random(delta, 1.0, 9, DirectionRange::Quadrant).unwrap());
        assert!(f.pairwise_min_separation() >= delta * delta * (1.0 - 1e-12));
        for t in &f.tubes {
            assert!((t.dir.phi() - FRAC_PI_2).abs() <= FRAC_PI_4 + 1e-12);
            assert!(t.base.norm() <= 1.0);
        }
        assert_ne!(f, family_random(delta, 1.0, 10, DirectionRange::Quadrant).unwrap());
    }

    #[test]
    fn bush_family_properties() {
        let delta = 2f64.powi(-4);
        let f = family_bush(delta).unwrap();
        let n = f.len() as f64;
        let expect = TAU / (delta * delta);
        assert!(n >= 0.5 * expect && n <= 2.0 * expect);
        assert!(f.pairwise_min_separation() > 0.0);
        let origin = HPoint::identity();
        assert!(f.tubes.iter().all(|t| tube_contains(t, &origin)));
        let small = HPoint::new(delta / 4.0, -delta / 4.0, delta * delta / 40.0);
        assert!(small.norm() <= delta / 2.0);
        assert!(f.tubes.iter().all(|t| tube_contains(t, &small)));
        assert_eq!(family_disk(delta).unwrap().tubes, f.tubes);
    }

    #[test]
    fn quadrant_parts_point_into_s1() {
        let f = family_random(0.25, 0.5, 3, DirectionRange::Full).unwrap();
        let parts = f.quadrant_parts();
        assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), f.len());
        for p in &parts {
            for t in &p.tubes {
                assert!((t.dir.phi() - FRAC_PI_2).abs() <= FRAC_PI_4 + 1e-9, "{}", t.dir.phi());
            }
        }
        assert_eq!(quadrant_index(0.0), 0);
        assert_eq!(quadrant_index(PI), 2);
        assert_eq!(quadrant_index(TAU - 0.1), 0);
    }

    #[test]
    fn csv_round_trip_bitwise() {
        let f = family_random(0.3, 1.0, 5, DirectionRange::Full).unwrap();
        let g = TubeFamily::from_csv(&f.to_csv(), "random").unwrap();
        assert_eq!(f.tubes.len(), g.tubes.len());
        for (a, b) in f.tubes.iter().zip(&g.tubes) {
            assert_eq!(a.base, b.base);
            assert_eq!(a.dir.phi().to_bits(), b.dir.phi().to_bits());
            assert_eq!(a.radius().to_bits(), b.radius().to_bits());
        }
        assert!(TubeFamily::from_csv("bad\n", "x").is_err());
    }

    proptest! {
        #[test]
        fn core_is_isometric(y1 in -3.0f64..3.0, y2 in -3.0f64..3.0, y3 in -3.0f64..3.0,
                              phi in 0.0f64..TAU, s in -0.5f64..0.5, t in -0.5f64..0.5) {
            let y = HPoint::new(y1, y2, y3);
            let e = Direction::new(phi);
            let a = segment_point(&y, &e, s).unwrap();
            let b = segment_point(&y, &e, t).unwrap();
            prop_assert!((koranyi_dist(&a, &b) - (s - t).abs()).abs() <= 1e-12 * (1.0 + y.max_abs()));
        }

        #[test]
        fn rotation_covariance(angle in -4.0f64..4.0, phi in 0.0f64..TAU, seed in 0u64..1000) {
            let mut rng = rng_for(seed, 1);
            let t = Tube::new(uniform_in_ball(&mut rng, 1.0), Direction::new(phi), 0.2).unwrap();
            let o = Rotation2::new(angle);
            let rt = t.rotated(&o);
            for _ in 0..20 {
                let x = group_mul(&t.base, &uniform_in_ball(&mut rng, 0.8));
                let d0 = dist_to_segment(&t, &x);
                let d1 = dist_to_segment(&rt, &o.apply(&x));
                prop_assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }
}
