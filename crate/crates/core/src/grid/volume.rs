//! Monte Carlo volumes and Korányi neighbourhoods of sets.

use super::field::Box3;
use crate::error::{Error, Result};
use crate::heis::{group_inv, group_mul, koranyi_dist, koranyi_norm, HPoint};
use crate::roots::monotone_depressed_root;
use crate::sampling::{rng_for, stream_key};
use crate::tubes::{Direction, Tube};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Samples per independent random stream; fixes the work decomposition so
/// estimates do not depend on the thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

fn uniform_in_box<R: Rng + ?Sized>(rng: &mut R, b: &Box3) -> HPoint<f64> {
    HPoint::new(
        rng.random_range(b.lo[0]..=b.hi[0]),
        rng.random_range(b.lo[1]..=b.hi[1]),
        rng.random_range(b.lo[2]..=b.hi[2]),
    )
}

/// Runs `count(chunk_rng, chunk_len)` over fixed-size chunks in parallel and
/// sums the per-chunk tallies in chunk order.
fn chunked<T, F>(n: usize, seed: u64, tag: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut crate::sampling::StreamRng, usize) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut rng = rng_for(seed, stream_key(&[tag, c as u64]));
            f(&mut rng, len)
        })
        .collect()
}

/// `|region| · hits / n` with the binomial standard error.
pub fn mc_volume<F>(member: F, region: &Box3, n: usize, seed: u64) -> Result<VolumeEstimate>
where
    F: Fn(&HPoint<f64>) -> bool + Sync,
{
    if n < 1000 {
        return Err(Error::OutOfRange {
            name: "Monte Carlo sample count",
            value: n as f64,
            range: "[1000, inf)",
        });
    }
    let hits: u64 = chunked(n, seed, 0x6d63, |rng, len| {
        (0..len).filter(|_| member(&uniform_in_box(rng, region))).count() as u64
    })
    .into_iter()
    .sum();
    let v = region.volume();
    let frac = hits as f64 / n as f64;
    Ok(VolumeEstimate {
        estimate: v * frac,
        stderr: v * (frac * (1.0 - frac) / n as f64).sqrt(),
        n,
    })
}

/// Korányi ball `B(0, 1)` volume `π²/8`, used only to cross-check the
/// measured constant.
pub const KORANYI_UNIT_BALL_VOLUME: f64 = 1.233_700_550_136_169_8;

/// Smallest box containing `B(0, r)`.
pub fn ball_box(r: f64) -> Box3 {
    Box3::new([-r, -r, -r * r / 4.0], [r, r, r * r / 4.0])
}

/// A subset of `ℍ¹` with computable Korányi distance.
pub trait HeisSet: Sync {
    /// `d(x, E)`; implementations may return any value `≥ cap` once the true
    /// distance is known to exceed `cap`.
    fn dist_capped(&self, x: &HPoint<f64>, cap: f64) -> f64;

    fn dist(&self, x: &HPoint<f64>) -> f64 {
        self.dist_capped(x, f64::INFINITY)
    }

    /// A box containing the set.
    fn bounds(&self) -> Box3;

    /// Upper bound on `|dist - d(x, E)|` (nonzero for sampled sets).
    fn dist_error(&self) -> f64 {
        0.0
    }
}

/// A single point.
#[derive(Debug, Clone, Copy)]
pub struct PointSet(pub HPoint<f64>);

impl HeisSet for PointSet {
    fn dist_capped(&self, x: &HPoint<f64>, _cap: f64) -> f64 {
        koranyi_dist(x, &self.0)
    }

    fn bounds(&self) -> Box3 {
        let p = self.0;
        Box3::new([p.x1, p.x2, p.x3], [p.x1, p.x2, p.x3])
    }
}

/// The horizontal segment `y · I_e`.
#[derive(Debug, Clone, Copy)]
pub struct SegmentSet {
    carrier: Tube<f64>,
}

impl SegmentSet {
    pub fn new(y: HPoint<f64>, e: Direction<f64>) -> Self {
        // the radius of the carrier tube plays no role in the distance
        Self {
            carrier: Tube::new(y, e, 0.5).expect("valid carrier"),
        }
    }
}

impl HeisSet for SegmentSet {
    fn dist_capped(&self, x: &HPoint<f64>, _cap: f64) -> f64 {
        crate::tubes::dist_to_segment(&self.carrier, x)
    }

    fn bounds(&self) -> Box3 {
        let t = &self.carrier;
        let a = crate::tubes::segment_point(&t.base, &t.dir, -0.5).expect("endpoint");
        let b = crate::tubes::segment_point(&t.base, &t.dir, 0.5).expect("endpoint");
        Box3::new(
            [a.x1.min(b.x1), a.x2.min(b.x2), a.x3.min(b.x3)],
            [a.x1.max(b.x1), a.x2.max(b.x2), a.x3.max(b.x3)],
        )
    }
}

/// The disk `{(p', 0) : |p'| ≤ radius}`, the union of the segments `I_e`
/// when `radius = 1/2`.
#[derive(Debug, Clone, Copy)]
pub struct HorizontalDisk {
    pub radius: f64,
}

impl HorizontalDisk {
    /// `d(x, p)⁴` for `p = (p', 0)`.
    fn gauge4_to(x: &HPoint<f64>, p1: f64, p2: f64) -> f64 {
        let q1 = x.x1 - p1;
        let q2 = x.x2 - p2;
        let h = q1 * q1 + q2 * q2;
        let t = x.x3 - 0.5 * (p1 * x.x2 - p2 * x.x1);
        h * h + 16.0 * t * t
    }

    /// The point `p'` of the disk nearest to `x`.
    ///
    /// `d(x, p)⁴ = |q|⁴ + 16 (x3 - <x'⊥, q>/2)²` with `q = x' - p'` is convex
    /// in `p'`. Its unconstrained minimiser has `q ⊥ x'`, `|q| = |β|` with
    /// `β³ + 2 r² β - 4 r x3 = 0` (`r = |x'|`); if that point leaves the disk
    /// the minimum lies on the boundary circle, found by a scan followed by
    /// golden-section refinement.
    pub fn nearest(&self, x: &HPoint<f64>) -> (f64, f64) {
        let r = x.x1.hypot(x.x2);
        let rad = self.radius;
        if r == 0.0 {
            return (0.0, 0.0);
        }
        let beta = monotone_depressed_root(2.0 * r * r, -4.0 * r * x.x3);
        if r * r + beta * beta <= rad * rad {
            // q = β x'⊥ / r with x'⊥ = (-x2, x1)
            return (x.x1 + beta * x.x2 / r, x.x2 - beta * x.x1 / r);
        }
        let g = |th: f64| Self::gauge4_to(x, rad * th.cos(), rad * th.sin());
        let n = 32;
        let step = std::f64::consts::TAU / n as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for k in 0..n {
            let v = g(k as f64 * step);
            if v < best {
                best = v;
                best_t = k as f64 * step;
            }
        }
        let (mut a, mut b) = (best_t - step, best_t + step);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut gc, mut gd) = (g(c), g(d));
        for _ in 0..60 {
            if gc < gd {
                b = d;
                d = c;
                gd = gc;
                c = b - inv_phi * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + inv_phi * (b - a);
                gd = g(d);
            }
        }
        for (t, v) in [(c, gc), (d, gd)] {
            if v < best {
                best = v;
                best_t = t;
            }
        }
        (rad * best_t.cos(), rad * best_t.sin())
    }
}

impl HeisSet for HorizontalDisk {
    fn dist_capped(&self, x: &HPoint<f64>, _cap: f64) -> f64 {
        let (p1, p2) = self.nearest(x);
        Self::gauge4_to(x, p1, p2).sqrt().sqrt()
    }

    fn bounds(&self) -> Box3 {
        Box3::new([-self.radius, -self.radius, 0.0], [self.radius, self.radius, 0.0])
    }
}

/// A finite sample of a set, with nearest-point distances accelerated by a
/// horizontal bucket grid (Korányi distance dominates horizontal Euclidean
/// distance, so only nearby buckets need scanning).
#[derive(Debug, Clone)]
pub struct SampledSet {
    points: Vec<HPoint<f64>>,
    bucket: f64,
    grid: HashMap<(i64, i64), Vec<u32>>,
    gap: f64,
    bounds: Box3,
}

impl SampledSet {
    /// `gap` is the covering radius of the sample in the set (every point of
    /// the set lies within `gap` of a sample); `bucket` is the horizontal
    /// bucket size, ideally about the largest distance cap queried.
    pub fn new(points: Vec<HPoint<f64>>, gap: f64, bucket: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("empty point sample".into()));
        }
        let mut grid: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let mut b = Box3::new([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for (k, p) in points.iter().enumerate() {
            grid.entry(((p.x1 / bucket).floor() as i64, (p.x2 / bucket).floor() as i64))
                .or_default()
                .push(k as u32);
            b = b.union(&Box3::new([p.x1, p.x2, p.x3], [p.x1, p.x2, p.x3]));
        }
        Ok(Self {
            points,
            bucket,
            grid,
            gap,
            bounds: b,
        })
    }

    /// Samples `sampler(k)` for `k < count`.
    pub fn from_sampler<F: Fn(usize) -> HPoint<f64>>(
        sampler: F,
        count: usize,
        gap: f64,
        bucket: f64,
    ) -> Result<Self> {
        Self::new((0..count).map(sampler).collect(), gap, bucket)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl HeisSet for SampledSet {
    fn dist_capped(&self, x: &HPoint<f64>, cap: f64) -> f64 {
        if !cap.is_finite() {
            return self
                .points
                .iter()
                .map(|p| koranyi_dist(x, p))
                .fold(f64::INFINITY, f64::min);
        }
        let reach = (cap / self.bucket).ceil() as i64;
        let (c1, c2) = ((x.x1 / self.bucket).floor() as i64, (x.x2 / self.bucket).floor() as i64);
        let xi = group_inv(x);
        let mut best = f64::INFINITY;
        for i in c1 - reach..=c1 + reach {
            for j in c2 - reach..=c2 + reach {
                if let Some(ids) = self.grid.get(&(i, j)) {
                    for &k in ids {
                        best = best.min(koranyi_norm(&group_mul(&xi, &self.points[k as usize])));
                    }
                }
            }
        }
        best
    }

    fn bounds(&self) -> Box3 {
        self.bounds
    }

    fn dist_error(&self) -> f64 {
        self.gap
    }
}

/// Monte Carlo volume of `E^δ = {x : d(x, E) ≤ δ}`, with bracketing volumes
/// at radii `δ ∓ dist_error` for sampled sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodVolume {
    pub estimate: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

pub fn koranyi_neighborhood_volume(
    set: &dyn HeisSet,
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<NeighborhoodVolume> {
    if !(delta > 0.0) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, inf)",
        });
    }
    if n < 1000 {
        return Err(Error::OutOfRange {
            name: "Monte Carlo sample count",
            value: n as f64,
            range: "[1000, inf)",
        });
    }
    let err = set.dist_error();
    let region = set.bounds().koranyi_padded(delta + err);
    let cap = delta + err;
    let tallies: Vec<[u64; 3]> = chunked(n, seed, 0x6e76, |rng, len| {
        let mut t = [0u64; 3];
        for _ in 0..len {
            let d = set.dist_capped(&uniform_in_box(rng, &region), cap);
            t[0] += (d <= delta - err) as u64;
            t[1] += (d <= delta) as u64;
            t[2] += (d <= delta + err) as u64;
        }
        t
    });
    let mut sum = [0u64; 3];
    for t in &tallies {
        for k in 0..3 {
            sum[k] += t[k];
        }
    }
    let v = region.volume();
    let f = |k: usize| sum[k] as f64 / n as f64;
    Ok(NeighborhoodVolume {
        estimate: v * f(1),
        stderr: v * (f(1) * (1.0 - f(1)) / n as f64).sqrt(),
        lower: v * f(0),
        upper: v * f(2),
        n,
    })
}
