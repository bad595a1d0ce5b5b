//! Counting how many tubes of a family contain each cell centre.
//!
//! Cells are visited tube by tube through a tight enclosure of the tube body
//! computed in the tube's own frame: with `w = y⁻¹ x`, `u = <w', e>`,
//! `v = <w', e⊥>`, every point of `T_δ(y, e)` has `|v| ≤ δ`, `|u| ≤ 1/2 + δ`
//! and, for core parameters `s ∈ [u - δ, u + δ] ∩ [-1/2, 1/2]`,
//! `w3 ∈ s v / 2 + [-δ²/4, δ²/4]`. Every enclosed cell centre is then tested
//! with the exact membership predicate, so the counts are exactly those of
//! [`tube_contains`] at the cell centres.

use super::field::{Box3, ScalarField3};
use crate::error::{Error, Result};
use crate::heis::HPoint;
use crate::tubes::{tube_contains, Tube, TubeFamily};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default cap on the number of cells a dense field or a streamed overlap
/// computation may touch.
pub const DEFAULT_CELL_BUDGET: u64 = 4_000_000_000;

/// Largest admissible spacing `(δ/4, δ/4, δ²/4)`.
pub fn max_spacing(delta: f64) -> [f64; 3] {
    [delta / 4.0, delta / 4.0, delta * delta / 4.0]
}

/// Spacing `(δ/(4k), δ/(4k), δ²/(4k))` for refinement factor `k`.
pub fn spacing_for(delta: f64, refine: f64) -> [f64; 3] {
    max_spacing(delta).map(|h| h / refine)
}

fn check_spacing(delta: f64, spacing: [f64; 3]) -> Result<()> {
    let max = max_spacing(delta);
    for k in 0..3 {
        if !(spacing[k] > 0.0) || spacing[k] > max[k] * (1.0 + 1e-12) {
            return Err(Error::GridTooCoarse {
                spacing: spacing[k],
                delta,
                max: max[k],
            });
        }
    }
    Ok(())
}

/// Index range `[lo, hi]` of centres `o + (i + 1/2) h` inside `[a, b]`.
#[inline]
fn centre_range(a: f64, b: f64, o: f64, h: f64) -> (i64, i64) {
    (
        ((a - o) / h - 0.5).ceil() as i64,
        ((b - o) / h - 0.5).floor() as i64,
    )
}

/// Interval of `t` with `|c0 + c1 t| ≤ r`, intersected into `(lo, hi)`.
#[inline]
fn clip_linear(lo: &mut f64, hi: &mut f64, c0: f64, c1: f64, r: f64) {
    if c1.abs() > 1e-300 {
        let (p, q) = ((-r - c0) / c1, (r - c0) / c1);
        *lo = lo.max(p.min(q));
        *hi = hi.min(p.max(q));
    } else if c0.abs() > r {
        *lo = f64::INFINITY;
        *hi = f64::NEG_INFINITY;
    }
}

/// The lattice of cell centres `origin + (i + 1/2) h`, `i ∈ ℤ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl Lattice {
    #[inline]
    pub fn centre(&self, i: [i64; 3]) -> HPoint<f64> {
        HPoint::new(
            self.origin[0] + (i[0] as f64 + 0.5) * self.spacing[0],
            self.origin[1] + (i[1] as f64 + 0.5) * self.spacing[1],
            self.origin[2] + (i[2] as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Range of `x1`-plane indices the tube can meet.
    pub fn plane_range(&self, tube: &Tube<f64>) -> (i64, i64) {
        let (e1, e2) = tube.dir.e();
        let d = tube.radius();
        let reach = e1.abs() * (0.5 + d) + e2.abs() * d;
        centre_range(
            tube.base.x1 - reach,
            tube.base.x1 + reach,
            self.origin[0],
            self.spacing[0],
        )
    }

    /// Calls `f(i2, i3)` for every cell centre of plane `i1` inside the tube.
    pub fn visit_tube_plane<F: FnMut(i64, i64)>(&self, tube: &Tube<f64>, i1: i64, mut f: F) {
        let y = tube.base;
        let (e1, e2) = tube.dir.e();
        let d = tube.radius();
        let [h1, h2, h3] = self.spacing;
        let x1 = self.origin[0] + (i1 as f64 + 0.5) * h1;
        let w1 = x1 - y.x1;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        clip_linear(&mut lo, &mut hi, e1 * w1, e2, 0.5 + d);
        clip_linear(&mut lo, &mut hi, -e2 * w1, e1, d);
        if !(lo <= hi) {
            return;
        }
        let (j0, j1) = centre_range(y.x2 + lo, y.x2 + hi, self.origin[1], h2);
        let pad3 = 0.25 * d * d;
        for i2 in j0..=j1 {
            let x2 = self.origin[1] + (i2 as f64 + 0.5) * h2;
            let w2 = x2 - y.x2;
            let u = e1 * w1 + e2 * w2;
            let v = -e2 * w1 + e1 * w2;
            if v.abs() > d {
                continue;
            }
            let s0 = (u - d).max(-0.5);
            let s1 = (u + d).min(0.5);
            if s0 > s1 {
                continue;
            }
            let (a, b) = (0.5 * s0 * v, 0.5 * s1 * v);
            let shift = y.x3 + 0.5 * (y.x1 * x2 - y.x2 * x1);
            let (k0, k1) = centre_range(
                a.min(b) - pad3 + shift,
                a.max(b) + pad3 + shift,
                self.origin[2],
                h3,
            );
            for i3 in k0..=k1 {
                if tube_contains(tube, &self.centre([i1, i2, i3])) {
                    f(i2, i3);
                }
            }
        }
    }
}

fn family_delta(fam: &TubeFamily<f64>) -> Result<f64> {
    let d = fam.radius().ok_or(Error::Config("empty tube family".into()))?;
    if fam.tubes.iter().any(|t| t.radius() != d) {
        return Err(Error::Config("tube family mixes radii".into()));
    }
    Ok(d)
}

/// Rough upper estimate of the cells visited by a rasterization.
pub fn estimate_tube_cells(fam: &TubeFamily<f64>, spacing: [f64; 3]) -> u64 {
    let Some(d) = fam.radius() else { return 0 };
    let cellvol: f64 = spacing.iter().product();
    // enclosure volume ≤ (1 + 2δ) · 2δ · (2δ² + δ²/2)
    let per_tube = (1.0 + 2.0 * d) * 2.0 * d * 2.5 * d * d / cellvol;
    (per_tube * fam.len() as f64).ceil() as u64
}

/// Dense overlap field `Σ_T χ_T` at the cell centres of `region`.
pub fn rasterize_overlap(
    fam: &TubeFamily<f64>,
    region: &Box3,
    spacing: [f64; 3],
) -> Result<ScalarField3> {
    rasterize_overlap_with_budget(fam, region, spacing, DEFAULT_CELL_BUDGET / 16)
}

pub fn rasterize_overlap_with_budget(
    fam: &TubeFamily<f64>,
    region: &Box3,
    spacing: [f64; 3],
    budget: u64,
) -> Result<ScalarField3> {
    let delta = family_delta(fam)?;
    check_spacing(delta, spacing)?;
    let dims = [0, 1, 2].map(|i| ((region.hi[i] - region.lo[i]) / spacing[i]).ceil().max(1.0) as u64);
    let cells = dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]);
    if cells > budget {
        return Err(Error::CapacityExceeded {
            estimated: cells,
            budget,
        });
    }
    let mut field = ScalarField3::covering(region, spacing)?;
    let lat = Lattice {
        origin: field.origin,
        spacing,
    };
    let [n1, n2, n3] = field.dims;
    let ranges: Vec<(i64, i64)> = fam.tubes.iter().map(|t| lat.plane_range(t)).collect();
    field
        .values
        .par_chunks_mut(n2 * n3)
        .enumerate()
        .for_each(|(i1, plane)| {
            let i1 = i1 as i64;
            for (t, &(a, b)) in fam.tubes.iter().zip(&ranges) {
                if i1 < a || i1 > b {
                    continue;
                }
                lat.visit_tube_plane(t, i1, |i2, i3| {
                    if i2 >= 0 && i3 >= 0 && (i2 as usize) < n2 && (i3 as usize) < n3 {
                        plane[i2 as usize * n3 + i3 as usize] += 1.0;
                    }
                });
            }
        });
    debug_assert_eq!(field.values.len(), n1 * n2 * n3);
    Ok(field)
}

/// `Σ_cells count^p · cellvol` for several exponents, with occupancy data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub exponents: Vec<f64>,
    pub integrals: Vec<f64>,
    pub hit_cells: u64,
    pub max_count: u32,
    pub cell_volume: f64,
}

impl OverlapStats {
    pub fn integral(&self, p: f64) -> Option<f64> {
        self.exponents
            .iter()
            .position(|&q| q == p)
            .map(|i| self.integrals[i])
    }
}

const KEY_OFFSET: i64 = 1 << 31;

/// Lᵖ integrals of `Σ_T χ_T` on the global lattice with the given spacing,
/// without materializing a dense field.
///
/// Tubes are bucketed by the `x1`-planes they meet. Each plane gathers the
/// keys of the cells hit by its tubes, sorts them and counts runs; planes are
/// processed in parallel and reduced in plane order, so the result does not
/// depend on the number of threads.
pub fn overlap_lp(
    fam: &TubeFamily<f64>,
    spacing: [f64; 3],
    exponents: &[f64],
    budget: u64,
) -> Result<OverlapStats> {
    let delta = family_delta(fam)?;
    check_spacing(delta, spacing)?;
    if let Some(&p) = exponents.iter().find(|&&p| !(p >= 1.0)) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            range: "[1, inf)",
        });
    }
    let estimated = estimate_tube_cells(fam, spacing);
    if estimated > budget {
        return Err(Error::CapacityExceeded { estimated, budget });
    }
    let lat = Lattice {
        origin: [0.0; 3],
        spacing,
    };
    let ranges: Vec<(i64, i64)> = fam.tubes.iter().map(|t| lat.plane_range(t)).collect();
    let pmin = ranges.iter().map(|r| r.0).min().unwrap_or(0);
    let pmax = ranges.iter().map(|r| r.1).max().unwrap_or(-1);
    let n_planes = (pmax - pmin + 1).max(0) as usize;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); n_planes];
    for (k, &(a, b)) in ranges.iter().enumerate() {
        for i1 in a..=b {
            buckets[(i1 - pmin) as usize].push(k as u32);
        }
    }
    struct Plane {
        sums: Vec<f64>,
        hits: u64,
        max: u32,
        overflow: bool,
    }
    let planes: Vec<Plane> = buckets
        .par_iter()
        .enumerate()
        .map(|(off, tubes)| {
            let i1 = pmin + off as i64;
            let mut keys: Vec<u64> = Vec::new();
            let mut overflow = false;
            for &k in tubes {
                lat.visit_tube_plane(&fam.tubes[k as usize], i1, |i2, i3| {
                    let (a, b) = (i2 + KEY_OFFSET, i3 + KEY_OFFSET);
                    if a < 0 || b < 0 || a >= 1 << 32 || b >= 1 << 32 {
                        overflow = true;
                        return;
                    }
                    keys.push(((a as u64) << 32) | b as u64);
                });
            }
            keys.sort_unstable();
            let mut sums = vec![0.0; exponents.len()];
            let mut hits = 0u64;
            let mut max = 0u32;
            let mut idx = 0;
            while idx < keys.len() {
                let mut j = idx + 1;
                while j < keys.len() && keys[j] == keys[idx] {
                    j += 1;
                }
                let c = (j - idx) as u32;
                hits += 1;
                max = max.max(c);
                for (s, &p) in sums.iter_mut().zip(exponents) {
                    *s += if p == 1.0 { c as f64 } else { (c as f64).powf(p) };
                }
                idx = j;
            }
            Plane {
                sums,
                hits,
                max,
                overflow,
            }
        })
        .collect();
    if planes.iter().any(|p| p.overflow) {
        return Err(Error::CapacityExceeded {
            estimated: u64::MAX,
            budget: 1 << 32,
        });
    }
    let cell_volume: f64 = spacing.iter().product();
    let mut integrals = vec![0.0; exponents.len()];
    let mut hit_cells = 0;
    let mut max_count = 0;
    for p in &planes {
        for (acc, s) in integrals.iter_mut().zip(&p.sums) {
            *acc += s;
        }
        hit_cells += p.hits;
        max_count = max_count.max(p.max);
    }
    integrals.iter_mut().for_each(|v| *v *= cell_volume);
    Ok(OverlapStats {
        exponents: exponents.to_vec(),
        integrals,
        hit_cells,
        max_count,
        cell_volume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_for, uniform_in_ball};
    use crate::tubes::{family_bush, Direction};
    use rand::Rng;

    fn single(t: Tube<f64>) -> TubeFamily<f64> {
        TubeFamily {
            tubes: vec![t],
            separation_scale: 0.0,
            min_separation: f64::INFINITY,
            label: "one".into(),
        }
    }

    #[test]
    fn enclosure_misses_no_cell() {
        // brute force over a box around the tube against the enclosure walk
        let mut rng = rng_for(2, 0);
        for _ in 0..6 {
            let d = rng.random_range(0.1..0.3);
            let t = Tube::new(
                uniform_in_ball(&mut rng, 0.8),
                Direction::new(rng.random_range(0.0..6.28)),
                d,
            )
            .unwrap();
            let h = spacing_for(d, 1.3);
            let lat = Lattice { origin: [0.013, -0.027, 0.004], spacing: h };
            let (a, b) = lat.plane_range(&t);
            let mut walked = 0usize;
            for i1 in a..=b {
                lat.visit_tube_plane(&t, i1, |_, _| walked += 1);
            }
            let bb = Box3::new(
                [t.base.x1 - 1.0, t.base.x2 - 1.0, t.base.x3 - 1.0],
                [t.base.x1 + 1.0, t.base.x2 + 1.0, t.base.x3 + 1.0],
            );
            let r = |k: usize| centre_range(bb.lo[k], bb.hi[k], lat.origin[k], h[k]);
            let (r1, r2, r3) = (r(0), r(1), r(2));
            let mut brute = 0usize;
            for i1 in r1.0..=r1.1 {
                for i2 in r2.0..=r2.1 {
                    for i3 in r3.0..=r3.1 {
                        if tube_contains(&t, &lat.centre([i1, i2, i3])) {
                            brute += 1;
                        }
                    }
                }
            }
            assert_eq!(walked, brute);
        }
    }

    #[test]
    fn one_tube_volume_and_far_pair() {
        let d = 0.125;
        let t = Tube::new(HPoint::new(0.1, 0.2, 0.0), Direction::new(0.4), d).unwrap();
        let region = Box3::new([-1.0, -1.0, -1.0], [1.5, 1.5, 1.0]);
        let f = rasterize_overlap(&single(t), &region, spacing_for(d, 1.0)).unwrap();
        let vol = f.values.iter().sum::<f64>() * f.cell_volume();
        let ratio = vol / d.powi(3);
        assert!(ratio > 0.5 && ratio < 5.0, "{ratio}");

        let far = t.translated(&HPoint::new(0.0, 0.0, 0.8));
        let pair = TubeFamily { tubes: vec![t, far], ..single(t) };
        let f = rasterize_overlap(&pair, &region, spacing_for(d, 1.0)).unwrap();
        assert_eq!(f.max_value(), 1.0);
    }

    #[test]
    fn bush_origin_cell_counts_every_tube() {
        let d = 0.25;
        let fam = family_bush(d).unwrap();
        let region = Box3::new([-0.75, -0.75, -0.25], [0.75, 0.75, 0.25]);
        let f = rasterize_overlap(&fam, &region, spacing_for(d, 1.0)).unwrap();
        let c = f.cell_of(&HPoint::identity()).unwrap();
        assert_eq!(f.get(c), fam.len() as f64);
    }

    #[test]
    fn sparse_matches_dense() {
        let d = 0.25;
        let fam = family_bush(d).unwrap();
        let h = spacing_for(d, 1.0);
        // a dense field anchored on the global lattice
        let region = Box3::new([-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]);
        let f = rasterize_overlap(&fam, &region, h).unwrap();
        let s = overlap_lp(&fam, h, &[1.0, 1.5], DEFAULT_CELL_BUDGET).unwrap();
        let dense1 = super::super::field::lp_integral(&f, 1.0).unwrap();
        let dense32 = super::super::field::lp_integral(&f, 1.5).unwrap();
        assert!((s.integral(1.0).unwrap() / dense1 - 1.0).abs() < 1e-12);
        assert!((s.integral(1.5).unwrap() / dense32 - 1.0).abs() < 1e-12);
        assert_eq!(s.max_count as usize, fam.len());
    }

    #[test]
    fn spacing_and_budget_enforced() {
        let d = 0.25;
        let fam = family_bush(d).unwrap();
        let region = Box3::new([-1.0; 3], [1.0; 3]);
        assert!(matches!(
            rasterize_overlap(&fam, &region, [d / 2.0, d / 4.0, d * d / 4.0]),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(matches!(
            rasterize_overlap_with_budget(&fam, &region, spacing_for(d, 1.0), 10),
            Err(Error::CapacityExceeded { .. })
        ));
        assert!(matches!(
            overlap_lp(&fam, spacing_for(d, 1.0), &[1.5], 10),
            Err(Error::CapacityExceeded { .. })
        ));
    }
}
