//! Counting Heisenberg δ-boxes that meet a set.
//!
//! The tiles are left translates `p · ([0, δ]² × [k δ², (k + 1) δ²])` with
//! `p = (i δ, j δ, 0)`. They tile `ℍ¹`, and each has diameter comparable to
//! δ in the Korányi metric independently of its position (an axis-aligned
//! `δ × δ × δ²` box far from the `x3`-axis is sheared by the group law and
//! has Korányi diameter much larger than δ).

use super::field::Box3;
use super::volume::HeisSet;
use crate::error::{Error, Result};
use crate::heis::HPoint;
use rayon::prelude::*;

/// Number of tiles of scale δ meeting `region` for which at least one of the
/// 3×3×3 probes (at the centres of the tile's sub-boxes) satisfies `member`.
///
/// For thin sets `member` should be a neighbourhood test such as
/// `d(x, E) ≤ δ/2`.
pub fn heis_box_count<F>(member: F, delta: f64, region: &Box3) -> Result<u64>
where
    F: Fn(&HPoint<f64>) -> bool + Sync,
{
    count_tiles(&member, &|_: &HPoint<f64>| true, delta, region)
}

/// Korányi distance from a tile's centre to any point of the tile is below
/// this multiple of δ (horizontal offset ≤ δ/√2, vertical offset ≤ 3δ²/4).
pub const TILE_RADIUS_OVER_DELTA: f64 = 1.75;

/// [`heis_box_count`] for the neighbourhood test `d(x, E) ≤ δ/2`, skipping
/// tiles whose centre is farther than `δ/2 + 1.75 δ` from the set (no probe
/// of such a tile can pass, by the triangle inequality).
pub fn heis_box_count_set(set: &dyn HeisSet, delta: f64, region: &Box3) -> Result<u64> {
    let r = 0.5 * delta;
    let cap = r + TILE_RADIUS_OVER_DELTA * delta + set.dist_error();
    count_tiles(
        &|x: &HPoint<f64>| set.dist_capped(x, r) <= r,
        &|c: &HPoint<f64>| set.dist_capped(c, cap) <= cap,
        delta,
        region,
    )
}

fn count_tiles(
    member: &(dyn Fn(&HPoint<f64>) -> bool + Sync),
    may_hit: &(dyn Fn(&HPoint<f64>) -> bool + Sync),
    delta: f64,
    region: &Box3,
) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        });
    }
    let d2 = delta * delta;
    let i0 = (region.lo[0] / delta).floor() as i64;
    let i1 = (region.hi[0] / delta).floor() as i64;
    let j0 = (region.lo[1] / delta).floor() as i64;
    let j1 = (region.hi[1] / delta).floor() as i64;
    let nj = (j1 - j0 + 1) as usize;
    let columns = ((i1 - i0 + 1) as usize) * nj;
    let counts: Vec<u64> = (0..columns)
        .into_par_iter()
        .map(|c| {
            let i = i0 + (c / nj) as i64;
            let j = j0 + (c % nj) as i64;
            let (p1, p2) = (i as f64 * delta, j as f64 * delta);
            // z3 = x3 - (p1 x2 - p2 x1)/2 over the column's part of the region
            let xs1 = [p1, p1 + delta];
            let xs2 = [p2, p2 + delta];
            let mut tw_lo = f64::INFINITY;
            let mut tw_hi = f64::NEG_INFINITY;
            for a in xs1 {
                for b in xs2 {
                    let t = 0.5 * (p1 * b - p2 * a);
                    tw_lo = tw_lo.min(t);
                    tw_hi = tw_hi.max(t);
                }
            }
            let k0 = ((region.lo[2] - tw_hi) / d2).floor() as i64;
            let k1 = ((region.hi[2] - tw_lo) / d2).floor() as i64;
            let mut n = 0u64;
            for k in k0..=k1 {
                let (c1, c2, c3) = (0.5 * delta, 0.5 * delta, (k as f64 + 0.5) * d2);
                let centre = HPoint::new(p1 + c1, p2 + c2, c3 + 0.5 * (p1 * c2 - p2 * c1));
                if !may_hit(&centre) {
                    continue;
                }
                let hit = (0..27).any(|q| {
                    let (a, b, cc) = (q / 9, (q / 3) % 3, q % 3);
                    let z1 = (a as f64 + 0.5) / 3.0 * delta;
                    let z2 = (b as f64 + 0.5) / 3.0 * delta;
                    let z3 = (k as f64 + (cc as f64 + 0.5) / 3.0) * d2;
                    // x = p · z
                    let x = HPoint::new(p1 + z1, p2 + z2, z3 + 0.5 * (p1 * z2 - p2 * z1));
                    member(&x)
                });
                n += hit as u64;
            }
            n
        })
        .collect();
    Ok(counts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fit::fit_powerlaw;
    use crate::grid::volume::{HeisSet, HorizontalDisk, PointSet, SegmentSet};
    use crate::tubes::Direction;

    #[test]
    fn single_point_one_tile() {
        let d = 0.125;
        let set = PointSet(HPoint::new(d / 2.0, d / 2.0, d * d / 2.0));
        let region = set.bounds().koranyi_padded(d);
        let n = heis_box_count(|x| set.dist(x) <= d / 2.0, d, &region).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn segment_and_disk_dimensions() {
        let seg = SegmentSet::new(HPoint::identity(), Direction::new(0.3));
        let disk = HorizontalDisk { radius: 0.5 };
        let mut ps = Vec::new();
        let mut pd = Vec::new();
        for k in 5..=7 {
            let d = 2f64.powi(-k);
            let r = seg.bounds().koranyi_padded(d);
            let n = heis_box_count_set(&seg, d, &r).unwrap();
            if k == 5 {
                // the prefilter never changes the count
                assert_eq!(n, heis_box_count(|x| seg.dist(x) <= d / 2.0, d, &r).unwrap());
                let rd = disk.bounds().koranyi_padded(d);
                assert_eq!(
                    heis_box_count_set(&disk, d, &rd).unwrap(),
                    heis_box_count(|x| disk.dist(x) <= d / 2.0, d, &rd).unwrap()
                );
            }
            ps.push((d, n as f64));
            let r = disk.bounds().koranyi_padded(d);
            pd.push((d, heis_box_count_set(&disk, d, &r).unwrap() as f64));
        }
        let fs = fit_powerlaw(&ps).unwrap();
        let fd = fit_powerlaw(&pd).unwrap();
        assert!((fs.slope + 1.0).abs() < 0.15, "segment slope {}", fs.slope);
        assert!((fd.slope + 3.0).abs() < 0.2, "disk slope {}", fd.slope);
    }
}
