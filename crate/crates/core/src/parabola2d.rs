//! Planar neighbourhoods of parabola arcs and their incidence integrals.
//!
//! For `z = (a, b, c)` the arc is `Γ_z = {(s, a s²/2 + b s + c) : s ∈ I}` and
//! `Γ_z^δ` its Euclidean δ-neighbourhood.

use crate::error::{Error, Result};
use crate::projection::arc_distance;
use crate::sampling::rng_for;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaNbhd {
    pub z: [f64; 3],
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
}

impl ParabolaNbhd {
    pub fn new(z: [f64; 3], lo: f64, hi: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::OutOfRange {
                name: "neighbourhood delta",
                value: delta,
                range: "(0, inf)",
            });
        }
        if !(lo < hi) {
            return Err(Error::OutOfRange {
                name: "arc interval length",
                value: hi - lo,
                range: "(0, inf)",
            });
        }
        Ok(Self { z, lo, hi, delta })
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let [a, b, c] = self.z;
        (0.5 * a * s + b) * s + c
    }

    /// Exact Euclidean distance from `pt` to the arc.
    pub fn dist(&self, pt: (f64, f64)) -> f64 {
        let [a, b, c] = self.z;
        arc_distance(a, b, c, self.lo, self.hi, pt.0, pt.1).0
    }

    /// Range of the arc's height over `[s0, s1] ∩ I`, or `None` if empty.
    fn height_range(&self, s0: f64, s1: f64) -> Option<(f64, f64)> {
        let s0 = s0.max(self.lo);
        let s1 = s1.min(self.hi);
        if s0 > s1 {
            return None;
        }
        let (mut lo, mut hi) = {
            let (u, v) = (self.eval(s0), self.eval(s1));
            (u.min(v), u.max(v))
        };
        let [a, b, _] = self.z;
        if a != 0.0 {
            let vertex = -b / a;
            if vertex > s0 && vertex < s1 {
                let v = self.eval(vertex);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Some((lo, hi))
    }

    /// Arclength plus end caps: the area of the neighbourhood when the arc
    /// does not fold back within distance δ of itself.
    pub fn nominal_area(&self, n: usize) -> f64 {
        let [a, b, _] = self.z;
        let h = (self.hi - self.lo) / n as f64;
        let len: f64 = (0..n)
            .map(|i| {
                let s = self.lo + (i as f64 + 0.5) * h;
                let d = a * s + b;
                (1.0 + d * d).sqrt() * h
            })
            .sum();
        2.0 * self.delta * len + std::f64::consts::PI * self.delta * self.delta
    }
}

pub fn nbhd_contains(pn: &ParabolaNbhd, pt: (f64, f64)) -> bool {
    pn.dist(pt) <= pn.delta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFamily {
    pub zs: Vec<[f64; 3]>,
    pub bound_r: f64,
    pub a_separation: f64,
}

impl CoefficientFamily {
    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }

    /// Smallest gap between sorted `a`-coordinates.
    pub fn min_a_gap(&self) -> f64 {
        let mut a: Vec<f64> = self.zs.iter().map(|z| z[0]).collect();
        a.sort_by(f64::total_cmp);
        a.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn nbhds(&self, lo: f64, hi: f64, delta: f64) -> Result<Vec<ParabolaNbhd>> {
        self.zs
            .iter()
            .map(|&z| ParabolaNbhd::new(z, lo, hi, delta))
            .collect()
    }

    /// CSV with header `a,b,c,lo,hi,delta`, 17 significant digits.
    pub fn to_csv(&self, lo: f64, hi: f64, delta: f64) -> String {
        let mut out = String::from("a,b,c,lo,hi,delta\n");
        for z in &self.zs {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                z[0], z[1], z[2], lo, hi, delta
            );
        }
        out
    }
}

/// Reads the CSV written by [`CoefficientFamily::to_csv`].
pub fn nbhds_from_csv(text: &str) -> Result<Vec<ParabolaNbhd>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "a,b,c,lo,hi,delta" => {}
        _ => return Err(Error::Parse("missing coefficient family header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        if v.len() != 6 {
            return Err(Error::Parse(format!("line {}: expected 6 fields", i + 2)));
        }
        out.push(ParabolaNbhd::new([v[0], v[1], v[2]], v[3], v[4], v[5])?);
    }
    Ok(out)
}

/// `a`-coordinates in slots of width `3δ/2` across `[-1, 1]`, each jittered
/// by less than `δ/4` about the slot centre (so distinct `a` differ by at
/// least δ); `b, c` uniform in `[-r, r]`.
pub fn family_random_coeffs(delta: f64, r: f64, seed: u64) -> Result<CoefficientFamily> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 1)",
        });
    }
    let slot = 1.5 * delta;
    let n = (2.0 / slot).floor() as usize;
    let mut rng = rng_for(seed, 0x9c0e);
    let zs = (0..n)
        .map(|k| {
            let centre = -1.0 + (k as f64 + 0.5) * slot;
            let a = centre + rng.random_range(-0.24 * delta..0.24 * delta);
            let b = rng.random_range(-r..=r);
            let c = rng.random_range(-r..=r);
            [a, b, c]
        })
        .collect();
    Ok(CoefficientFamily {
        zs,
        bound_r: r.max(1.0),
        a_separation: delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconcentrationReport {
    pub n_balls: usize,
    /// largest `card(Z ∩ B(z0, ρ)) · δ / ρ`
    pub max_ratio: f64,
    /// largest `card / (δ^(-ε) ρ / δ)`
    pub max_katz_tao_ratio: f64,
    /// balls whose count exceeds the separation bound `2ρ / sep + 1`
    pub violations: usize,
    /// whether the sorted `a`-gaps respect the declared separation
    pub separated: bool,
    pub min_a_gap: f64,
}

/// Samples balls `B(z0, ρ)` (half centred at members, half uniform in the
/// coefficient box) with `ρ` log-uniform in `[δ, 2 bound_r]`, and checks the
/// members they contain against both `δ^(-ε) ρ / δ` and the bound that
/// follows from `a`-separation alone: every member of the ball has its `a`
/// in `[a0 - ρ, a0 + ρ]`, an interval holding at most `2ρ/sep + 1` separated
/// values.
pub fn check_nonconcentration(
    fam: &CoefficientFamily,
    delta: f64,
    eps: f64,
    n_balls: usize,
    seed: u64,
) -> Result<NonconcentrationReport> {
    if !(delta > 0.0 && eps >= 0.0) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, inf)",
        });
    }
    let min_gap = fam.min_a_gap();
    let separated = fam.len() < 2 || min_gap >= fam.a_separation * (1.0 - 1e-12);
    let mut rng = rng_for(seed, 0x4e0c);
    let r = fam.bound_r;
    let mut sorted: Vec<[f64; 3]> = fam.zs.clone();
    sorted.sort_by(|x, y| x[0].total_cmp(&y[0]));
    let mut report = NonconcentrationReport {
        n_balls,
        max_ratio: 0.0,
        max_katz_tao_ratio: 0.0,
        violations: 0,
        separated,
        min_a_gap: min_gap,
    };
    if fam.is_empty() {
        return Ok(report);
    }
    let (lrho0, lrho1) = (delta.ln(), (2.0 * r).max(delta).ln());
    for k in 0..n_balls {
        let rho = rng.random_range(lrho0..=lrho1).exp();
        let z0 = if k % 2 == 0 {
            sorted[rng.random_range(0..sorted.len())]
        } else {
            [
                rng.random_range(-r..=r),
                rng.random_range(-r..=r),
                rng.random_range(-r..=r),
            ]
        };
        // only members with a in [a0 - ρ, a0 + ρ] can lie in the ball
        let start = sorted.partition_point(|z| z[0] < z0[0] - rho);
        let card = sorted[start..]
            .iter()
            .take_while(|z| z[0] <= z0[0] + rho)
            .filter(|z| {
                let d2: f64 = (0..3).map(|i| (z[i] - z0[i]).powi(2)).sum();
                d2 <= rho * rho
            })
            .count();
        let ratio = card as f64 * delta / rho;
        report.max_ratio = report.max_ratio.max(ratio);
        report.max_katz_tao_ratio = report
            .max_katz_tao_ratio
            .max(card as f64 / (delta.powf(-eps) * rho / delta));
        if card as f64 > 2.0 * rho / fam.a_separation + 1.0 {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceResult {
    pub delta: f64,
    pub card: usize,
    pub integral: f64,
    pub exponent: f64,
    pub grid_n: usize,
}

/// Largest admissible grid spacing relative to δ.
pub const MAX_SPACING_OVER_DELTA: f64 = 1.0 / 8.0;

/// `(1/n²) Σ_cells (Σ_z χ_{Γ_z^δ}(cell centre))^p` over `[0, 1]²`.
///
/// Each column of cells is processed independently (only arcs whose
/// `δ`-padded `s`-range meets the column are visited, and only rows within
/// the arc's padded height range there are tested exactly); column sums are
/// reduced in column order.
pub fn incidence_integral(fams: &[ParabolaNbhd], exponent: f64, grid_n: usize) -> Result<f64> {
    if exponent < 1.0 {
        return Err(Error::OutOfRange {
            name: "exponent",
            value: exponent,
            range: "[1, inf)",
        });
    }
    if grid_n < 64 {
        return Err(Error::OutOfRange {
            name: "grid_n",
            value: grid_n as f64,
            range: "[64, inf)",
        });
    }
    let h = 1.0 / grid_n as f64;
    if let Some(dmin) = fams.iter().map(|f| f.delta).reduce(f64::min) {
        if h > dmin * MAX_SPACING_OVER_DELTA {
            return Err(Error::GridTooCoarse {
                spacing: h,
                delta: dmin,
                max: dmin * MAX_SPACING_OVER_DELTA,
            });
        }
    }
    let columns: Vec<f64> = (0..grid_n)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let mut counts = vec![0u32; grid_n];
            for f in fams {
                if x < f.lo - f.delta || x > f.hi + f.delta {
                    continue;
                }
                let Some((ylo, yhi)) = f.height_range(x - f.delta, x + f.delta) else {
                    continue;
                };
                let j0 = (((ylo - f.delta) / h - 0.5).floor().max(0.0)) as usize;
                let j1f = ((yhi + f.delta) / h - 0.5).ceil();
                if j1f < 0.0 {
                    continue;
                }
                let j1 = (j1f as usize).min(grid_n - 1);
                for (j, cnt) in counts.iter_mut().enumerate().take(j1 + 1).skip(j0) {
                    let y = (j as f64 + 0.5) * h;
                    if nbhd_contains(f, (x, y)) {
                        *cnt += 1;
                    }
                }
            }
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| (c as f64).powf(exponent))
                .sum::<f64>()
        })
        .collect();
    Ok(columns.iter().sum::<f64>() * h * h)
}

/// Smallest grid resolution with spacing at most `δ / 8` (and at least 64).
pub fn grid_n_for(delta: f64, refine: usize) -> usize {
    ((1.0 / (delta * MAX_SPACING_OVER_DELTA)).ceil() as usize * refine.max(1)).max(64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_examples() {
        let d = 0.01;
        let flat = ParabolaNbhd::new([0.0, 0.0, 0.0], -1.0, 1.0, d).unwrap();
        assert!(nbhd_contains(&flat, (0.3, 0.0)));
        assert!(nbhd_contains(&flat, (0.0, 0.99 * d)));
        assert!(!nbhd_contains(&flat, (0.0, 1.01 * d)));
        let cup = ParabolaNbhd::new([2.0, 0.0, 0.0], -1.0, 1.0, d).unwrap();
        assert!(!nbhd_contains(&cup, (0.0, 1.01 * d)));
        // dense sampling oracle for the nearest point
        let dense = (0..=200_000)
            .map(|i| {
                let s = -1.0 + 2.0 * i as f64 / 200_000.0;
                (s * s + (s * s - 1.01 * d).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((cup.dist((0.0, 1.01 * d)) - dense).abs() < 1e-6);
        assert!(nbhd_contains(&cup, (0.5, 0.25)));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(ParabolaNbhd::new([0.0; 3], 0.0, 1.0, 0.0).is_err());
        assert!(ParabolaNbhd::new([0.0; 3], 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn generator_properties() {
        for k in 3..=9 {
            let delta = 2f64.powi(-k);
            let f = family_random_coeffs(delta, 0.5, 1).unwrap();
            let n = f.len() as f64;
            assert!(n >= 1.0 / delta && n <= 4.0 / delta, "card {n}");
            assert!(f.min_a_gap() >= delta);
            assert!(f.zs.iter().all(|z| z.iter().all(|v| v.abs() <= f.bound_r)));
        }
        assert_eq!(
            family_random_coeffs(0.1, 0.5, 3).unwrap(),
            family_random_coeffs(0.1, 0.5, 3).unwrap()
        );
    }

    #[test]
    fn nonconcentration_examples() {
        let delta = 2f64.powi(-7);
        let f = family_random_coeffs(delta, 0.5, 2).unwrap();
        let r = check_nonconcentration(&f, delta, 0.1, 4000, 3).unwrap();
        assert!(r.separated);
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 2.5, "{}", r.max_ratio);

        let single = CoefficientFamily { zs: vec![[0.1, 0.2, 0.3]], bound_r: 1.0, a_separation: delta };
        let r = check_nonconcentration(&single, delta, 0.0, 500, 4).unwrap();
        assert!(r.max_ratio <= 1.0);

        let mut dup = f.clone();
        dup.zs.push(dup.zs[0]);
        let r = check_nonconcentration(&dup, delta, 0.0, 100, 5).unwrap();
        assert!(!r.separated);
    }

    #[test]
    fn flat_strip_area() {
        let d = 2f64.powi(-6);
        let strip = ParabolaNbhd::new([0.0, 0.0, 0.5], -1.0, 2.0, d).unwrap();
        let area = incidence_integral(&[strip], 1.5, grid_n_for(d, 1)).unwrap();
        assert!((area / (2.0 * d) - 1.0).abs() < 0.1, "{area}");
    }

    #[test]
    fn disjoint_additivity_and_one_cell_bound() {
        let d = 2f64.powi(-6);
        let a = ParabolaNbhd::new([0.0, 0.0, 0.25], -1.0, 2.0, d).unwrap();
        let b = ParabolaNbhd::new([0.0, 0.0, 0.75], -1.0, 2.0, d).unwrap();
        let n = grid_n_for(d, 1);
        let sa = incidence_integral(&[a], 1.5, n).unwrap();
        let sb = incidence_integral(&[b], 1.5, n).unwrap();
        let sab = incidence_integral(&[a, b], 1.5, n).unwrap();
        assert!((sab - sa - sb).abs() < 1e-12);

        // N lines through (1/2, 1/2)
        let fams: Vec<ParabolaNbhd> = (0..20)
            .map(|k| {
                let slope = -1.0 + k as f64 / 10.0;
                ParabolaNbhd::new([0.0, slope, 0.5 - 0.5 * slope], 0.0, 1.0, d).unwrap()
            })
            .collect();
        let total = incidence_integral(&fams, 1.5, n).unwrap();
        assert!(total >= 20f64.powf(1.5) / (n * n) as f64);
    }

    #[test]
    fn curved_area_converges() {
        let d = 2f64.powi(-7);
        let arc = ParabolaNbhd::new([1.0, 0.0, 0.3], 0.2, 0.8, d).unwrap();
        let want = arc.nominal_area(10_000);
        let a8 = incidence_integral(&[arc], 1.0, grid_n_for(d, 1)).unwrap();
        let a16 = incidence_integral(&[arc], 1.0, grid_n_for(d, 2)).unwrap();
        assert!((a8 / want - 1.0).abs() < 0.05, "{a8} vs {want}");
        assert!((a16 / want - 1.0).abs() < 0.02, "{a16} vs {want}");
    }

    #[test]
    fn exponent_monotone_and_grid_checks() {
        let d = 2f64.powi(-5);
        let fam = family_random_coeffs(d, 0.5, 9).unwrap();
        let nb = fam.nbhds(0.0, 1.0, d).unwrap();
        let n = grid_n_for(d, 1);
        let i1 = incidence_integral(&nb, 1.0, n).unwrap();
        let i32 = incidence_integral(&nb, 1.5, n).unwrap();
        assert!(i32 >= i1);
        assert!(matches!(incidence_integral(&nb, 1.5, 64), Err(Error::GridTooCoarse { .. })));
        assert!(incidence_integral(&nb, 0.5, n).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let fam = family_random_coeffs(0.2, 0.5, 1).unwrap();
        let nb = nbhds_from_csv(&fam.to_csv(0.0, 1.0, 0.2)).unwrap();
        assert_eq!(nb, fam.nbhds(0.0, 1.0, 0.2).unwrap());
    }
}
