//! Per-scale measurements of the fitted scenarios.

use super::{Check, ExperimentConfig, Record};
use crate::error::{Error, Result};
use crate::grid::raster::{estimate_tube_cells, overlap_lp, spacing_for};
use crate::grid::volume::{ball_box, koranyi_neighborhood_volume, mc_volume, HeisSet, HorizontalDisk, SegmentSet};
use crate::heis::{koranyi_norm4, HPoint};
use crate::maxop::{maxfun, operator_norm_probe_multi, probe_suite, BallIndicator, MaxOpOptions, TestFunction};
use crate::parabola2d::{check_nonconcentration, family_random_coeffs, grid_n_for, incidence_integral};
use crate::tubes::{family_bush, family_disjoint, family_random, tube_contains, Direction, DirectionRange, Tube, TubeFamily};

/// Samples per Monte Carlo volume.
const VOLUME_SAMPLES: usize = 1_000_000;
/// Balls sampled by the non-concentration checker at each scale.
const NONCONCENTRATION_BALLS: usize = 4000;
/// Vertical spacing of the disjoint control family (larger than any tube's
/// height, so translated tubes cannot meet).
const DISJOINT_GAP: f64 = 1.0;

pub(super) trait Measure: Sync {
    fn at(&self, delta: f64, stream: u64) -> Result<Record>;

    fn checks(&self, _records: &[Record], _cfg: &ExperimentConfig) -> Vec<Check> {
        Vec::new()
    }
}

fn record(delta: f64, value: f64, card: u64, extra: Vec<f64>) -> Record {
    Record {
        delta,
        value,
        card,
        extra,
        runtime: 0.0,
    }
}

/// Builds the measurement of a scenario; rasterizing scenarios check the
/// cell budget for every scale here, before any computation.
pub(super) fn prepare(name: &str, cfg: &ExperimentConfig) -> Result<Box<dyn Measure>> {
    Ok(match name {
        "tube-volume" => Box::new(TubeVolume),
        "ball-volume" => Box::new(BallVolume),
        "kakeya-overlap-random" | "kakeya-overlap-bush" | "kakeya-overlap-disjoint" | "sharpness-bush-lower" => {
            let kind = match name {
                "kakeya-overlap-random" => FamilyKind::Random,
                "kakeya-overlap-disjoint" => FamilyKind::Disjoint,
                _ => FamilyKind::Bush,
            };
            let m = Overlap {
                kind,
                refine: cfg.grid_refinement as f64,
                budget: cfg.cell_budget,
                norm_only: name == "sharpness-bush-lower",
                bush_floor: name == "kakeya-overlap-bush",
                seed: cfg.seed,
            };
            for &d in &cfg.delta_list {
                let fam = m.family(d)?;
                let estimated = estimate_tube_cells(&fam, spacing_for(d, m.refine));
                if estimated > m.budget {
                    return Err(Error::CapacityExceeded {
                        estimated,
                        budget: m.budget,
                    });
                }
            }
            Box::new(m)
        }
        "parabola-incidence" => Box::new(Incidence {
            refine: cfg.grid_refinement as usize,
            eps: cfg.epsilon_slack.unwrap_or(0.2),
        }),
        "maxop-sharpness" => Box::new(MaxopSharpness),
        "maxop-pnorm" => Box::new(MaxopPnorm { p: cfg.p }),
        "kakeya-set-dim" => Box::new(SetDim),
        other => return Err(Error::UnknownScenario(other.to_string())),
    })
}

struct TubeVolume;

impl Measure for TubeVolume {
    /// Hit-or-miss volume of `T_δ(0, e1)` in the Korányi-padded bounding box
    /// of its core.
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let e = Direction::new(0.0);
        let tube = Tube::new(HPoint::identity(), e, delta)?;
        let region = SegmentSet::new(HPoint::identity(), e).bounds().koranyi_padded(delta);
        let v = mc_volume(|x| tube_contains(&tube, x), &region, VOLUME_SAMPLES, stream)?;
        Ok(record(delta, v.estimate, 1, vec![v.stderr]))
    }
}

struct BallVolume;

impl Measure for BallVolume {
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let r4 = delta.powi(4);
        let v = mc_volume(|x| koranyi_norm4(x) <= r4, &ball_box(delta), VOLUME_SAMPLES, stream)?;
        Ok(record(delta, v.estimate, 1, vec![v.stderr]))
    }
}

#[derive(Clone, Copy)]
enum FamilyKind {
    Random,
    Bush,
    Disjoint,
}

struct Overlap {
    kind: FamilyKind,
    refine: f64,
    budget: u64,
    /// report `‖Σ χ_T‖_{3/2}` instead of `∫ (Σ χ_T)^{3/2} / card`
    norm_only: bool,
    bush_floor: bool,
    seed: u64,
}

impl Overlap {
    fn family(&self, delta: f64) -> Result<TubeFamily<f64>> {
        match self.kind {
            // the family is keyed by the run seed and δ
            FamilyKind::Random => family_random(
                delta,
                0.5,
                crate::sampling::stream_key(&[self.seed, delta.to_bits()]),
                DirectionRange::Full,
            ),
            FamilyKind::Bush => family_bush(delta),
            FamilyKind::Disjoint => family_disjoint(delta, DISJOINT_GAP),
        }
    }
}

impl Measure for Overlap {
    fn at(&self, delta: f64, _stream: u64) -> Result<Record> {
        let fam = self.family(delta)?;
        let st = overlap_lp(&fam, spacing_for(delta, self.refine), &[1.5, 1.0], self.budget)?;
        let i32_ = st.integral(1.5).expect("requested exponent");
        let i1 = st.integral(1.0).expect("requested exponent");
        let card = fam.len() as u64;
        if self.norm_only {
            let floor = 0.1 * delta.powi(-2) * delta.powf(8.0 / 3.0);
            return Ok(record(delta, i32_.powf(2.0 / 3.0), card, vec![floor, i32_]));
        }
        Ok(record(
            delta,
            i32_ / card as f64,
            card,
            vec![i32_, i1, st.max_count as f64, st.hit_cells as f64],
        ))
    }

    fn checks(&self, records: &[Record], _cfg: &ExperimentConfig) -> Vec<Check> {
        if self.norm_only {
            records
                .iter()
                .map(|r| Check::at_least(format!("bush-norm-floor@{}", r.delta), r.value, r.extra[0]))
                .collect()
        } else if self.bush_floor {
            // every bush tube contains B(0, δ), where the multiplicity is
            // card, so ∫ (Σ χ)^{3/2} / card ≥ card^{1/2} |B(0, δ)| ≳ δ³
            records
                .iter()
                .map(|r| Check::at_least(format!("bush-floor@{}", r.delta), r.value, 0.1 * r.delta.powi(3)))
                .collect()
        } else {
            Vec::new()
        }
    }
}

struct Incidence {
    refine: usize,
    eps: f64,
}

impl Measure for Incidence {
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let fam = family_random_coeffs(delta, 1.0, stream)?;
        let nb = fam.nbhds(0.0, 1.0, delta)?;
        let grid_n = grid_n_for(delta, self.refine);
        let integral = incidence_integral(&nb, 1.5, grid_n)?;
        let nc = check_nonconcentration(&fam, delta, self.eps, NONCONCENTRATION_BALLS, stream)?;
        let card = fam.len() as u64;
        Ok(record(
            delta,
            integral / card as f64,
            card,
            vec![integral, grid_n as f64, nc.max_ratio],
        ))
    }

    fn checks(&self, records: &[Record], _cfg: &ExperimentConfig) -> Vec<Check> {
        records
            .iter()
            .map(|r| Check::at_most(format!("nonconcentration@{}", r.delta), r.extra[2], 2.5))
            .collect()
    }
}

struct MaxopSharpness;

impl Measure for MaxopSharpness {
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let f = BallIndicator::new(HPoint::identity(), delta, stream)?;
        let m = maxfun(&f, delta, &MaxOpOptions::default())?;
        let num = m.lp_norm(3.0);
        let den = f.lp_norm(3.0);
        Ok(record(delta, num / den, 1, vec![num, den, m.net.len() as f64]))
    }
}

struct MaxopPnorm {
    p: f64,
}

impl Measure for MaxopPnorm {
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let suite = probe_suite(delta, stream)?;
        let ps = [self.p, 64.0, f64::INFINITY];
        let rep = operator_norm_probe_multi(delta, &ps, &suite, &MaxOpOptions::default())?;
        let mut extra: Vec<f64> = rep.entries.iter().map(|e| e.ratios[0].1).collect();
        extra.push(rep.max_ratio(64.0));
        extra.push(rep.max_ratio(f64::INFINITY));
        Ok(record(delta, rep.max_ratio(self.p), suite.len() as u64, extra))
    }

    fn checks(&self, records: &[Record], _cfg: &ExperimentConfig) -> Vec<Check> {
        records
            .iter()
            .map(|r| Check::at_most(format!("sup-ratio@{}", r.delta), r.extra[5], 1.05))
            .collect()
    }
}

struct SetDim;

impl Measure for SetDim {
    fn at(&self, delta: f64, stream: u64) -> Result<Record> {
        let disk = HorizontalDisk { radius: 0.5 };
        let v = koranyi_neighborhood_volume(&disk, delta, VOLUME_SAMPLES, stream)?;
        Ok(record(delta, v.estimate, 1, vec![v.stderr, v.lower, v.upper]))
    }
}
