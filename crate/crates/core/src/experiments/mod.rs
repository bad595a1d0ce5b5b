//! Named, seeded end-to-end experiments: each scenario measures one quantity
//! over a list of scales δ, fits a power law and evaluates a registered
//! criterion on the fit (and, for some scenarios, on per-scale checks).
//!
//! Outputs are a per-δ CSV and a JSON summary. Both are byte-identical for
//! a fixed configuration regardless of the number of worker threads: every
//! random stream is keyed by `(seed, scenario, δ)` and every parallel
//! reduction is collected in a fixed order. Wall-clock runtimes are kept in
//! memory only.

mod scenarios;
pub mod verify;

use crate::error::{Error, Result};
use crate::grid::fit::{fit_powerlaw, ScalingFit};
use crate::sampling::{str_key, stream_key};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use verify::{check_group_laws, verify_suite};

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// strictly decreasing, all in (0, 1)
    pub delta_list: Vec<f64>,
    pub seed: u64,
    /// grid refinement factor (1 = coarsest admissible grid)
    pub grid_refinement: u32,
    /// directory receiving `<scenario>.csv` and `<scenario>.json`
    pub output_path: Option<PathBuf>,
    /// one-sided slack on exponents of upper-bound scenarios; `None` uses
    /// the scenario default
    pub epsilon_slack: Option<f64>,
    /// Lebesgue exponent of `maxop-pnorm`
    pub p: f64,
    /// cap on grid cells touched by rasterizing scenarios
    pub cell_budget: u64,
}

impl ExperimentConfig {
    /// Defaults of the registered scenario.
    pub fn new(scenario: &str) -> Result<Self> {
        let s = scenario_by_name(scenario)?;
        Ok(Self {
            scenario: s.name.to_string(),
            delta_list: dyadic_range(s.default_deltas.0, s.default_deltas.1),
            seed: 1,
            grid_refinement: 1,
            output_path: None,
            epsilon_slack: None,
            p: 6.0,
            cell_budget: crate::grid::raster::DEFAULT_CELL_BUDGET,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let s = scenario_by_name(&self.scenario)?;
        if s.fits {
            if self.delta_list.len() < 3 {
                return Err(Error::Config(format!(
                    "{} needs at least 3 deltas for a slope fit",
                    s.name
                )));
            }
            for &d in &self.delta_list {
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::Config(format!("delta {d} outside (0, 1)")));
                }
                if d < s.finest_delta() * (1.0 - 1e-12) {
                    return Err(Error::Config(format!(
                        "delta {d} finer than the validated range of {} (smallest 2^-{})",
                        s.name, s.finest_exp
                    )));
                }
            }
            if self.delta_list.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(Error::Config("deltas must be strictly decreasing".into()));
            }
        }
        if self.grid_refinement == 0 {
            return Err(Error::Config("grid refinement must be at least 1".into()));
        }
        if let Some(e) = self.epsilon_slack {
            if !(e >= 0.0 && e < 1.0) {
                return Err(Error::Config(format!("epsilon slack {e} outside [0, 1)")));
            }
        }
        if s.name == "maxop-pnorm" && !(self.p >= 3.0) {
            return Err(Error::Config(format!("maxop-pnorm needs p >= 3, got {}", self.p)));
        }
        Ok(())
    }

    fn slack(&self, s: &ScenarioInfo) -> f64 {
        self.epsilon_slack.unwrap_or(s.default_slack)
    }

    /// Random stream for the point at scale δ.
    fn stream(&self, delta: f64) -> u64 {
        stream_key(&[self.seed, str_key(&self.scenario), delta.to_bits()])
    }
}

/// `[2^-a, 2^-(a+1), …, 2^-b]`.
pub fn dyadic_range(a: i32, b: i32) -> Vec<f64> {
    (a..=b).map(|k| 2f64.powi(-k)).collect()
}

/// Parses a δ list: comma-separated items, each a number, `2^-k`, or a
/// dyadic range `2^-a..2^-b`.
pub fn parse_deltas(text: &str) -> Result<Vec<f64>> {
    fn dyadic(t: &str) -> Option<i32> {
        t.trim().strip_prefix("2^-")?.trim().parse().ok()
    }
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            match (dyadic(a), dyadic(b)) {
                (Some(a), Some(b)) if a <= b => out.extend(dyadic_range(a, b)),
                _ => return Err(Error::Parse(format!("bad delta range `{item}`"))),
            }
        } else if let Some(k) = dyadic(item) {
            out.push(2f64.powi(-k));
        } else {
            out.push(
                item.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad delta `{item}`")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty delta list".into()));
    }
    Ok(out)
}

/// Settings read from a flat `key = value` file. Blank lines and lines
/// starting with `#` are ignored; keys are `scenario`, `deltas`, `seed`,
/// `refine`, `out`, `epsilon_slack`, `threads`, `p` and `cell_budget`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub deltas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub refine: Option<u32>,
    pub out: Option<PathBuf>,
    pub epsilon_slack: Option<f64>,
    pub threads: Option<usize>,
    pub p: Option<f64>,
    pub cell_budget: Option<u64>,
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self> {
        fn num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parse(format!("line {line}: bad value `{v}` for {key}")))
        }
        let mut o = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = i + 1;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {n}: expected key = value")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "scenario" => o.scenario = Some(v.to_string()),
                "deltas" => o.deltas = Some(parse_deltas(v)?),
                "seed" => o.seed = Some(num(k, v, n)?),
                "refine" => o.refine = Some(num(k, v, n)?),
                "out" => o.out = Some(PathBuf::from(v)),
                "epsilon_slack" => o.epsilon_slack = Some(num(k, v, n)?),
                "threads" => o.threads = Some(num(k, v, n)?),
                "p" => o.p = Some(num(k, v, n)?),
                "cell_budget" => o.cell_budget = Some(num(k, v, n)?),
                _ => return Err(Error::Parse(format!("line {n}: unknown key `{k}`"))),
            }
        }
        Ok(o)
    }

    /// Applies every set field except `scenario` and `threads`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.deltas {
            cfg.delta_list = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.refine {
            cfg.grid_refinement = r;
        }
        if let Some(o) = &self.out {
            cfg.output_path = Some(o.clone());
        }
        if let Some(e) = self.epsilon_slack {
            cfg.epsilon_slack = Some(e);
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(b) = self.cell_budget {
            cfg.cell_budget = b;
        }
    }
}

/// The pass condition on a fitted slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Criterion {
    SlopeWithin {
        lo: f64,
        hi: f64,
        min_r_squared: Option<f64>,
    },
    SlopeAtLeast {
        lo: f64,
    },
    /// only the per-scale checks decide
    ChecksOnly,
}

impl Criterion {
    pub fn holds(&self, fit: Option<&ScalingFit>) -> bool {
        match (self, fit) {
            (Criterion::ChecksOnly, _) => true,
            (
                Criterion::SlopeWithin {
                    lo,
                    hi,
                    min_r_squared,
                },
                Some(f),
            ) => f.slope >= *lo && f.slope <= *hi && min_r_squared.is_none_or(|r| f.r_squared >= r),
            (Criterion::SlopeAtLeast { lo }, Some(f)) => f.slope >= *lo,
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Criterion::SlopeWithin {
                lo,
                hi,
                min_r_squared: None,
            } => format!("slope in [{lo:.4}, {hi:.4}]"),
            Criterion::SlopeWithin {
                lo,
                hi,
                min_r_squared: Some(r),
            } => format!("slope in [{lo:.4}, {hi:.4}] and R^2 >= {r}"),
            Criterion::SlopeAtLeast { lo } => format!("slope >= {lo:.4}"),
            Criterion::ChecksOnly => "all checks hold".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// A scalar measured against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtLeast,
            bound,
        }
    }

    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.value <= self.bound,
            Relation::AtLeast => self.value >= self.bound,
        }
    }
}

/// Measurement at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub delta: f64,
    pub value: f64,
    pub card: u64,
    /// scenario-specific columns, in the order of the scenario's schema
    pub extra: Vec<f64>,
    /// wall-clock seconds (not serialized, so outputs stay reproducible)
    #[serde(skip)]
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: String,
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub fit: Option<ScalingFit>,
    pub criterion: Criterion,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub citations: Vec<String>,
    /// rows of the CSV written for scenarios without per-δ records
    pub table: Option<Table>,
}

impl ExperimentResult {
    /// The pass flag recomputed from the stored fit and checks.
    pub fn recompute_pass(&self) -> bool {
        self.criterion.holds(self.fit.as_ref()) && self.checks.iter().all(Check::holds)
    }

    pub fn csv(&self) -> String {
        if let Some(t) = &self.table {
            return t.to_csv();
        }
        let info = scenario_by_name(&self.scenario).expect("registered scenario");
        let mut out = String::from("delta,value,card");
        for c in info.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{:.16e},{:.16e},{}", r.delta, r.value, r.card);
            for v in &r.extra {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// `{scenario, fit, pass, citations, criterion, checks, config}`.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            scenario: &'a str,
            fit: &'a Option<ScalingFit>,
            pass: bool,
            citations: &'a [String],
            criterion: &'a Criterion,
            criterion_text: String,
            checks: &'a [Check],
            config: &'a ExperimentConfig,
        }
        let s = Summary {
            scenario: &self.scenario,
            fit: &self.fit,
            pass: self.pass,
            citations: &self.citations,
            criterion: &self.criterion,
            criterion_text: self.criterion.describe(),
            checks: &self.checks,
            config: &self.config,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }

    /// Writes `<scenario>.csv` and `<scenario>.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.scenario)), self.csv())?;
        let mut json = self.summary_json();
        json.push('\n');
        std::fs::write(dir.join(format!("{}.json", self.scenario)), json)?;
        Ok(())
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Registry entry of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub measurement: &'static str,
    /// criterion with the default slack
    pub criterion: &'static str,
    /// the claim the scenario tests
    pub citation: &'static str,
    /// default δ = 2^-a..2^-b
    pub default_deltas: (i32, i32),
    /// finest admissible δ = 2^-finest_exp
    pub finest_exp: i32,
    pub default_slack: f64,
    /// whether the scenario fits a power law over δ
    pub fits: bool,
    /// CSV columns after `delta,value,card`
    pub columns: &'static [&'static str],
}

impl ScenarioInfo {
    fn finest_delta(&self) -> f64 {
        2f64.powi(-self.finest_exp)
    }
}

const REGISTRY: [ScenarioInfo; 11] = [
    ScenarioInfo {
        name: "tube-volume",
        measurement: "Monte Carlo volume of T_delta(0, e)",
        criterion: "slope in [2.85, 3.15] and R^2 >= 0.995",
        citation: "tube volume comparable to delta^3",
        default_deltas: (3, 7),
        finest_exp: 9,
        default_slack: 0.0,
        fits: true,
        columns: &["stderr"],
    },
    ScenarioInfo {
        name: "ball-volume",
        measurement: "Monte Carlo volume of the Koranyi ball B(0, delta)",
        criterion: "slope in [3.9, 4.1]",
        citation: "homogeneity of the Koranyi gauge: |B(0, r)| = kappa r^4",
        default_deltas: (3, 7),
        finest_exp: 12,
        default_slack: 0.0,
        fits: true,
        columns: &["stderr"],
    },
    ScenarioInfo {
        name: "kakeya-overlap-random",
        measurement: "integral of (sum chi_T)^(3/2) / card for one random tube per delta^2-net direction",
        criterion: "slope >= 3 - slack (default slack 0.3)",
        citation: "L^(3/2) overlap bound: integral <= C_eps delta^(3-eps) card for delta^2-separated tubes",
        default_deltas: (3, 6),
        finest_exp: 7,
        default_slack: 0.3,
        fits: true,
        columns: &["integral", "integral_p1", "max_count", "hit_cells"],
    },
    ScenarioInfo {
        name: "kakeya-overlap-bush",
        measurement: "integral of (sum chi_T)^(3/2) / card for the bush of tubes through the origin",
        criterion: "slope >= 3 - slack (default slack 0.3) and value >= 0.1 delta^3 at every delta",
        citation: "L^(3/2) overlap bound and its near-extremal bush configuration",
        default_deltas: (3, 6),
        finest_exp: 7,
        default_slack: 0.3,
        fits: true,
        columns: &["integral", "integral_p1", "max_count", "hit_cells"],
    },
    ScenarioInfo {
        name: "kakeya-overlap-disjoint",
        measurement: "integral of (sum chi_T)^(3/2) / card for bush tubes translated vertically apart",
        criterion: "slope in [2.85, 3.15]",
        citation: "disjoint supports: the overlap bound reduces to the triangle inequality",
        default_deltas: (3, 6),
        finest_exp: 7,
        default_slack: 0.0,
        fits: true,
        columns: &["integral", "integral_p1", "max_count", "hit_cells"],
    },
    ScenarioInfo {
        name: "parabola-incidence",
        measurement: "integral over [0,1]^2 of (sum chi)^(3/2) / card for a-separated parabola-arc neighbourhoods",
        criterion: "slope >= 1 - slack (default slack 0.2) and non-concentration max ratio <= 2.5",
        citation: "planar parabola incidence bound: integral <= C_eps delta^(1-eps) card",
        default_deltas: (4, 9),
        finest_exp: 10,
        default_slack: 0.2,
        fits: true,
        columns: &["integral", "grid_n", "nonconcentration_max_ratio"],
    },
    ScenarioInfo {
        name: "sharpness-bush-lower",
        measurement: "L^(3/2) norm of sum chi_T for the bush",
        criterion: "norm >= 0.1 delta^-2 delta^(8/3) at every delta",
        citation: "lower bound for the bush: norm_p' >= c delta^-2 delta^(4/p')",
        default_deltas: (3, 6),
        finest_exp: 7,
        default_slack: 0.0,
        fits: true,
        columns: &["floor", "integral"],
    },
    ScenarioInfo {
        name: "maxop-sharpness",
        measurement: "norm_3 of M_delta chi_B(0,delta) over norm_3 of chi_B(0,delta)",
        criterion: "slope in [-1/3 - 0.1, -1/3 + 0.1]",
        citation: "sharpness of the delta^(-1/3) loss in the L^3 maximal bound",
        default_deltas: (3, 6),
        finest_exp: 7,
        default_slack: 0.0,
        fits: true,
        columns: &["maxfun_norm", "f_norm", "directions"],
    },
    ScenarioInfo {
        name: "maxop-pnorm",
        measurement: "largest norm_p(M_delta f) / norm_p(f) over a ball, a tube, four balls and a disk neighbourhood",
        criterion: "slope >= -1/p - slack (default slack 0.15) and sup-ratio <= 1.05 at every delta",
        citation: "L^p maximal bound with loss delta^(-1/p-eps) for p >= 3",
        default_deltas: (3, 5),
        finest_exp: 6,
        default_slack: 0.15,
        fits: true,
        columns: &["ratio_ball", "ratio_tube", "ratio_balls4", "ratio_disk", "ratio_p64", "ratio_inf"],
    },
    ScenarioInfo {
        name: "kakeya-set-dim",
        measurement: "volume of the Koranyi delta-neighbourhood of the horizontal disk of radius 1/2",
        criterion: "slope in [0.8, 1.2] (Minkowski dimension 4 - slope = 3 +- 0.2)",
        citation: "Kakeya sets have |E^delta| >= c_eps delta^(1+eps); the horizontal disk attains dimension 3",
        default_deltas: (4, 8),
        finest_exp: 10,
        default_slack: 0.0,
        fits: true,
        columns: &["stderr", "lower", "upper"],
    },
    ScenarioInfo {
        name: "verify-suite",
        measurement: "group laws, segment and tube projection, fiber length, Fubini identity, tube inclusion, inclusion witness, non-concentration",
        criterion: "zero violations in every check",
        citation: "lemma-level identities and inequalities behind the overlap and maximal bounds",
        default_deltas: (4, 6),
        finest_exp: 10,
        default_slack: 0.0,
        fits: false,
        columns: &[],
    },
];

/// All registered scenarios.
pub fn list_scenarios() -> Vec<ScenarioInfo> {
    REGISTRY.to_vec()
}

pub fn scenario_by_name(name: &str) -> Result<&'static ScenarioInfo> {
    REGISTRY
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Human-readable registry listing.
pub fn registry_listing() -> String {
    let mut out = String::new();
    for s in REGISTRY.iter() {
        let _ = writeln!(out, "{}", s.name);
        let _ = writeln!(out, "  measures:  {}", s.measurement);
        let _ = writeln!(out, "  criterion: {}", s.criterion);
        let _ = writeln!(out, "  claim:     {}", s.citation);
        if s.fits {
            let _ = writeln!(
                out,
                "  deltas:    2^-{}..2^-{} (finest allowed 2^-{})",
                s.default_deltas.0, s.default_deltas.1, s.finest_exp
            );
        }
    }
    out
}

/// CSV schema of every scenario, one line each.
pub fn csv_schemas() -> String {
    let mut out = String::new();
    for s in REGISTRY.iter() {
        if s.fits {
            let mut cols = String::from("delta,value,card");
            for c in s.columns {
                cols.push(',');
                cols.push_str(c);
            }
            let _ = writeln!(out, "  {}: {}", s.name, cols);
        } else {
            let _ = writeln!(out, "  {}: {}", s.name, verify::TABLE_HEADER.join(","));
        }
    }
    out
}

fn criterion_for(info: &ScenarioInfo, cfg: &ExperimentConfig) -> Criterion {
    let slack = cfg.slack(info);
    match info.name {
        "tube-volume" => Criterion::SlopeWithin {
            lo: 2.85,
            hi: 3.15,
            min_r_squared: Some(0.995),
        },
        "ball-volume" => Criterion::SlopeWithin {
            lo: 3.9,
            hi: 4.1,
            min_r_squared: None,
        },
        "kakeya-overlap-random" | "kakeya-overlap-bush" => Criterion::SlopeAtLeast { lo: 3.0 - slack },
        "kakeya-overlap-disjoint" => Criterion::SlopeWithin {
            lo: 2.85,
            hi: 3.15,
            min_r_squared: None,
        },
        "parabola-incidence" => Criterion::SlopeAtLeast { lo: 1.0 - slack },
        "maxop-sharpness" => Criterion::SlopeWithin {
            lo: -1.0 / 3.0 - 0.1,
            hi: -1.0 / 3.0 + 0.1,
            min_r_squared: None,
        },
        "maxop-pnorm" => Criterion::SlopeAtLeast {
            lo: -1.0 / cfg.p - slack,
        },
        "kakeya-set-dim" => Criterion::SlopeWithin {
            lo: 0.8,
            hi: 1.2,
            min_r_squared: None,
        },
        _ => Criterion::ChecksOnly,
    }
}

/// Runs a scenario and, when `output_path` is set, writes its outputs.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let info = scenario_by_name(&config.scenario)?;
    let criterion = criterion_for(info, config);
    let mut result = ExperimentResult {
        scenario: info.name.to_string(),
        config: config.clone(),
        records: Vec::new(),
        fit: None,
        criterion,
        checks: Vec::new(),
        pass: false,
        citations: vec![info.citation.to_string()],
        table: None,
    };
    if info.name == "verify-suite" {
        let (checks, table) = verify_suite(config.seed)?;
        result.checks = checks;
        result.table = Some(table);
    } else {
        let measure = scenarios::prepare(info.name, config)?;
        let records: Vec<Record> = config
            .delta_list
            .par_iter()
            .map(|&d| {
                let t = Instant::now();
                let mut r = measure.at(d, config.stream(d))?;
                r.runtime = t.elapsed().as_secs_f64();
                Ok(r)
            })
            .collect::<Result<_>>()?;
        let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.delta, r.value)).collect();
        result.fit = Some(fit_powerlaw(&pts)?);
        result.checks = measure.checks(&records, config);
        result.records = records;
    }
    result.pass = result.recompute_pass();
    if let Some(dir) = &config.output_path {
        result.write_outputs(dir)?;
    }
    Ok(result)
}
