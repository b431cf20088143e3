//! Experiment runner: loads a JSON config, validates the regime against
//! the waiting-time model, simulates the ensemble, runs the regime's
//! statistical tests, and writes a CSV of scaled values plus a JSON
//! summary. Exit contract: 0 all tests pass, 1 input error, 2 statistical
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::directions::{DirectionError, DirectionSet, DoeblinKernel, TransitionKernel};
use crate::limits::{
    ballistic_ratio, cycle_sum_oracle, default_projections, diffusive_path, geometric_grid,
    lil_envelope, par_members, stable_scaled, Chain, LilMode, LimitsError, ScaledSample, System,
};
use crate::numeric::{dot, linear_fit, norm2, variance};
use crate::rng::{derive_seed, member_rng};
use crate::stats::{gaussian_fit_test, ks_two_sample, EmpiricalSample, StatsError, TestReport};
use crate::waiting::{norming, WaitingError, WaitingTimeModel};
use crate::walk::{InitialState, WalkError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_STATISTICAL_FAILURE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error(transparent)]
    Waiting(#[from] WaitingError),
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Experiment regime; each selects one scaled statistic and its tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lln,
    Diffusive,
    Stable12,
    StableAlpha2,
    Ballistic,
    Lil,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Lln => "lln",
            Regime::Diffusive => "diffusive",
            Regime::Stable12 => "stable_1_2",
            Regime::StableAlpha2 => "stable_alpha2",
            Regime::Ballistic => "ballistic",
            Regime::Lil => "lil",
        }
    }
}

// the tags use digits and underscores that rename_all cannot produce
impl<'de> serde::de::Deserialize<'de> for RegimeTag {
    fn deserialize<D: serde::de::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let r = match s.as_str() {
            "lln" => Regime::Lln,
            "diffusive" => Regime::Diffusive,
            "stable_1_2" => Regime::Stable12,
            "stable_alpha2" => Regime::StableAlpha2,
            "ballistic" => Regime::Ballistic,
            "lil" => Regime::Lil,
            other => {
                return Err(serde::de::Error::custom(format!(
                    "unknown regime {other:?}; expected one of lln, diffusive, \
                     stable_1_2, stable_alpha2, ballistic, lil"
                )))
            }
        };
        Ok(RegimeTag(r))
    }
}

impl Serialize for RegimeTag {
    fn serialize<S: serde::ser::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.tag())
    }
}

/// Wrapper so the regime round-trips through its on-disk tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeTag(pub Regime);

/// Doeblin-minorized kernel spec: H(x, y) with c_r^-1 psi < H < c_r psi.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoeblinSpec {
    pub base_measure: Vec<f64>,
    pub ratio_bound: f64,
    pub rows: Vec<Vec<f64>>,
}

/// Direction set plus exactly one of a plain kernel or a Doeblin spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionsSpec {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub distinguished: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doeblin: Option<DoeblinSpec>,
}

impl DirectionsSpec {
    pub fn build(&self) -> Result<(DirectionSet, Chain), CliError> {
        let dirs = DirectionSet::new(self.dim, self.vectors.clone(), self.distinguished)?;
        let chain = match (&self.kernel, &self.doeblin) {
            (Some(rows), None) => {
                let kernel = TransitionKernel::new(rows.clone())?;
                if kernel.len() != dirs.len() {
                    return Err(CliError::Invalid(format!(
                        "kernel has {} rows but there are {} directions",
                        kernel.len(),
                        dirs.len()
                    )));
                }
                Chain::Finite(kernel)
            }
            (None, Some(spec)) => {
                let kernel = DoeblinKernel::new(
                    spec.base_measure.clone(),
                    spec.ratio_bound,
                    spec.rows.clone(),
                )?;
                if kernel.len() != dirs.len() {
                    return Err(CliError::Invalid(format!(
                        "doeblin kernel has {} rows but there are {} directions",
                        kernel.len(),
                        dirs.len()
                    )));
                }
                Chain::Doeblin(kernel)
            }
            _ => {
                return Err(CliError::Invalid(
                    "directions require exactly one of \"kernel\" or \"doeblin\"".into(),
                ))
            }
        };
        Ok((dirs, chain))
    }
}

fn default_out_dir() -> String {
    "results".into()
}

fn default_lln_exponent() -> f64 {
    1.5
}

fn default_lil_epsilon() -> f64 {
    0.3
}

/// One experiment: system, regime, ensemble, horizon, master seed, outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub directions: DirectionsSpec,
    pub waiting: WaitingTimeModel,
    pub regime: RegimeTag,
    pub ensemble: usize,
    /// Walk time t, or path length n for the diffusive regime.
    pub horizon: f64,
    /// Master seed; mandatory so every run is reproducible by construction.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Exponent p of the strong-law scale t^(1/p).
    #[serde(default = "default_lln_exponent")]
    pub lln_exponent: f64,
    /// Envelope exponent offset for the heavy iterated-logarithm mode.
    #[serde(default = "default_lil_epsilon")]
    pub lil_epsilon: f64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, String), CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)?;
        let hash = format!("{:x}", Sha256::digest(&bytes));
        Ok((config, hash))
    }

    /// Checks the regime's tail-index precondition and builds the system.
    pub fn build_system(&self) -> Result<System, CliError> {
        if self.ensemble == 0 {
            return Err(CliError::Invalid("ensemble must be at least 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(CliError::Invalid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        self.waiting.validate()?;
        let alpha = self.waiting.tail_index();
        let describe = |a: Option<f64>| match a {
            Some(v) => format!("tail index {v}"),
            None => "a light-tailed family".to_string(),
        };
        match self.regime.0 {
            Regime::Lln => {
                if self.waiting.mean().is_none() {
                    return Err(CliError::Invalid(format!(
                        "regime lln requires a finite mean waiting time, got {}",
                        describe(alpha)
                    )));
                }
                if !(self.lln_exponent >= 1.0) {
                    return Err(CliError::Invalid(format!(
                        "lln exponent p must be >= 1, got {}",
                        self.lln_exponent
                    )));
                }
            }
            Regime::Diffusive => {
                if alpha.is_some() {
                    return Err(CliError::Invalid(format!(
                        "regime diffusive requires a finite-variance family, got {}",
                        describe(alpha)
                    )));
                }
            }
            Regime::Stable12 => match alpha {
                Some(a) if a > 1.0 && a < 2.0 => {}
                _ => {
                    return Err(CliError::Invalid(format!(
                        "regime stable_1_2 requires tail index in (1, 2), got {}",
                        describe(alpha)
                    )))
                }
            },
            Regime::StableAlpha2 => match alpha {
                Some(a) if (a - 2.0).abs() < 1e-12 => {}
                _ => {
                    return Err(CliError::Invalid(format!(
                        "regime stable_alpha2 requires tail index exactly 2, got {}",
                        describe(alpha)
                    )))
                }
            },
            Regime::Ballistic => match alpha {
                Some(a) if a > 0.0 && a < 1.0 => {}
                _ => {
                    return Err(CliError::Invalid(format!(
                        "regime ballistic requires tail index in (0, 1), got {}",
                        describe(alpha)
                    )))
                }
            },
            Regime::Lil => match alpha {
                None => {}
                Some(a) if a > 1.0 && a < 2.0 => {}
                _ => {
                    return Err(CliError::Invalid(format!(
                        "regime lil requires a finite-variance family or tail \
                         index in (1, 2), got {}",
                        describe(alpha)
                    )))
                }
            },
        }
        let (dirs, chain) = self.directions.build()?;
        if dirs.len() < 2 {
            return Err(CliError::Invalid(
                "at least two directions are required".into(),
            ));
        }
        let system = System::new(dirs, chain, self.waiting.clone(), InitialState::Stationary)?;
        if let Some(projections) = &self.projections {
            for (i, x) in projections.iter().enumerate() {
                if x.len() != system.dirs.dim() {
                    return Err(CliError::Invalid(format!(
                        "projection {i} has dimension {}, expected {}",
                        x.len(),
                        system.dirs.dim()
                    )));
                }
                if norm2(x) <= 0.0 {
                    return Err(CliError::Invalid(format!("projection {i} is zero")));
                }
            }
        }
        Ok(system)
    }

    pub fn projection_set(&self, system: &System) -> Vec<Vec<f64>> {
        match &self.projections {
            Some(p) => p.clone(),
            None => default_projections(&system.dirs),
        }
    }
}

/// Quantities derived from the config before any simulation.
#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub b: Option<f64>,
    pub a_t: Option<f64>,
}

impl Derived {
    pub fn compute(system: &System, horizon: f64) -> Self {
        Self {
            pi: system.law.pi.clone(),
            mu: system.law.drift.clone(),
            b: system.cycle_rate().ok(),
            a_t: norming(&system.model, horizon).ok(),
        }
    }
}

/// On-disk summary of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub regime: RegimeTag,
    pub tests: Vec<TestReport>,
    pub derived: Derived,
}

/// One CSV row of scaled output.
struct CsvRow {
    member_id: usize,
    statistic: &'static str,
    t: f64,
    component: String,
    value: f64,
}

struct RegimeOutput {
    tests: Vec<TestReport>,
    rows: Vec<CsvRow>,
}

fn sample_rows(
    sample: &ScaledSample,
    statistic: &'static str,
    times: &[f64],
    projections: &[Vec<f64>],
    rows: &mut Vec<CsvRow>,
) {
    for (member_id, member) in sample.values.iter().enumerate() {
        for (gi, &t) in times.iter().enumerate() {
            for (c, &v) in member[gi].iter().enumerate() {
                rows.push(CsvRow {
                    member_id,
                    statistic,
                    t,
                    component: format!("c{c}"),
                    value: v,
                });
            }
            for (j, x) in projections.iter().enumerate() {
                rows.push(CsvRow {
                    member_id,
                    statistic,
                    t,
                    component: format!("p{j}"),
                    value: dot(&member[gi], x),
                });
            }
        }
    }
}

fn report(
    test: impl Into<String>,
    statistic: f64,
    p_value: f64,
    n1: usize,
    n2: usize,
    level: f64,
    pass: bool,
) -> TestReport {
    TestReport {
        test: test.into(),
        statistic,
        p_value,
        n1,
        n2,
        level,
        pass,
    }
}

// sub-experiment labels for deriving independent seed streams
const ORACLE_STREAM: u64 = 1;
const NEAR_STREAM: u64 = 2;
const FAR_STREAM: u64 = 3;
const LIL_STREAM_BASE: u64 = 1000;

const LLN_TOLERANCE: f64 = 0.02;
const LLN_MAJORITY: f64 = 0.95;
const KS_LEVEL: f64 = 0.01;
const GAUSSIAN_LEVEL: f64 = 0.01;
const VARIANCE_GROWTH_R2: f64 = 0.95;
const BALLISTIC_MIN_VARIANCE: f64 = 0.001;
const ENVELOPE_BAND: (f64, f64) = (0.1, 10.0);
const EPSILON_ORDER_MAJORITY: f64 = 0.9;

fn run_lln(config: &ExperimentConfig, system: &System, seed: u64) -> RegimeOutput {
    let t1 = config.horizon;
    let times: Vec<f64> = (0..7).rev().map(|k| t1 / 2f64.powi(k)).collect();
    let p = config.lln_exponent;
    let mu = system.law.drift.clone();
    let per_member = par_members(config.ensemble, seed, |_, rng| {
        let positions = system.positions_at(&times, rng);
        positions
            .iter()
            .zip(&times)
            .map(|(x, &t)| {
                let err: Vec<f64> = x.iter().zip(&mu).map(|(a, m)| a - m * t).collect();
                let n = norm2(&err);
                (n / t.powf(1.0 / p), n / t)
            })
            .collect::<Vec<(f64, f64)>>()
    });
    let mut rows = Vec::new();
    for (member_id, series) in per_member.iter().enumerate() {
        for (&t, &(scaled, plain)) in times.iter().zip(series) {
            rows.push(CsvRow {
                member_id,
                statistic: "lln_scaled",
                t,
                component: "norm".into(),
                value: scaled,
            });
            rows.push(CsvRow {
                member_id,
                statistic: "lln_plain",
                t,
                component: "norm".into(),
                value: plain,
            });
        }
    }
    let last = times.len() - 1;
    let within = per_member
        .iter()
        .filter(|s| s[last].1 < LLN_TOLERANCE)
        .count();
    let share = within as f64 / config.ensemble as f64;
    let mut tests = vec![report(
        "lln_concentration",
        share,
        share,
        config.ensemble,
        0,
        LLN_MAJORITY,
        share >= LLN_MAJORITY,
    )];
    // median of the t^(1/p)-scaled error must shrink across the doubling grid
    let median_at = |gi: usize| {
        let mut v: Vec<f64> = per_member.iter().map(|s| s[gi].0).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let (m0, m1) = (median_at(0), median_at(last));
    tests.push(report(
        "lln_scaled_trend",
        m1 / m0,
        if m0 > 0.0 { m1 / m0 } else { 0.0 },
        config.ensemble,
        0,
        1.0,
        m1 < m0,
    ));
    RegimeOutput { tests, rows }
}

fn run_diffusive(
    config: &ExperimentConfig,
    system: &System,
    seed: u64,
    projections: &[Vec<f64>],
) -> Result<RegimeOutput, CliError> {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sample = diffusive_path(system, config.ensemble, config.horizon, &grid, seed);
    let mut rows = Vec::new();
    sample_rows(&sample, "diffusive_path", &grid, projections, &mut rows);
    let mut tests = Vec::new();
    let last = grid.len() - 1;
    for (j, x) in projections.iter().enumerate() {
        let values = sample.project(last, x);
        let fit = gaussian_fit_test(&EmpiricalSample::from_values(values)?, GAUSSIAN_LEVEL)?;
        let mut r = fit.report;
        r.test = format!("gaussian_fit_p{j}");
        tests.push(r);
    }
    // marginal variance of a Brownian-like path grows linearly in t
    let vars: Vec<f64> = (0..grid.len())
        .map(|gi| variance(&sample.project(gi, &projections[0])))
        .collect();
    let (_, _, r2) = linear_fit(&grid, &vars);
    tests.push(report(
        "variance_linear_growth",
        r2,
        r2,
        config.ensemble,
        0,
        VARIANCE_GROWTH_R2,
        r2 > VARIANCE_GROWTH_R2,
    ));
    Ok(RegimeOutput { tests, rows })
}

fn run_stable(
    config: &ExperimentConfig,
    system: &System,
    seed: u64,
    projections: &[Vec<f64>],
) -> Result<RegimeOutput, CliError> {
    let t = config.horizon;
    let sample = stable_scaled(system, config.ensemble, t, seed)?;
    let oracle = cycle_sum_oracle(system, t, config.ensemble, derive_seed(seed, ORACLE_STREAM))?;
    let mut rows = Vec::new();
    sample_rows(&sample, "stable_scaled", &[t], projections, &mut rows);
    for (member_id, v) in oracle.values.iter().enumerate() {
        for (c, &value) in v.iter().enumerate() {
            rows.push(CsvRow {
                member_id,
                statistic: "cycle_sum_oracle",
                t,
                component: format!("c{c}"),
                value,
            });
        }
    }
    let mut tests = Vec::new();
    for (j, x) in projections.iter().enumerate() {
        let walk = EmpiricalSample::from_values(sample.project(0, x))?;
        let orc =
            EmpiricalSample::from_values(oracle.values.iter().map(|v| dot(v, x)).collect())?;
        let mut r = ks_two_sample(&walk, &orc, KS_LEVEL)?;
        r.test = format!("oracle_ks_p{j}");
        tests.push(r);
    }
    Ok(RegimeOutput { tests, rows })
}

fn run_alpha2(
    config: &ExperimentConfig,
    system: &System,
    seed: u64,
    projections: &[Vec<f64>],
) -> Result<RegimeOutput, CliError> {
    let t = config.horizon;
    let sample = stable_scaled(system, config.ensemble, t, seed)?;
    let mut rows = Vec::new();
    sample_rows(&sample, "stable_scaled", &[t], projections, &mut rows);
    let mut tests = Vec::new();
    for (j, x) in projections.iter().enumerate() {
        let values = sample.project(0, x);
        let fit = gaussian_fit_test(&EmpiricalSample::from_values(values)?, GAUSSIAN_LEVEL)?;
        let mut r = fit.report;
        r.test = format!("gaussian_fit_p{j}");
        tests.push(r);
    }
    Ok(RegimeOutput { tests, rows })
}

fn run_ballistic(
    config: &ExperimentConfig,
    system: &System,
    seed: u64,
    projections: &[Vec<f64>],
) -> Result<RegimeOutput, CliError> {
    let t = config.horizon;
    let near = ballistic_ratio(system, config.ensemble, t, derive_seed(seed, NEAR_STREAM))?;
    let far = ballistic_ratio(system, config.ensemble, 4.0 * t, derive_seed(seed, FAR_STREAM))?;
    let mut rows = Vec::new();
    sample_rows(&near, "ballistic_ratio", &[t], projections, &mut rows);
    sample_rows(&far, "ballistic_ratio", &[4.0 * t], projections, &mut rows);
    let mut tests = Vec::new();
    for (j, x) in projections.iter().enumerate() {
        let a = EmpiricalSample::from_values(near.project(0, x))?;
        let b = EmpiricalSample::from_values(far.project(0, x))?;
        let mut r = ks_two_sample(&a, &b, KS_LEVEL)?;
        r.test = format!("scale_stability_p{j}");
        tests.push(r);
        let v = variance(near.project(0, x).as_slice());
        tests.push(report(
            format!("non_degenerate_p{j}"),
            v,
            v,
            config.ensemble,
            0,
            BALLISTIC_MIN_VARIANCE,
            v > BALLISTIC_MIN_VARIANCE,
        ));
    }
    Ok(RegimeOutput { tests, rows })
}

fn run_lil(
    config: &ExperimentConfig,
    system: &System,
    seed: u64,
    projections: &[Vec<f64>],
) -> Result<RegimeOutput, CliError> {
    let grid = geometric_grid(16.0, config.horizon, 4);
    let x = projections[0].clone();
    let heavy = system.model.is_heavy();
    let eps = config.lil_epsilon;
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    if heavy {
        let mut ordered = 0usize;
        for member in 0..config.ensemble {
            let member_seed = derive_seed(seed, LIL_STREAM_BASE + member as u64);
            let plus = lil_envelope(system, &x, LilMode::Heavy { epsilon: eps }, &grid, member_seed)?;
            let minus =
                lil_envelope(system, &x, LilMode::Heavy { epsilon: -eps }, &grid, member_seed)?;
            if plus.sup < minus.sup {
                ordered += 1;
            }
            for (&t, &r) in grid.iter().zip(&plus.ratios) {
                rows.push(CsvRow {
                    member_id: member,
                    statistic: "lil_ratio",
                    t,
                    component: "p0".into(),
                    value: r,
                });
            }
        }
        let share = ordered as f64 / config.ensemble as f64;
        tests.push(report(
            "epsilon_ordering",
            share,
            share,
            config.ensemble,
            0,
            EPSILON_ORDER_MAJORITY,
            share >= EPSILON_ORDER_MAJORITY,
        ));
    } else {
        let mut in_band = 0usize;
        let mut sups = Vec::new();
        for member in 0..config.ensemble {
            let member_seed = derive_seed(seed, LIL_STREAM_BASE + member as u64);
            let env = lil_envelope(system, &x, LilMode::FiniteVariance, &grid, member_seed)?;
            if env.sup > ENVELOPE_BAND.0 && env.sup < ENVELOPE_BAND.1 {
                in_band += 1;
            }
            sups.push(env.sup);
            for (&t, &r) in grid.iter().zip(&env.ratios) {
                rows.push(CsvRow {
                    member_id: member,
                    statistic: "lil_ratio",
                    t,
                    component: "p0".into(),
                    value: r,
                });
            }
        }
        sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sups[sups.len() / 2];
        tests.push(report(
            "envelope_band",
            median,
            in_band as f64 / config.ensemble as f64,
            config.ensemble,
            0,
            1.0,
            in_band == config.ensemble,
        ));
    }
    Ok(RegimeOutput { tests, rows })
}

fn write_outputs(out_dir: &Path, summary: &Summary, rows: &[CsvRow]) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let json = serde_json::to_string_pretty(summary).expect("summary is serializable");
    let summary_path = out_dir.join("summary.json");
    fs::write(&summary_path, json).map_err(|source| CliError::Io {
        path: summary_path,
        source,
    })?;
    let mut csv = String::from("member_id,statistic,t,component,value\n");
    for row in rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            row.member_id, row.statistic, row.t, row.component, row.value
        )
        .expect("string write cannot fail");
    }
    let csv_path = out_dir.join("values.csv");
    fs::write(&csv_path, csv).map_err(|source| CliError::Io {
        path: csv_path,
        source,
    })?;
    Ok(())
}

/// Runs the experiment; returns the exit code on success of the machinery
/// (0 all tests pass, 2 any statistical failure).
pub fn run(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<i32, CliError> {
    let (mut config, config_hash) = ExperimentConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let system = config.build_system()?;
    let projections = config.projection_set(&system);
    let seed = config.seed;
    let output = match config.regime.0 {
        Regime::Lln => run_lln(&config, &system, seed),
        Regime::Diffusive => run_diffusive(&config, &system, seed, &projections)?,
        Regime::Stable12 => run_stable(&config, &system, seed, &projections)?,
        Regime::StableAlpha2 => run_alpha2(&config, &system, seed, &projections)?,
        Regime::Ballistic => run_ballistic(&config, &system, seed, &projections)?,
        Regime::Lil => run_lil(&config, &system, seed, &projections)?,
    };
    let summary = Summary {
        config_hash,
        regime: config.regime,
        tests: output.tests,
        derived: Derived::compute(&system, config.horizon),
    };
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.out_dir));
    write_outputs(&out_dir, &summary, &output.rows)?;
    Ok(if summary.tests.iter().all(|t| t.pass) {
        EXIT_OK
    } else {
        EXIT_STATISTICAL_FAILURE
    })
}

/// Prints the derived quantities (pi, mu, E T, b, a_t) without simulating.
pub fn describe(config_path: &Path, out: &mut impl std::io::Write) -> Result<i32, CliError> {
    let (config, config_hash) = ExperimentConfig::from_path(config_path)?;
    let system = config.build_system()?;
    let derived = Derived::compute(&system, config.horizon);
    let write = |out: &mut dyn std::io::Write| -> std::io::Result<()> {
        writeln!(out, "config_hash = {config_hash}")?;
        writeln!(out, "regime = {}", config.regime.0.tag())?;
        writeln!(out, "ensemble = {}", config.ensemble)?;
        writeln!(out, "horizon = {}", config.horizon)?;
        writeln!(
            out,
            "pi = [{}]",
            derived
                .pi
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        )?;
        writeln!(
            out,
            "mu = [{}]",
            derived
                .mu
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        )?;
        match system.model.mean() {
            Some(m) => writeln!(out, "E T = {m}")?,
            None => writeln!(out, "E T = not finite")?,
        }
        match derived.b {
            Some(b) => writeln!(out, "b = {b}")?,
            None => writeln!(out, "b = undefined (infinite mean)")?,
        }
        match derived.a_t {
            Some(a) => writeln!(out, "a_t = {a}")?,
            None => writeln!(out, "a_t = undefined (light tail)")?,
        }
        Ok(())
    };
    write(out).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    Ok(EXIT_OK)
}

/// Simulates one trajectory and writes (n, direction_index, duration, s_n)
/// to <out>/trajectory.csv.
pub fn dump_trajectory(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<i32, CliError> {
    let (mut config, _) = ExperimentConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let system = config.build_system()?;
    let mut rng = member_rng(config.seed, 0);
    let traj = system.simulate_trajectory(config.horizon, &mut rng)?;
    let mut csv = String::from("n,direction_index,duration,s_n\n");
    for n in 1..=traj.num_events() {
        writeln!(
            csv,
            "{},{},{},{}",
            n,
            traj.direction(n),
            traj.duration(n),
            traj.change_time(n)
        )
        .expect("string write cannot fail");
    }
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.out_dir));
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let path = out_dir.join("trajectory.csv");
    fs::write(&path, csv).map_err(|source| CliError::Io { path, source })?;
    Ok(EXIT_OK)
}
