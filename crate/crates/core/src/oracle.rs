//! Synthetic data and Monte-Carlo / exhaustive verification of the bounds.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{anonymize_t_close, verify_quotas, ConstructError};
use crate::distance::{DensityGrid, ExtendedDistance};
use crate::dpbridge::{anonymize_dp, DpError};
use crate::model::{AttributeSchema, Bounds, Kind, Microdata, Role, Value};
use crate::tcheck::{check_stochastic_t_closeness, check_t_closeness, CheckError};

/// Relative slack on grid-measured stochastic distances.
pub const GRID_SLACK: f64 = 0.02;
/// Relative tolerance on exact and analytic checks.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Record pairs sampled for the per-record density-ratio check.
pub const SAMPLED_PAIRS: usize = 64;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
    #[error("bad sweep config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("{0}")]
    Distance(#[from] crate::distance::DistanceError),
    #[error("{0}")]
    Model(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::model::ModelError> for OracleError {
    fn from(e: crate::model::ModelError) -> Self {
        OracleError::Model(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfShape {
    #[default]
    Uniform,
    /// `u^exponent` for uniform `u`, rescaled to the value range; `exponent > 1` piles
    /// mass near the lower end.
    Skewed { exponent: f64 },
    /// 45% uniform on the lowest fifth of the range, 45% on the highest fifth, 10%
    /// uniform over the whole range.
    Bimodal,
}

impl ConfShape {
    /// Draw a value in `[0, 1)`.
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        match *self {
            ConfShape::Uniform => u,
            ConfShape::Skewed { exponent } => u.powf(exponent),
            ConfShape::Bimodal => {
                let pick: f64 = rng.gen();
                if pick < 0.45 {
                    0.2 * u
                } else if pick < 0.9 {
                    0.8 + 0.2 * u
                } else {
                    u
                }
            }
        }
    }

    /// Cumulative distribution on `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            ConfShape::Uniform => x,
            ConfShape::Skewed { exponent } => x.powf(1.0 / exponent),
            ConfShape::Bimodal => 0.45 * (x / 0.2).min(1.0) + 0.45 * ((x - 0.8) / 0.2).clamp(0.0, 1.0) + 0.1 * x,
        }
    }
}

/// A synthetic table: one categorical quasi-identifier `group` inducing the classes of
/// `group_sizes`, and one bounded numeric confidential column `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub group_sizes: Vec<usize>,
    #[serde(default)]
    pub shape: ConfShape,
    pub value_range: (f64, f64),
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(OracleError::BadSpec("group sizes must be positive".into()));
        }
        let sum: usize = self.group_sizes.iter().sum();
        if sum != self.n {
            return Err(OracleError::BadSpec(format!(
                "group sizes sum to {sum}, not {}",
                self.n
            )));
        }
        let (lo, hi) = self.value_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(OracleError::BadSpec(format!("empty value range [{lo}, {hi}]")));
        }
        if let ConfShape::Skewed { exponent } = self.shape {
            if !(exponent > 0.0) || !exponent.is_finite() {
                return Err(OracleError::BadSpec(format!("skew exponent {exponent}")));
            }
        }
        Ok(())
    }
}

pub fn random_dataset(spec: &SyntheticSpec) -> Result<Microdata, OracleError> {
    spec.validate()?;
    let (lo, hi) = spec.value_range;
    let width = format!("{}", spec.group_sizes.len()).len();
    let schema = vec![
        AttributeSchema::new("group", Role::QuasiIdentifier, Kind::Categorical),
        AttributeSchema::new("value", Role::Confidential, Kind::Numeric).with_bounds(Bounds::new(lo, hi)?),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n);
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        for _ in 0..size {
            let x = (lo + (hi - lo) * spec.shape.draw(&mut rng)).clamp(lo, hi);
            records.push(vec![Value::Text(format!("G{:0width$}", g + 1)), Value::Number(x)]);
        }
    }
    Ok(Microdata::new(schema, records)?)
}

/// An additional check folded into a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryCheck {
    pub name: String,
    pub worst_observed: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub claim: String,
    pub case: String,
    pub trials: usize,
    pub worst_observed: ExtendedDistance,
    pub bound: f64,
    pub tolerance: f64,
    /// `bound - worst_observed`; absent when the worst distance is infinite.
    pub margin: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secondary: Option<SecondaryCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

impl VerificationReport {
    fn new(claim: &str, case: String, trials: usize, worst: ExtendedDistance, bound: f64, tolerance: f64) -> Self {
        Self {
            claim: claim.to_string(),
            case,
            trials,
            worst_observed: worst,
            bound,
            tolerance,
            margin: worst.value().map(|w| bound - w),
            passed: worst.within(bound * (1.0 + tolerance)),
            secondary: None,
            runtime_secs: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Release `spec` through the k-anonymity + Laplace pipeline (k = smallest group) and
/// compare the grid-measured stochastic distance against the release's certificate.
/// Also checks, for sampled record pairs, that the two output densities stay within a
/// factor `e^ε` of each other at every grid point.
pub fn verify_dp_to_t(
    spec: &SyntheticSpec,
    epsilon: f64,
    grid_resolution: usize,
) -> Result<VerificationReport, OracleError> {
    let data = random_dataset(spec)?;
    let k = *spec.group_sizes.iter().min().expect("validated");
    let release = anonymize_dp(&data, k, epsilon, spec.seed)?;
    let view = release.stochastic_view(&data)?;
    let mech = release.mechanism_spec("value").expect("value column is perturbed");
    let report = check_stochastic_t_closeness(&view, &mech, release.certificate.t, grid_resolution)?;

    let values = data.numeric_column(1).expect("numeric");
    let grid = DensityGrid::for_laplace(&values, mech.scale, grid_resolution)?;
    let laplace = &release.mechanisms[0].mechanism;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut worst_pair = 1.0f64;
    for _ in 0..SAMPLED_PAIRS {
        let (ci, cj) = (
            values[rng.gen_range(0..values.len())],
            values[rng.gen_range(0..values.len())],
        );
        for &x in grid.points() {
            let (pi, pj) = (laplace.density(ci, x), laplace.density(cj, x));
            worst_pair = worst_pair.max(pi / pj).max(pj / pi);
        }
    }
    let pair_bound = laplace.epsilon.exp();

    let case = format!(
        "n={} layout={:?} shape={:?} eps={epsilon}",
        spec.n, spec.group_sizes, spec.shape
    );
    let mut out = VerificationReport::new("dp_to_t", case, 1, report.achieved_t, release.certificate.t, GRID_SLACK);
    let pair_passed = worst_pair <= pair_bound * (1.0 + EXACT_TOLERANCE);
    out.passed &= pair_passed;
    out.secondary = Some(SecondaryCheck {
        name: "per_record_ratio".into(),
        worst_observed: worst_pair,
        bound: pair_bound,
        passed: pair_passed,
    });
    Ok(out)
}

/// Random table for the constructor: numeric `age` quasi-identifier and numeric
/// confidential `value`.
pub fn construction_dataset(n: usize, seed: u64) -> Result<Microdata, OracleError> {
    let schema = vec![
        AttributeSchema::new("age", Role::QuasiIdentifier, Kind::Numeric),
        AttributeSchema::new("value", Role::Confidential, Kind::Numeric),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            vec![
                Value::Number(rng.gen_range(18..=90) as f64),
                Value::Number(rng.gen_range(0.0..1000.0f64)),
            ]
        })
        .collect();
    Ok(Microdata::new(schema, records)?)
}

/// Run the bucket construction on `trials` random tables (seeds `seed + trial`) and
/// re-check every release independently: quotas and classic t-closeness at `t`.
pub fn verify_t_construction(
    n: usize,
    t: u32,
    l: usize,
    trials: usize,
    seed: u64,
) -> Result<VerificationReport, OracleError> {
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(ExtendedDistance, bool), OracleError> {
            let data = construction_dataset(n, seed.wrapping_add(trial as u64))?;
            let release = anonymize_t_close(&data, "value", t, l)?;
            let quotas_ok = verify_quotas(&release.partition, &release.buckets, t).is_ok();
            let report = check_t_closeness(&release.data, &["value"], t as f64)?;
            Ok((report.achieved_t, quotas_ok && report.satisfied))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = outcomes
        .iter()
        .map(|o| o.0)
        .fold(ExtendedDistance::ONE, ExtendedDistance::max);
    let failures = outcomes.iter().filter(|o| !o.1).count();
    let case = format!("n={n} t={t} l={l} seed={seed}");
    let mut report = VerificationReport::new("t_construction", case, trials, worst, t as f64, 0.0);
    report.passed &= failures == 0;
    report.secondary = Some(SecondaryCheck {
        name: "failed_trials".into(),
        worst_observed: failures as f64,
        bound: 0.0,
        passed: failures == 0,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpLayout {
    pub name: String,
    pub group_sizes: Vec<usize>,
    #[serde(default)]
    pub shape: ConfShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionRun {
    pub n: usize,
    pub t: u32,
    pub l: usize,
    pub trials: usize,
}

/// The fixed verification matrix, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    pub grid_resolution: usize,
    pub value_range: (f64, f64),
    pub epsilons: Vec<f64>,
    #[serde(default, rename = "layout")]
    pub layouts: Vec<DpLayout>,
    #[serde(default, rename = "construction")]
    pub constructions: Vec<ConstructionRun>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, OracleError> {
        toml::from_str(text).map_err(|e| OracleError::BadConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Run every case of the sweep in a fixed order. Runtimes are recorded only when
/// `with_timing` is set, so that logs are otherwise reproducible byte for byte.
pub fn run_sweep(config: &SweepConfig, with_timing: bool) -> Result<Vec<VerificationReport>, OracleError> {
    let mut reports = Vec::new();
    for layout in &config.layouts {
        let spec = SyntheticSpec {
            n: layout.group_sizes.iter().sum(),
            group_sizes: layout.group_sizes.clone(),
            shape: layout.shape,
            value_range: config.value_range,
            seed: config.seed,
        };
        for &epsilon in &config.epsilons {
            let start = Instant::now();
            let mut report = verify_dp_to_t(&spec, epsilon, config.grid_resolution)?;
            report.case = format!("{} {}", layout.name, report.case);
            if with_timing {
                report.runtime_secs = Some(start.elapsed().as_secs_f64());
            }
            reports.push(report);
        }
    }
    for run in &config.constructions {
        let start = Instant::now();
        let mut report = verify_t_construction(run.n, run.t, run.l, run.trials, config.seed)?;
        if with_timing {
            report.runtime_secs = Some(start.elapsed().as_secs_f64());
        }
        reports.push(report);
    }
    Ok(reports)
}
