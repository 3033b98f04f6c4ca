//! Laplace sanitization of confidential attributes and the conversions between
//! ε-differential privacy and t-closeness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{kanon_microaggregate, recode_quasi_identifiers, ConstructError, Partition};
use crate::distance::{empirical_distribution, ratio_distance, ExtendedDistance};
use crate::model::{equivalence_classes, AttributeSchema, Kind, Microdata, ModelError, Value};
use crate::tcheck::{class_distances, CheckError, StochasticMechanismSpec};

/// Relative tolerance for the class-to-class checks.
pub const PAIR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("epsilon = {0} must be positive and finite")]
    BadEpsilon(f64),
    #[error("sensitivity = {0} must be positive and finite")]
    BadSensitivity(f64),
    #[error("t = {0} must be >= 1")]
    BadT(f64),
    #[error("class sizes sum to {sum}, expected N = {n}")]
    SizesMismatch { n: usize, sum: usize },
    #[error("confidential column `{0}` has no bounds")]
    MissingBounds(String),
    #[error("confidential column `{0}` is not numeric")]
    NonNumeric(String),
    #[error("no confidential columns")]
    NoConfidential,
    #[error("class {class_id} is at distance {distance} from the table, above t = {t}")]
    NotTClose {
        class_id: usize,
        distance: ExtendedDistance,
        t: f64,
    },
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("{0}")]
    Model(String),
}

impl From<ModelError> for DpError {
    fn from(e: ModelError) -> Self {
        DpError::Model(e.to_string())
    }
}

/// Laplace noise with scale `sensitivity / epsilon`. Draws are indexed: the noise for
/// a given `(seed, draw_index)` never depends on which other draws were made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceMechanism {
    pub epsilon: f64,
    pub sensitivity: f64,
    pub scale: f64,
    pub seed: u64,
}

impl LaplaceMechanism {
    pub fn new(epsilon: f64, sensitivity: f64, seed: u64) -> Result<Self, DpError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(DpError::BadEpsilon(epsilon));
        }
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(DpError::BadSensitivity(sensitivity));
        }
        Ok(Self {
            epsilon,
            sensitivity,
            scale: sensitivity / epsilon,
            seed,
        })
    }

    /// Zero-mean Laplace noise for draw `draw_index`, by inverse CDF.
    pub fn noise(&self, draw_index: u64) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(draw_index);
        // u uniform on (-1/2, 1/2); the open interval keeps ln away from 0.
        let u: f64 = loop {
            let u = rng.gen::<f64>() - 0.5;
            if u != -0.5 {
                break u;
            }
        };
        -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    pub fn sample(&self, true_value: f64, draw_index: u64) -> f64 {
        true_value + self.noise(draw_index)
    }

    pub fn density(&self, center: f64, x: f64) -> f64 {
        (-(x - center).abs() / self.scale).exp() / (2.0 * self.scale)
    }
}

pub fn laplace_sample(mech: &LaplaceMechanism, true_value: f64, draw_index: u64) -> f64 {
    mech.sample(true_value, draw_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundDirection {
    DpToT,
    TToDp,
}

/// Which coefficient multiplies `e^ε` in the DP-to-t bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientVariant {
    /// `(N - |E|) / |E|`, as derived step by step; gives `t = 1` at `ε = 0`.
    #[default]
    Derived,
    /// `(N - |E| - 1) / |E|`; gives `t < 1` at `ε = 0`. For comparison only.
    Stated,
}

impl CoefficientVariant {
    fn note(&self) -> &'static str {
        match self {
            CoefficientVariant::Derived => "t = max_E (|E|/N) * (1 + ((N - |E|)/|E|) * exp(eps))",
            CoefficientVariant::Stated => {
                "t = max_E (|E|/N) * (1 + ((N - |E| - 1)/|E|) * exp(eps)) [comparison variant]"
            }
        }
    }
}

/// The parameters tying a release to its converted privacy guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub direction: BoundDirection,
    pub epsilon: f64,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub class_sizes: Vec<usize>,
    /// Index into `class_sizes` of the class attaining the maximum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binding_class: Option<usize>,
    pub formula_note: String,
}

impl BoundCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Stochastic t guaranteed by ε-DP confidential attributes over the given classes.
pub fn dp_to_t_bound(n: usize, class_sizes: &[usize], epsilon: f64) -> Result<BoundCertificate, DpError> {
    dp_to_t_bound_with(n, class_sizes, epsilon, CoefficientVariant::Derived)
}

pub fn dp_to_t_bound_with(
    n: usize,
    class_sizes: &[usize],
    epsilon: f64,
    variant: CoefficientVariant,
) -> Result<BoundCertificate, DpError> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(DpError::BadEpsilon(epsilon));
    }
    let sum: usize = class_sizes.iter().sum();
    if sum != n || class_sizes.is_empty() || class_sizes.contains(&0) {
        return Err(DpError::SizesMismatch { n, sum });
    }
    let growth = epsilon.exp();
    // (|E|/N)(1 + c/|E| e^ε) = (|E| + c e^ε) / N; at ε = 0 the derived form is exactly 1.
    let per_class = |e: usize| {
        let others = match variant {
            CoefficientVariant::Derived => (n - e) as f64,
            CoefficientVariant::Stated => (n - e) as f64 - 1.0,
        };
        (e as f64 + others * growth) / n as f64
    };
    let (binding, t) =
        class_sizes
            .iter()
            .map(|&e| per_class(e))
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, t)| if t > best.1 { (i, t) } else { best },
            );
    Ok(BoundCertificate {
        direction: BoundDirection::DpToT,
        epsilon,
        t,
        n: Some(n),
        class_sizes: class_sizes.to_vec(),
        binding_class: Some(binding),
        formula_note: variant.note().to_string(),
    })
}

/// ε-DP of a single individual's view implied by t-closeness: `ε = 2 ln t`.
pub fn t_to_eps(t: f64) -> Result<BoundCertificate, DpError> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(DpError::BadT(t));
    }
    Ok(BoundCertificate {
        direction: BoundDirection::TToDp,
        epsilon: 2.0 * t.ln(),
        t,
        n: None,
        class_sizes: Vec::new(),
        binding_class: None,
        formula_note: "eps = 2 * ln(t)".to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMechanism {
    pub column: String,
    pub mechanism: LaplaceMechanism,
}

/// A k-anonymous release with Laplace-perturbed confidential columns.
#[derive(Debug, Clone)]
pub struct DpRelease {
    pub data: Microdata,
    /// Partition class of every row.
    pub provenance: Vec<usize>,
    pub partition: Partition,
    pub mechanisms: Vec<ColumnMechanism>,
    pub certificate: BoundCertificate,
}

impl DpRelease {
    /// The release's recoded quasi-identifiers with the original confidential values:
    /// the table whose theoretical output distributions the certificate speaks about.
    pub fn stochastic_view(&self, original: &Microdata) -> Result<Microdata, DpError> {
        let mut schema = self.data.schema().to_vec();
        let mut rows = self.data.records().to_vec();
        for c in original.confidential_columns() {
            schema[c] = original.schema()[c].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                row[c] = original.cell(r, c).clone();
            }
        }
        Ok(Microdata::new(schema, rows)?)
    }

    pub fn mechanism_spec(&self, column: &str) -> Option<StochasticMechanismSpec> {
        self.mechanisms
            .iter()
            .find(|m| m.column == column)
            .and_then(|m| StochasticMechanismSpec::laplace(column, m.mechanism.scale).ok())
    }
}

/// Draw index of cell `(row, column)` in a table with `columns` columns.
pub fn draw_index(row: usize, column: usize, columns: usize) -> u64 {
    (row * columns + column) as u64
}

/// k-anonymize the quasi-identifiers by microaggregation and perturb every confidential
/// cell with Laplace noise. The budget `epsilon` is split equally over the confidential
/// columns; each column's sensitivity is its bounds width.
pub fn anonymize_dp(data: &Microdata, k: usize, epsilon: f64, seed: u64) -> Result<DpRelease, DpError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(DpError::BadEpsilon(epsilon));
    }
    let confidential = data.confidential_columns();
    if confidential.is_empty() {
        return Err(DpError::NoConfidential);
    }
    let per_column = epsilon / confidential.len() as f64;
    let mut mechanisms = Vec::new();
    for &c in &confidential {
        let attr = &data.schema()[c];
        if attr.kind != Kind::Numeric {
            return Err(DpError::NonNumeric(attr.name.clone()));
        }
        let bounds = attr.bounds.ok_or_else(|| DpError::MissingBounds(attr.name.clone()))?;
        mechanisms.push(ColumnMechanism {
            column: attr.name.clone(),
            mechanism: LaplaceMechanism::new(per_column, bounds.width(), seed)?,
        });
    }

    let partition = kanon_microaggregate(data, k)?;
    let groups: Vec<Vec<usize>> = partition.classes.iter().map(|c| c.records.clone()).collect();
    let (mut schema, mut rows) = recode_quasi_identifiers(data, &groups);
    let columns = schema.len();
    for (&c, m) in confidential.iter().zip(&mechanisms) {
        schema[c] = AttributeSchema::new(schema[c].name.clone(), schema[c].role, Kind::Numeric);
        for (r, row) in rows.iter_mut().enumerate() {
            let v = data.cell(r, c).as_f64().expect("numeric cell");
            row[c] = Value::Number(m.mechanism.sample(v, draw_index(r, c, columns)));
        }
    }
    let release = Microdata::new(schema, rows)?;
    let sizes: Vec<usize> = equivalence_classes(&release).iter().map(|c| c.size()).collect();
    let mut certificate = dp_to_t_bound(data.len(), &sizes, epsilon)?;
    if confidential.len() > 1 {
        certificate.formula_note.push_str(&format!(
            "; eps split equally over {} confidential columns ({per_column} each)",
            confidential.len()
        ));
    }
    Ok(DpRelease {
        data: release,
        provenance: partition.assignment(data.len()),
        partition,
        mechanisms,
        certificate,
    })
}

/// Class-to-table and class-to-class distances of a t-close table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub t: f64,
    pub classes: usize,
    /// Largest class-to-table distance (must be at most `t`).
    pub class_vs_global_max: ExtendedDistance,
    /// Largest distance between two classes (must be at most `t^2`).
    pub pairwise_max: ExtendedDistance,
    pub pairwise_bound: f64,
    /// Class ids of the pair attaining `pairwise_max`.
    pub worst_pair: Option<(usize, usize)>,
    pub passed: bool,
}

/// For a table that is t-close on the joint confidential attributes, check that every
/// class lies within `t` of the table and every pair of classes within `t^2` of each
/// other, each within a relative tolerance of `PAIR_TOLERANCE`.
pub fn verify_class_pairs(data: &Microdata, t: f64) -> Result<PairwiseReport, DpError> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(DpError::BadT(t));
    }
    let confidential = data.confidential_columns();
    if confidential.is_empty() {
        return Err(DpError::NoConfidential);
    }
    let classes = equivalence_classes(data);
    let to_global = class_distances(data, &classes, &confidential)?;
    let mut class_vs_global_max = ExtendedDistance::ONE;
    for c in &to_global {
        if !c.distance.within(t * (1.0 + PAIR_TOLERANCE)) {
            return Err(DpError::NotTClose {
                class_id: c.class_id,
                distance: c.distance,
                t,
            });
        }
        class_vs_global_max = class_vs_global_max.max(c.distance);
    }

    let labels: Vec<String> = (0..data.len())
        .map(|r| {
            confidential
                .iter()
                .map(|&c| data.cell(r, c).to_string())
                .collect::<Vec<_>>()
                .join("\u{1f}")
        })
        .collect();
    let alphabet: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let dists = classes
        .iter()
        .map(|c| {
            let members: Vec<&str> = c.record_indices.iter().map(|&r| labels[r].as_str()).collect();
            empirical_distribution(&members, &alphabet).map_err(CheckError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairwise_max = ExtendedDistance::ONE;
    let mut worst_pair = None;
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            let d = ratio_distance(&dists[a], &dists[b]).map_err(CheckError::from)?;
            if worst_pair.is_none() || d > pairwise_max {
                pairwise_max = d;
                worst_pair = Some((classes[a].class_id, classes[b].class_id));
            }
        }
    }
    let pairwise_bound = t * t;
    Ok(PairwiseReport {
        t,
        classes: classes.len(),
        class_vs_global_max,
        pairwise_max,
        pairwise_bound,
        worst_pair,
        passed: pairwise_max.within(pairwise_bound * (1.0 + PAIR_TOLERANCE)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, Role};

    #[test]
    fn scale_is_sensitivity_over_epsilon() {
        let m = LaplaceMechanism::new(1.0, 100.0, 0).unwrap();
        assert_eq!(m.scale, 100.0);
        assert!(LaplaceMechanism::new(0.0, 1.0, 0).is_err());
        assert!(LaplaceMechanism::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn draws_are_indexed_and_reproducible() {
        let m = LaplaceMechanism::new(0.5, 10.0, 42).unwrap();
        let forward: Vec<f64> = (0..50).map(|i| m.sample(3.0, i)).collect();
        let backward: Vec<f64> = (0..50).rev().map(|i| m.sample(3.0, i)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        let other = LaplaceMechanism::new(0.5, 10.0, 43).unwrap();
        assert_ne!(m.sample(3.0, 0), other.sample(3.0, 0));
    }

    #[test]
    fn tiny_scale_keeps_values() {
        let m = LaplaceMechanism::new(1e9, 1.0, 7).unwrap();
        let close = (0..10_000).filter(|&i| (m.sample(5.0, i) - 5.0).abs() <= 1e-6).count();
        assert!(close as f64 >= 0.999 * 10_000.0);
    }

    #[test]
    fn bound_worked_values() {
        let c = dp_to_t_bound(12, &[4, 4, 4], 2f64.ln()).unwrap();
        assert!((c.t - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(dp_to_t_bound(12, &[4, 4, 4], 0.0).unwrap().t, 1.0);
        assert_eq!(dp_to_t_bound(7, &[3, 4], 0.0).unwrap().t, 1.0);
        let skew = dp_to_t_bound(12, &[2, 10], 1.0).unwrap();
        assert_eq!(skew.binding_class, Some(0));
        let by_hand = (2.0 + 10.0 * 1f64.exp()) / 12.0;
        assert!((skew.t - by_hand).abs() < 1e-12);
        assert_eq!(dp_to_t_bound(12, &[12], 3.0).unwrap().t, 1.0);
        assert_eq!(
            dp_to_t_bound(12, &[4, 4], 1.0),
            Err(DpError::SizesMismatch { n: 12, sum: 8 })
        );
    }

    #[test]
    fn stated_variant_drops_below_one() {
        let c = dp_to_t_bound_with(12, &[4, 4, 4], 0.0, CoefficientVariant::Stated).unwrap();
        assert!(c.t < 1.0);
    }

    #[test]
    fn t_to_eps_values() {
        assert_eq!(t_to_eps(1.0).unwrap().epsilon, 0.0);
        assert!((t_to_eps(0.5f64.exp()).unwrap().epsilon - 1.0).abs() < 1e-15);
        assert!((t_to_eps(1.5).unwrap().epsilon - 0.810_930_216_216_328_8).abs() < 1e-12);
        assert_eq!(t_to_eps(0.9), Err(DpError::BadT(0.9)));
    }

    fn table(n: usize, confidential: usize) -> Microdata {
        let mut schema = vec![AttributeSchema::new("age", Role::QuasiIdentifier, Kind::Numeric)];
        for c in 0..confidential {
            schema.push(
                AttributeSchema::new(format!("c{c}"), Role::Confidential, Kind::Numeric)
                    .with_bounds(Bounds::new(0.0, 50.0).unwrap()),
            );
        }
        let records = (0..n)
            .map(|i| {
                std::iter::once(Value::Number(i as f64))
                    .chain((0..confidential).map(|c| Value::Number(((i * 7 + c) % 50) as f64)))
                    .collect()
            })
            .collect();
        Microdata::new(schema, records).unwrap()
    }

    #[test]
    fn pipeline_certificates() {
        let one = anonymize_dp(&table(12, 1), 12, 1.0, 3).unwrap();
        assert_eq!(one.certificate.t, 1.0);
        let four = anonymize_dp(&table(12, 1), 4, 2f64.ln(), 3).unwrap();
        assert_eq!(four.certificate.class_sizes, vec![4, 4, 4]);
        assert!((four.certificate.t - 5.0 / 3.0).abs() < 1e-12);
        let two = anonymize_dp(&table(12, 2), 4, 1.0, 3).unwrap();
        assert!(two.mechanisms.iter().all(|m| m.mechanism.epsilon == 0.5));
        assert!(two.certificate.formula_note.contains("split equally"));
    }

    #[test]
    fn pipeline_requires_bounds() {
        let schema = vec![
            AttributeSchema::new("age", Role::QuasiIdentifier, Kind::Numeric),
            AttributeSchema::new("c", Role::Confidential, Kind::Numeric),
        ];
        let data = Microdata::new(schema, vec![vec![Value::Number(1.0), Value::Number(2.0)]]).unwrap();
        assert_eq!(
            anonymize_dp(&data, 1, 1.0, 0).unwrap_err(),
            DpError::MissingBounds("c".into())
        );
        assert!(matches!(
            anonymize_dp(&table(5, 1), 6, 1.0, 0).unwrap_err(),
            DpError::Construct(ConstructError::KTooLarge { .. })
        ));
    }

    #[test]
    fn pair_check_on_single_class() {
        let schema = vec![
            AttributeSchema::new("q", Role::QuasiIdentifier, Kind::Categorical),
            AttributeSchema::new("b", Role::Confidential, Kind::Categorical),
        ];
        let rows = ["x", "y", "x"]
            .iter()
            .map(|b| vec![Value::Text("all".into()), Value::Text(b.to_string())])
            .collect();
        let data = Microdata::new(schema, rows).unwrap();
        let report = verify_class_pairs(&data, 1.0).unwrap();
        assert!(report.passed);
        assert_eq!(report.class_vs_global_max, ExtendedDistance::ONE);
        assert_eq!(report.pairwise_max, ExtendedDistance::ONE);
    }
}
