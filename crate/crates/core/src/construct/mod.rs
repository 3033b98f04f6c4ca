//! k-anonymous t-close releases by bucketization, and plain k-anonymous microaggregation.
//!
//! The confidential attribute is coarsened into `t + 1` equal-mass buckets. Records are
//! then split into `(t + 1) l` classes, each over-representing one bucket at mass close
//! to `t / (t + 1)` and holding every other bucket near `1 / (t (t + 1))`, which keeps
//! every class within ratio distance `t` of the table.

mod bucket;
mod microagg;
mod partition;
mod qispace;
mod recode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bucket::{optimal_buckets, Bucket, BucketRange, Bucketization};
pub use microagg::kanon_microaggregate;
pub use partition::{
    allocate_counts, build_partition, class_sizes, quota_bounds, verify_quotas, Partition, PartitionClass, QiStrategy,
};
pub(crate) use recode::recode_quasi_identifiers;

use crate::distance::{DistanceError, ExtendedDistance};
use crate::model::{AttributeSchema, Kind, Microdata, ModelError, Value};
use crate::tcheck::{check_t_closeness, CheckError, ClosenessReport};

#[derive(Debug, Error, PartialEq)]
pub enum ConstructError {
    #[error("t = {0} must be an integer >= 1 for the bucket construction")]
    NonIntegerT(f64),
    #[error("{n} records are too few: need at least (t+1)^2 = {needed}")]
    TooSmall { n: usize, needed: usize },
    #[error("only {distinct} distinct values for {buckets} buckets")]
    TooFewValues { distinct: usize, buckets: usize },
    #[error("l = {l} outside 1..={max}")]
    BadL { l: usize, max: usize },
    #[error("k = {0} must be at least 1")]
    BadK(usize),
    #[error("k = {k} exceeds the {n} records")]
    KTooLarge { k: usize, n: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown record selection strategy `{0}`")]
    UnknownStrategy(String),
    #[error("bucketization does not belong to this dataset or t")]
    BucketMismatch,
    #[error("quotas cannot be met for class {class}, bucket {bucket}")]
    Infeasible { class: usize, bucket: usize },
    #[error("class {class} holds {count} records of bucket {bucket}, allowed {lower}..={upper}")]
    QuotaViolation {
        class: usize,
        bucket: usize,
        count: usize,
        lower: usize,
        upper: usize,
    },
    #[error("class {class} is at distance {distance} from the table")]
    NotClose { class: usize, distance: ExtendedDistance },
    #[error("classes do not partition the records")]
    NotAPartition,
    #[error("release certificate is not satisfied (achieved t = {0})")]
    CertificateFailed(ExtendedDistance),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("{0}")]
    Model(String),
    #[error(transparent)]
    Check(#[from] CheckError),
}

impl From<ModelError> for ConstructError {
    fn from(e: ModelError) -> Self {
        ConstructError::Model(e.to_string())
    }
}

/// Parse a real-valued `t` into the integer the construction needs.
pub fn integer_t(t: f64) -> Result<u32, ConstructError> {
    if t >= 1.0 && t.fract() == 0.0 && t <= u32::MAX as f64 {
        Ok(t as u32)
    } else {
        Err(ConstructError::NonIntegerT(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub class_id: usize,
    pub bucket: Option<usize>,
}

/// A recoded table with the row-level mapping to classes and buckets and the
/// closeness report of the published confidential column.
#[derive(Debug, Clone)]
pub struct AnonymizedDataset {
    pub data: Microdata,
    pub provenance: Vec<Provenance>,
    pub certificate: ClosenessReport,
    pub partition: Partition,
    pub buckets: Bucketization,
}

pub fn anonymize_t_close(
    data: &Microdata,
    conf_column: &str,
    t: u32,
    l: usize,
) -> Result<AnonymizedDataset, ConstructError> {
    anonymize_t_close_with(data, conf_column, t, l, QiStrategy::default())
}

/// Bucketize `conf_column`, partition the records, recode the quasi-identifiers per
/// class and certify the release with the closeness checker.
pub fn anonymize_t_close_with(
    data: &Microdata,
    conf_column: &str,
    t: u32,
    l: usize,
    strategy: QiStrategy,
) -> Result<AnonymizedDataset, ConstructError> {
    let buckets = optimal_buckets(data, conf_column, t)?;
    let partition = build_partition(data, &buckets, t, l, strategy)?;
    let groups: Vec<Vec<usize>> = partition.classes.iter().map(|c| c.records.clone()).collect();
    let (mut schema, mut rows) = recode_quasi_identifiers(data, &groups);

    let col = data.column_index(conf_column).expect("bucketized column exists");
    let attr = &data.schema()[col];
    schema[col] = AttributeSchema::new(attr.name.clone(), attr.role, Kind::Categorical);
    let bucket_of = buckets.assignment();
    let labels: Vec<String> = buckets.buckets.iter().map(Bucket::release_label).collect();
    for (r, row) in rows.iter_mut().enumerate() {
        row[col] = Value::Text(labels[bucket_of[r]].clone());
    }
    let release = Microdata::new(schema, rows)?;

    let class_of = partition.assignment(data.len());
    let provenance = (0..data.len())
        .map(|r| Provenance {
            class_id: class_of[r],
            bucket: Some(bucket_of[r]),
        })
        .collect();
    let certificate = check_t_closeness(&release, &[conf_column], t as f64)?;
    if !certificate.satisfied {
        return Err(ConstructError::CertificateFailed(certificate.achieved_t));
    }
    Ok(AnonymizedDataset {
        data: release,
        provenance,
        certificate,
        partition,
        buckets,
    })
}
