//! t-closeness and ε-differential privacy for microdata.
//!
//! * [`model`] and [`schema`]: typed tables, CSV ingest, schema sidecars.
//! * [`distance`]: the multiplicative ratio distance, discrete and on density grids.
//! * [`tcheck`]: classic and stochastic t-closeness checks.
//! * [`construct`]: the bucketization construction and k-anonymous microaggregation.
//! * [`dpbridge`]: Laplace release pipeline and conversions between ε and t.
//! * [`oracle`]: synthetic data and verification sweeps.
//! * [`cli`]: the `tclose` command-line tool.

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod construct;
pub mod distance;
pub mod dpbridge;
pub mod model;
pub mod oracle;
pub mod schema;
pub mod tcheck;
