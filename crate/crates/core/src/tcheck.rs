//! Classic and stochastic t-closeness checks.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{
    density_ratio_sup, empirical_distribution, ratio_distance, DensityGrid, DistanceError, ExtendedDistance,
    GridDensity,
};
use crate::model::{equivalence_classes, EquivalenceClass, Kind, Microdata, Role};

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("threshold t = {0} must be a real number >= 1")]
    BadThreshold(f64),
    #[error("no confidential columns to check")]
    NoConfidential,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not confidential")]
    NotConfidential(String),
    #[error("column `{0}` is not numeric")]
    NonNumericColumn(String),
    #[error("mechanism scale {0} must be positive and finite")]
    BadScale(f64),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistance {
    pub class_id: usize,
    pub distance: ExtendedDistance,
}

/// Distance of every equivalence class to the whole table, against a target `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub target_t: f64,
    pub per_class: Vec<ClassDistance>,
    pub achieved_t: ExtendedDistance,
    pub satisfied: bool,
}

impl ClosenessReport {
    fn assemble(target_t: f64, per_class: Vec<ClassDistance>) -> Self {
        let achieved_t = per_class
            .iter()
            .map(|c| c.distance)
            .fold(ExtendedDistance::ONE, ExtendedDistance::max);
        Self {
            target_t,
            satisfied: achieved_t.within(target_t),
            per_class,
            achieved_t,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One report per confidential column, for the per-attribute mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub column: String,
    pub report: ClosenessReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismFamily {
    Laplace,
}

/// A randomized masking of one numeric confidential column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMechanismSpec {
    pub family: MechanismFamily,
    pub scale: f64,
    pub column: String,
}

impl StochasticMechanismSpec {
    pub fn laplace(column: impl Into<String>, scale: f64) -> Result<Self, CheckError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CheckError::BadScale(scale));
        }
        Ok(Self {
            family: MechanismFamily::Laplace,
            scale,
            column: column.into(),
        })
    }
}

fn check_threshold(t: f64) -> Result<(), CheckError> {
    if !(t >= 1.0) {
        return Err(CheckError::BadThreshold(t));
    }
    Ok(())
}

fn resolve_confidential<S: AsRef<str>>(data: &Microdata, columns: &[S]) -> Result<Vec<usize>, CheckError> {
    if columns.is_empty() {
        return Err(CheckError::NoConfidential);
    }
    columns
        .iter()
        .map(|name| {
            let name = name.as_ref();
            let idx = data
                .column_index(name)
                .ok_or_else(|| CheckError::UnknownColumn(name.to_string()))?;
            if data.schema()[idx].role != Role::Confidential {
                return Err(CheckError::NotConfidential(name.to_string()));
            }
            Ok(idx)
        })
        .collect()
}

/// Joint label of a record's confidential cells.
fn joint_label(data: &Microdata, row: usize, columns: &[usize]) -> String {
    columns
        .iter()
        .map(|&c| data.cell(row, c).to_string())
        .collect::<Vec<_>>()
        .join("\u{1f}")
}

pub(crate) fn class_distances(
    data: &Microdata,
    classes: &[EquivalenceClass],
    columns: &[usize],
) -> Result<Vec<ClassDistance>, CheckError> {
    let labels: Vec<String> = (0..data.len()).map(|r| joint_label(data, r, columns)).collect();
    let alphabet: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let global = empirical_distribution(&labels, &alphabet)?;
    classes
        .par_iter()
        .map(|class| {
            let members: Vec<&str> = class.record_indices.iter().map(|&r| labels[r].as_str()).collect();
            let local = empirical_distribution(&members, &alphabet)?;
            Ok(ClassDistance {
                class_id: class.class_id,
                distance: ratio_distance(&global, &local)?,
            })
        })
        .collect()
}

/// Classic t-closeness of the joint distribution of `conf_columns`.
pub fn check_t_closeness<S: AsRef<str>>(
    data: &Microdata,
    conf_columns: &[S],
    target_t: f64,
) -> Result<ClosenessReport, CheckError> {
    check_threshold(target_t)?;
    let columns = resolve_confidential(data, conf_columns)?;
    let classes = equivalence_classes(data);
    Ok(ClosenessReport::assemble(
        target_t,
        class_distances(data, &classes, &columns)?,
    ))
}

/// Classic t-closeness checked separately for each column.
pub fn check_t_closeness_per_attribute<S: AsRef<str>>(
    data: &Microdata,
    conf_columns: &[S],
    target_t: f64,
) -> Result<Vec<AttributeReport>, CheckError> {
    check_threshold(target_t)?;
    let columns = resolve_confidential(data, conf_columns)?;
    let classes = equivalence_classes(data);
    columns
        .iter()
        .map(|&c| {
            Ok(AttributeReport {
                column: data.schema()[c].name.clone(),
                report: ClosenessReport::assemble(target_t, class_distances(data, &classes, &[c])?),
            })
        })
        .collect()
}

/// Stochastic t-closeness: compares the theoretical output mixture of `mech` over
/// the whole table with the mixture over each equivalence class, on a grid of
/// `grid_resolution` points.
pub fn check_stochastic_t_closeness(
    data: &Microdata,
    mech: &StochasticMechanismSpec,
    target_t: f64,
    grid_resolution: usize,
) -> Result<ClosenessReport, CheckError> {
    check_threshold(target_t)?;
    let column = resolve_confidential(data, &[mech.column.as_str()])?[0];
    if data.schema()[column].kind != Kind::Numeric {
        return Err(CheckError::NonNumericColumn(mech.column.clone()));
    }
    if !(mech.scale > 0.0) || !mech.scale.is_finite() {
        return Err(CheckError::BadScale(mech.scale));
    }
    let values = data.numeric_column(column).expect("numeric column");
    let grid = DensityGrid::for_laplace(&values, mech.scale, grid_resolution)?;
    let global = GridDensity::laplace_mixture(&grid, &values, mech.scale)?;
    let classes = equivalence_classes(data);
    let per_class = classes
        .par_iter()
        .map(|class| {
            let centers: Vec<f64> = class.record_indices.iter().map(|&r| values[r]).collect();
            let local = GridDensity::laplace_mixture(&grid, &centers, mech.scale)?;
            Ok(ClassDistance {
                class_id: class.class_id,
                distance: density_ratio_sup(&global, &local)?,
            })
        })
        .collect::<Result<Vec<_>, CheckError>>()?;
    Ok(ClosenessReport::assemble(target_t, per_class))
}
