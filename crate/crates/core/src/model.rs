//! Microdata tables: schema, typed cells, CSV ingestion and equivalence classes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("row {row}, column `{column}`: {reason}")]
    CellViolation {
        /// 1-based data row (the header is not counted).
        row: usize,
        column: String,
        reason: String,
    },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    QuasiIdentifier,
    Confidential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Numeric,
    Ordinal,
    Categorical,
}

/// Closed interval `[lo, hi]` in the units of a numeric attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(ModelError::InvalidSchema(format!(
                "bounds [{lo}, {hi}] are not a finite closed interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
    pub bounds: Option<Bounds>,
    pub order: Option<Vec<String>>,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, role: Role, kind: Kind) -> Self {
        Self {
            name: name.into(),
            role,
            kind,
            bounds: None,
            order: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_order<S: Into<String>>(mut self, order: impl IntoIterator<Item = S>) -> Self {
        self.order = Some(order.into_iter().map(Into::into).collect());
        self
    }

    /// Position of an ordinal value in the declared order.
    pub fn rank(&self, value: &str) -> Option<usize> {
        self.order.as_ref()?.iter().position(|v| v == value)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSchema(msg));
        if self.name.is_empty() {
            return bad("empty column name".into());
        }
        if self.bounds.is_some() && self.kind != Kind::Numeric {
            return bad(format!("column `{}`: bounds on a non-numeric column", self.name));
        }
        match (&self.order, self.kind) {
            (Some(order), Kind::Ordinal) => {
                if order.is_empty() {
                    return bad(format!("column `{}`: empty ordinal order", self.name));
                }
                let mut seen = HashSet::new();
                if let Some(dup) = order.iter().find(|v| !seen.insert(v.as_str())) {
                    return bad(format!("column `{}`: `{dup}` listed twice in order", self.name));
                }
            }
            (None, Kind::Ordinal) => return bad(format!("column `{}`: ordinal column needs an order", self.name)),
            (Some(_), _) => return bad(format!("column `{}`: order on a non-ordinal column", self.name)),
            (None, _) => {}
        }
        Ok(())
    }

    fn check_cell(&self, value: &Value) -> Result<(), String> {
        match (self.kind, value) {
            (Kind::Numeric, Value::Number(x)) => {
                if !x.is_finite() {
                    return Err(format!("non-finite number {x}"));
                }
                if let Some(b) = self.bounds {
                    if !b.contains(*x) {
                        return Err(format!("{x} outside bounds [{}, {}]", b.lo, b.hi));
                    }
                }
                Ok(())
            }
            (Kind::Ordinal, Value::Text(s)) => match self.rank(s) {
                Some(_) => Ok(()),
                None => Err(format!("`{s}` is not in the declared order")),
            },
            (Kind::Categorical, Value::Text(s)) if !s.is_empty() => Ok(()),
            (Kind::Categorical, Value::Text(_)) => Err("missing value".into()),
            (Kind::Numeric, Value::Text(s)) => Err(format!("expected a number, found `{s}`")),
            (_, Value::Number(x)) => Err(format!("expected text, found number {x}")),
        }
    }

    fn parse_cell(&self, raw: &str) -> Result<Value, String> {
        if raw.trim().is_empty() {
            return Err("missing value".into());
        }
        let value = match self.kind {
            Kind::Numeric => Value::Number(
                raw.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("`{raw}` is not a number"))?,
            ),
            Kind::Ordinal | Kind::Categorical => Value::Text(raw.to_string()),
        };
        self.check_cell(&value)?;
        Ok(value)
    }
}

/// A single cell. Numeric cells are `f64`; ordinal and categorical cells are exact strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Number(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `Display` for f64 is the shortest representation that parses back exactly.
            Value::Number(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Number(_), Value::Text(_)) => Ordering::Less,
            (Value::Text(_), Value::Number(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

/// A validated, immutable table of `N >= 1` records.
#[derive(Debug, Clone, PartialEq)]
pub struct Microdata {
    schema: Vec<AttributeSchema>,
    records: Vec<Vec<Value>>,
}

impl Microdata {
    pub fn new(schema: Vec<AttributeSchema>, records: Vec<Vec<Value>>) -> Result<Self, ModelError> {
        validate_schema(&schema)?;
        if records.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        for (r, row) in records.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(ModelError::SchemaMismatch(format!(
                    "row {} has {} cells, schema has {} columns",
                    r + 1,
                    row.len(),
                    schema.len()
                )));
            }
            for (attr, cell) in schema.iter().zip(row) {
                attr.check_cell(cell).map_err(|reason| ModelError::CellViolation {
                    row: r + 1,
                    column: attr.name.clone(),
                    reason,
                })?;
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn records(&self) -> &[Vec<Value>] {
        &self.records
    }

    /// Number of records, `N`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false: a `Microdata` holds at least one record.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSchema> {
        self.schema.iter().find(|a| a.name == name)
    }

    pub fn quasi_identifier_columns(&self) -> Vec<usize> {
        self.columns_with_role(Role::QuasiIdentifier)
    }

    pub fn confidential_columns(&self) -> Vec<usize> {
        self.columns_with_role(Role::Confidential)
    }

    fn columns_with_role(&self, role: Role) -> Vec<usize> {
        self.schema
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cell(&self, row: usize, column: usize) -> &Value {
        &self.records[row][column]
    }

    /// Values of a numeric column, or `None` for non-numeric columns.
    pub fn numeric_column(&self, column: usize) -> Option<Vec<f64>> {
        if self.schema.get(column)?.kind != Kind::Numeric {
            return None;
        }
        self.records.iter().map(|r| r[column].as_f64()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.iter().map(|a| a.name.as_str()))?;
        for row in &self.records {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, ModelError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    pub fn read_csv<R: Read>(reader: R, schema: Vec<AttributeSchema>) -> Result<Self, ModelError> {
        validate_schema(&schema)?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = schema.iter().map(|a| a.name.as_str()).collect();
        if header.len() != names.len() || header.iter().zip(&names).any(|(h, n)| h != *n) {
            return Err(ModelError::SchemaMismatch(format!(
                "header [{}] does not match schema [{}]",
                header.iter().collect::<Vec<_>>().join(", "),
                names.join(", ")
            )));
        }
        let mut records = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != schema.len() {
                return Err(ModelError::SchemaMismatch(format!(
                    "row {} has {} cells, header has {}",
                    r + 1,
                    rec.len(),
                    schema.len()
                )));
            }
            let row = schema
                .iter()
                .zip(rec.iter())
                .map(|(attr, raw)| {
                    attr.parse_cell(raw).map_err(|reason| ModelError::CellViolation {
                        row: r + 1,
                        column: attr.name.clone(),
                        reason,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            records.push(row);
        }
        if records.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        Ok(Self { schema, records })
    }
}

fn validate_schema(schema: &[AttributeSchema]) -> Result<(), ModelError> {
    if schema.is_empty() {
        return Err(ModelError::InvalidSchema("no columns".into()));
    }
    let mut seen = HashSet::new();
    for attr in schema {
        attr.validate()?;
        if !seen.insert(attr.name.as_str()) {
            return Err(ModelError::InvalidSchema(format!("duplicate column `{}`", attr.name)));
        }
    }
    Ok(())
}

/// Load a CSV file with a mandatory header row matching `schema` in order.
pub fn load_dataset(path: impl AsRef<Path>, schema: Vec<AttributeSchema>) -> Result<Microdata, ModelError> {
    let file = std::fs::File::open(path)?;
    Microdata::read_csv(std::io::BufReader::new(file), schema)
}

/// A maximal set of records sharing one quasi-identifier tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceClass {
    pub class_id: usize,
    pub record_indices: Vec<usize>,
    pub qi_signature: Vec<Value>,
}

impl EquivalenceClass {
    pub fn size(&self) -> usize {
        self.record_indices.len()
    }
}

/// Group records by exact quasi-identifier equality. Class ids follow the sorted
/// order of the signatures; a table without quasi-identifiers is a single class.
pub fn equivalence_classes(data: &Microdata) -> Vec<EquivalenceClass> {
    let qi = data.quasi_identifier_columns();
    let mut groups: BTreeMap<Vec<Value>, Vec<usize>> = BTreeMap::new();
    for (i, row) in data.records().iter().enumerate() {
        let key = qi.iter().map(|&c| row[c].clone()).collect();
        groups.entry(key).or_default().push(i);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(class_id, (qi_signature, record_indices))| EquivalenceClass {
            class_id,
            record_indices,
            qi_signature,
        })
        .collect()
}
