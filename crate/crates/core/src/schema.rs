//! Line-oriented schema sidecar files.
//!
//! Each non-blank line that does not start with `#` has the form
//! `<column>.<key> = <value>`. Columns appear in the order of their first line and
//! must match the CSV header order. Keys:
//!
//! * `role`: `quasi_identifier` (or `qi`) | `confidential`
//! * `kind`: `numeric` | `ordinal` | `categorical`
//! * `bounds`: `lo,hi` (numeric only)
//! * `order`: `v1|v2|...|vn` (ordinal only)
//!
//! ```text
//! age.role = quasi_identifier
//! age.kind = numeric
//! salary.role = confidential
//! salary.kind = numeric
//! salary.bounds = 0,100
//! ```

use std::path::Path;

use crate::model::{AttributeSchema, Bounds, Kind, ModelError, Role};

#[derive(Default)]
struct Pending {
    name: String,
    role: Option<Role>,
    kind: Option<Kind>,
    bounds: Option<Bounds>,
    order: Option<Vec<String>>,
}

pub fn parse_schema(text: &str) -> Result<Vec<AttributeSchema>, ModelError> {
    let mut columns: Vec<Pending> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| ModelError::InvalidSchema(format!("line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `column.key = value`"))?;
        let (column, field) = key
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| err("key must be `column.field`"))?;
        let value = value.trim();
        let idx = match columns.iter().position(|c| c.name == column) {
            Some(i) => i,
            None => {
                columns.push(Pending {
                    name: column.to_string(),
                    ..Default::default()
                });
                columns.len() - 1
            }
        };
        let col = &mut columns[idx];
        match field.trim() {
            "role" => {
                col.role = Some(match value {
                    "quasi_identifier" | "qi" => Role::QuasiIdentifier,
                    "confidential" => Role::Confidential,
                    other => return Err(err(&format!("unknown role `{other}`"))),
                })
            }
            "kind" => {
                col.kind = Some(match value {
                    "numeric" => Kind::Numeric,
                    "ordinal" => Kind::Ordinal,
                    "categorical" => Kind::Categorical,
                    other => return Err(err(&format!("unknown kind `{other}`"))),
                })
            }
            "bounds" => {
                let (lo, hi) = value.split_once(',').ok_or_else(|| err("bounds must be `lo,hi`"))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| err(&format!("`{s}` is not a number")))
                };
                col.bounds = Some(Bounds::new(parse(lo)?, parse(hi)?)?);
            }
            "order" => col.order = Some(value.split('|').map(|v| v.trim().to_string()).collect()),
            other => return Err(err(&format!("unknown field `{other}`"))),
        }
    }
    if columns.is_empty() {
        return Err(ModelError::InvalidSchema("no columns declared".into()));
    }
    columns
        .into_iter()
        .map(|p| {
            let missing = |what: &str| ModelError::InvalidSchema(format!("column `{}` has no {what}", p.name));
            Ok(AttributeSchema {
                role: p.role.ok_or_else(|| missing("role"))?,
                kind: p.kind.ok_or_else(|| missing("kind"))?,
                bounds: p.bounds,
                order: p.order,
                name: p.name,
            })
        })
        .collect()
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Vec<AttributeSchema>, ModelError> {
    parse_schema(&std::fs::read_to_string(path)?)
}

pub fn render_schema(schema: &[AttributeSchema]) -> String {
    let mut out = String::new();
    for attr in schema {
        let role = match attr.role {
            Role::QuasiIdentifier => "quasi_identifier",
            Role::Confidential => "confidential",
        };
        let kind = match attr.kind {
            Kind::Numeric => "numeric",
            Kind::Ordinal => "ordinal",
            Kind::Categorical => "categorical",
        };
        out.push_str(&format!("{}.role = {role}\n{}.kind = {kind}\n", attr.name, attr.name));
        if let Some(b) = attr.bounds {
            out.push_str(&format!("{}.bounds = {},{}\n", attr.name, b.lo, b.hi));
        }
        if let Some(order) = &attr.order {
            out.push_str(&format!("{}.order = {}\n", attr.name, order.join("|")));
        }
    }
    out
}
