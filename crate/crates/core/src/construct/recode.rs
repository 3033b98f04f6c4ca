//! Class-level recoding of quasi-identifiers.

use std::collections::BTreeSet;

use crate::model::{AttributeSchema, Kind, Microdata, Role, Value};

/// Replace every quasi-identifier cell by a value shared by its whole class: the class
/// mean for numeric columns, the covered range `lo..hi` for ordinal columns and the
/// value set `{a|b}` for categorical columns (single values are kept as they are).
///
/// Returns the recoded schema and rows; confidential cells are copied unchanged.
pub(crate) fn recode_quasi_identifiers(
    data: &Microdata,
    classes: &[Vec<usize>],
) -> (Vec<AttributeSchema>, Vec<Vec<Value>>) {
    let mut schema = data.schema().to_vec();
    let mut rows: Vec<Vec<Value>> = data.records().to_vec();
    for (c, attr) in data.schema().iter().enumerate() {
        if attr.role != Role::QuasiIdentifier {
            continue;
        }
        if attr.kind == Kind::Ordinal {
            schema[c] = AttributeSchema::new(attr.name.clone(), attr.role, Kind::Categorical);
        }
        for members in classes {
            let value = match attr.kind {
                Kind::Numeric => Value::Number(class_mean(data, c, members)),
                Kind::Ordinal => {
                    let ranks: BTreeSet<usize> = members
                        .iter()
                        .map(|&r| attr.rank(data.cell(r, c).as_text().unwrap()).unwrap())
                        .collect();
                    let order = attr.order.as_ref().unwrap();
                    let (lo, hi) = (*ranks.first().unwrap(), *ranks.last().unwrap());
                    if lo == hi {
                        Value::Text(order[lo].clone())
                    } else {
                        Value::Text(format!("{}..{}", order[lo], order[hi]))
                    }
                }
                Kind::Categorical => {
                    let values: BTreeSet<String> = members.iter().map(|&r| data.cell(r, c).to_string()).collect();
                    if values.len() == 1 {
                        Value::Text(values.into_iter().next().unwrap())
                    } else {
                        Value::Text(format!("{{{}}}", values.into_iter().collect::<Vec<_>>().join("|")))
                    }
                }
            };
            for &r in members {
                rows[r][c] = value.clone();
            }
        }
    }
    (schema, rows)
}

/// Mean of a numeric column over `members`, clamped to the observed range so rounding
/// never leaves the declared bounds.
fn class_mean(data: &Microdata, column: usize, members: &[usize]) -> f64 {
    let values: Vec<f64> = members
        .iter()
        .map(|&r| data.cell(r, column).as_f64().unwrap())
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (values.iter().sum::<f64>() / values.len() as f64).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recodes_each_kind() {
        let schema = vec![
            AttributeSchema::new("age", Role::QuasiIdentifier, Kind::Numeric),
            AttributeSchema::new("edu", Role::QuasiIdentifier, Kind::Ordinal).with_order(["p", "s", "u"]),
            AttributeSchema::new("zip", Role::QuasiIdentifier, Kind::Categorical),
            AttributeSchema::new("pay", Role::Confidential, Kind::Numeric),
        ];
        let row = |a: f64, e: &str, z: &str, p: f64| {
            vec![
                Value::Number(a),
                Value::Text(e.into()),
                Value::Text(z.into()),
                Value::Number(p),
            ]
        };
        let data = Microdata::new(
            schema,
            vec![
                row(30.0, "p", "a", 1.0),
                row(40.0, "u", "b", 2.0),
                row(0.1, "s", "c", 3.0),
            ],
        )
        .unwrap();
        let (schema, rows) = recode_quasi_identifiers(&data, &[vec![0, 1], vec![2]]);
        assert_eq!(schema[1].kind, Kind::Categorical);
        assert_eq!(
            rows[0],
            rows[1][..3]
                .iter()
                .cloned()
                .chain([Value::Number(1.0)])
                .collect::<Vec<_>>()
        );
        assert_eq!(rows[0][0], Value::Number(35.0));
        assert_eq!(rows[0][1], Value::Text("p..u".into()));
        assert_eq!(rows[0][2], Value::Text("{a|b}".into()));
        assert_eq!(
            rows[2][..3],
            [Value::Number(0.1), Value::Text("s".into()), Value::Text("c".into())]
        );
        assert!(Microdata::new(schema, rows).is_ok());
    }
}
