//! Optimal bucketization of a confidential attribute into `t + 1` buckets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ConstructError;
use crate::model::{Kind, Microdata};

/// `round_half_up(num / den)` for nonnegative integers.
pub(crate) fn round_half_up(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Value range covered by a bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BucketRange {
    Numeric { lo: f64, hi: f64 },
    Ordinal { first: String, last: String },
    Categories { values: Vec<String> },
}

impl BucketRange {
    fn render(&self) -> String {
        match self {
            BucketRange::Numeric { lo, hi } => format!("[{lo}, {hi}]"),
            BucketRange::Ordinal { first, last } => format!("[{first}..{last}]"),
            BucketRange::Categories { values } => format!("{{{}}}", values.join("|")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub records: Vec<usize>,
    pub range: BucketRange,
}

impl Bucket {
    pub fn size(&self) -> usize {
        self.records.len()
    }

    /// Cell text written to a release: label followed by the covered range.
    pub fn release_label(&self) -> String {
        format!("{} {}", self.label, self.range.render())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucketization {
    pub buckets: Vec<Bucket>,
    /// `p_j = b_j / N`.
    pub bucket_mass: Vec<f64>,
    /// Record indices in the order used to cut buckets (value order, or cluster order
    /// for categorical attributes).
    pub value_order: Vec<usize>,
    pub n: usize,
}

impl Bucketization {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Bucket::size).collect()
    }

    /// Bucket index of every record.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n];
        for (j, b) in self.buckets.iter().enumerate() {
            for &r in &b.records {
                out[r] = j;
            }
        }
        out
    }
}

/// Cut positions after which a new bucket starts: `round(i * n / b)` for `i = 1..b-1`.
pub(crate) fn bucket_cuts(n: usize, b: usize) -> Vec<usize> {
    (1..b).map(|i| round_half_up(i * n, b)).collect()
}

/// Split `n` sorted records into `t + 1` contiguous buckets of near-equal mass.
pub fn optimal_buckets(data: &Microdata, conf_column: &str, t: u32) -> Result<Bucketization, ConstructError> {
    if t < 1 {
        return Err(ConstructError::NonIntegerT(t as f64));
    }
    let col = data
        .column_index(conf_column)
        .ok_or_else(|| ConstructError::UnknownColumn(conf_column.to_string()))?;
    let n = data.len();
    let b = t as usize + 1;
    if n < b * b {
        return Err(ConstructError::TooSmall { n, needed: b * b });
    }
    let attr = &data.schema()[col];
    match attr.kind {
        Kind::Numeric => {
            let values = data.numeric_column(col).expect("numeric column");
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &c| values[a].total_cmp(&values[c]).then(a.cmp(&c)));
            Ok(contiguous(order, b, n, |members| BucketRange::Numeric {
                lo: values[members[0]],
                hi: values[*members.last().unwrap()],
            }))
        }
        Kind::Ordinal => {
            let ranks: Vec<usize> = (0..n)
                .map(|r| attr.rank(data.cell(r, col).as_text().unwrap()).unwrap())
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&r| (ranks[r], r));
            let text = |r: usize| data.cell(r, col).to_string();
            Ok(contiguous(order, b, n, |members| BucketRange::Ordinal {
                first: text(members[0]),
                last: text(*members.last().unwrap()),
            }))
        }
        Kind::Categorical => categorical(data, col, b),
    }
}

fn contiguous(order: Vec<usize>, b: usize, n: usize, range: impl Fn(&[usize]) -> BucketRange) -> Bucketization {
    let mut bounds = vec![0];
    bounds.extend(bucket_cuts(n, b));
    bounds.push(n);
    let buckets = bounds
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let members = &order[w[0]..w[1]];
            let mut records = members.to_vec();
            records.sort_unstable();
            Bucket {
                label: format!("B{}", j + 1),
                records,
                range: range(members),
            }
        })
        .collect::<Vec<_>>();
    finish(buckets, order, n)
}

/// Frequency-balanced greedy clustering: labels in decreasing count order go to the
/// currently smallest bucket. Whole labels stay together.
fn categorical(data: &Microdata, col: usize, b: usize) -> Result<Bucketization, ConstructError> {
    let n = data.len();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        groups.entry(data.cell(r, col).to_string()).or_default().push(r);
    }
    if groups.len() < b {
        return Err(ConstructError::TooFewValues {
            distinct: groups.len(),
            buckets: b,
        });
    }
    let mut groups: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
    groups.sort_by(|a, c| c.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&c.0)));
    let mut members: Vec<Vec<(String, Vec<usize>)>> = vec![Vec::new(); b];
    let mut sizes = vec![0usize; b];
    for group in groups {
        let j = (0..b).min_by_key(|&j| (sizes[j], j)).unwrap();
        sizes[j] += group.1.len();
        members[j].push(group);
    }
    let mut order = Vec::with_capacity(n);
    let buckets = members
        .into_iter()
        .enumerate()
        .map(|(j, groups)| {
            let mut values: Vec<String> = groups.iter().map(|g| g.0.clone()).collect();
            values.sort();
            let mut records: Vec<usize> = groups.into_iter().flat_map(|g| g.1).collect();
            records.sort_unstable();
            order.extend(&records);
            Bucket {
                label: format!("B{}", j + 1),
                records,
                range: BucketRange::Categories { values },
            }
        })
        .collect();
    Ok(finish(buckets, order, n))
}

fn finish(buckets: Vec<Bucket>, value_order: Vec<usize>, n: usize) -> Bucketization {
    let bucket_mass = buckets.iter().map(|b| b.size() as f64 / n as f64).collect();
    Bucketization {
        buckets,
        bucket_mass,
        value_order,
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeSchema, Role, Value};

    fn numeric(values: &[f64]) -> Microdata {
        let schema = vec![AttributeSchema::new("v", Role::Confidential, Kind::Numeric)];
        Microdata::new(schema, values.iter().map(|&v| vec![Value::Number(v)]).collect()).unwrap()
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(10, 3), 3);
        assert_eq!(round_half_up(20, 3), 7);
        assert_eq!(round_half_up(5, 2), 3);
        assert_eq!(round_half_up(3, 2), 2);
        assert_eq!(round_half_up(12, 3), 4);
    }

    #[test]
    fn twelve_records_three_buckets_of_four() {
        let values: Vec<f64> = (0..12).map(|i| ((i * 7) % 12) as f64).collect();
        let b = optimal_buckets(&numeric(&values), "v", 2).unwrap();
        assert_eq!(b.sizes(), vec![4, 4, 4]);
        assert_eq!(b.bucket_mass, vec![1.0 / 3.0; 3]);
        for (j, bucket) in b.buckets.iter().enumerate() {
            let lo = 4.0 * j as f64;
            assert_eq!(bucket.range, BucketRange::Numeric { lo, hi: lo + 3.0 });
        }
        assert_eq!(b.buckets[0].release_label(), "B1 [0, 3]");
    }

    #[test]
    fn ten_records_cut_at_three_and_seven() {
        let values: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b = optimal_buckets(&numeric(&values), "v", 2).unwrap();
        assert_eq!(b.sizes(), vec![3, 4, 3]);
    }

    #[test]
    fn too_small() {
        let values: Vec<f64> = (0..4).map(|i| i as f64).collect();
        assert_eq!(
            optimal_buckets(&numeric(&values), "v", 2),
            Err(ConstructError::TooSmall { n: 4, needed: 9 })
        );
        assert!(matches!(
            optimal_buckets(&numeric(&values), "v", 0),
            Err(ConstructError::NonIntegerT(_))
        ));
    }

    #[test]
    fn ordinal_buckets_follow_declared_order() {
        let schema = vec![AttributeSchema::new("g", Role::Confidential, Kind::Ordinal).with_order(["c", "b", "a"])];
        let rows = ["a", "b", "c", "a"].iter().cycle().take(9);
        let data = Microdata::new(schema, rows.map(|s| vec![Value::Text(s.to_string())]).collect()).unwrap();
        let b = optimal_buckets(&data, "g", 2).unwrap();
        // Declared order c < b < a: two c's, two b's, five a's.
        assert_eq!(b.sizes(), vec![3, 3, 3]);
        assert_eq!(
            b.buckets[0].range,
            BucketRange::Ordinal {
                first: "c".into(),
                last: "b".into()
            }
        );
    }

    #[test]
    fn categorical_clusters_balance_counts() {
        let schema = vec![AttributeSchema::new("d", Role::Confidential, Kind::Categorical)];
        let labels = ["flu"; 4]
            .iter()
            .chain(&["cold"; 3])
            .chain(&["hiv"; 2])
            .chain(&["tb"; 2]);
        let data = Microdata::new(schema, labels.map(|s| vec![Value::Text(s.to_string())]).collect()).unwrap();
        let b = optimal_buckets(&data, "d", 2).unwrap();
        let mut sizes = b.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![3, 4, 4]);
        assert_eq!(b.assignment().iter().filter(|&&j| j == usize::MAX).count(), 0);
    }
}
