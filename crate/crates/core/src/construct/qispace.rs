//! Standardized quasi-identifier vectors for record selection and microaggregation.

use std::cmp::Ordering;

use crate::model::{Kind, Microdata};

/// Quasi-identifier values of every record: numeric and ordinal columns as
/// z-scores, categorical columns as codes compared by equality.
pub(crate) struct QiSpace {
    pub numeric: Vec<Vec<f64>>,
    pub categorical: Vec<Vec<String>>,
}

impl QiSpace {
    pub fn new(data: &Microdata) -> Self {
        let n = data.len();
        let mut numeric = vec![Vec::new(); n];
        let mut categorical = vec![Vec::new(); n];
        for c in data.quasi_identifier_columns() {
            let attr = &data.schema()[c];
            let raw: Vec<f64> = match attr.kind {
                Kind::Numeric => data.numeric_column(c).expect("numeric column"),
                Kind::Ordinal => (0..n)
                    .map(|r| attr.rank(data.cell(r, c).as_text().unwrap()).unwrap() as f64)
                    .collect(),
                Kind::Categorical => {
                    for (r, codes) in categorical.iter_mut().enumerate() {
                        codes.push(data.cell(r, c).to_string());
                    }
                    continue;
                }
            };
            for (r, z) in standardize(&raw).into_iter().enumerate() {
                numeric[r].push(z);
            }
        }
        Self { numeric, categorical }
    }

    pub fn has_numeric(&self) -> bool {
        self.numeric.first().is_some_and(|v| !v.is_empty())
    }

    /// Squared euclidean distance on the numeric part plus one per categorical mismatch.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let num: f64 = self.numeric[a]
            .iter()
            .zip(&self.numeric[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let cat = self.categorical[a]
            .iter()
            .zip(&self.categorical[b])
            .filter(|(x, y)| x != y)
            .count();
        num + cat as f64
    }

    pub fn distance_to(&self, a: usize, point: &[f64]) -> f64 {
        self.numeric[a].iter().zip(point).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    pub fn centroid(&self, records: &[usize]) -> Vec<f64> {
        let dim = self.numeric[records[0]].len();
        let mut c = vec![0.0; dim];
        for &r in records {
            for (acc, x) in c.iter_mut().zip(&self.numeric[r]) {
                *acc += x;
            }
        }
        c.iter_mut().for_each(|x| *x /= records.len() as f64);
        c
    }

    /// Lexicographic order of records in QI space, ties by record index.
    pub fn compare(&self, a: usize, b: usize) -> Ordering {
        self.categorical[a]
            .cmp(&self.categorical[b])
            .then_with(|| {
                self.numeric[a]
                    .iter()
                    .zip(&self.numeric[b])
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    }

    pub fn sorted(&self, mut records: Vec<usize>) -> Vec<usize> {
        records.sort_by(|&a, &b| self.compare(a, b));
        records
    }
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 {
        values.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; values.len()]
    }
}
