//! Equivalence classes that emphasize one bucket each while meeting per-bucket quotas.

use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bucket::{round_half_up, Bucketization};
use super::qispace::QiSpace;
use super::ConstructError;
use crate::distance::{ratio_distance, DiscreteDistribution};
use crate::model::Microdata;

/// How concrete records are chosen to fill each class's per-bucket quota.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QiStrategy {
    /// Classes take seeds in QI order, then the nearest unassigned records per bucket.
    #[default]
    GreedySeed,
    /// Each bucket's records in QI order are dealt out to classes in sequence.
    SortedScan,
}

impl FromStr for QiStrategy {
    type Err = ConstructError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy-seed" => Ok(QiStrategy::GreedySeed),
            "sorted-scan" => Ok(QiStrategy::SortedScan),
            other => Err(ConstructError::UnknownStrategy(other.to_string())),
        }
    }
}

impl QiStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            QiStrategy::GreedySeed => "greedy-seed",
            QiStrategy::SortedScan => "sorted-scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionClass {
    pub class_id: usize,
    pub records: Vec<usize>,
    pub emphasized_bucket: Option<usize>,
}

impl PartitionClass {
    pub fn size(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub classes: Vec<PartitionClass>,
    /// Classes emphasizing each bucket; `None` for partitions not built around buckets.
    pub l: Option<usize>,
    /// Smallest class size.
    pub k: usize,
}

impl Partition {
    pub(crate) fn from_groups(groups: Vec<Vec<usize>>, emphasis: Option<Vec<usize>>, l: Option<usize>) -> Self {
        let classes: Vec<PartitionClass> = groups
            .into_iter()
            .enumerate()
            .map(|(class_id, mut records)| {
                records.sort_unstable();
                PartitionClass {
                    class_id,
                    records,
                    emphasized_bucket: emphasis.as_ref().map(|e| e[class_id]),
                }
            })
            .collect();
        let k = classes.iter().map(PartitionClass::size).min().unwrap_or(0);
        Self { classes, l, k }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.classes.iter().map(PartitionClass::size).collect()
    }

    /// Class id of every record.
    pub fn assignment(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for c in &self.classes {
            for &r in &c.records {
                out[r] = c.class_id;
            }
        }
        out
    }

    /// `counts[i][j]`: records of class `i` that fall in bucket `j`.
    pub fn bucket_counts(&self, buckets: &Bucketization) -> Vec<Vec<usize>> {
        let of = buckets.assignment();
        self.classes
            .iter()
            .map(|c| {
                let mut row = vec![0; buckets.len()];
                for &r in &c.records {
                    row[of[r]] += 1;
                }
                row
            })
            .collect()
    }
}

/// Class sizes `e_i = round(i N / ((t+1) l)) - round((i-1) N / ((t+1) l))`.
pub fn class_sizes(n: usize, t: u32, l: usize) -> Result<Vec<usize>, ConstructError> {
    let b = t as usize + 1;
    let max_l = n / (b * b);
    if l < 1 || l > max_l {
        return Err(ConstructError::BadL { l, max: max_l });
    }
    let m = b * l;
    Ok((1..=m)
        .map(|i| round_half_up(i * n, m) - round_half_up((i - 1) * n, m))
        .collect())
}

/// Inclusive bounds on how many records of a class of size `e` may come from a bucket
/// of size `b_j` so that the class-to-table mass ratio stays within `[1/t, t]`:
/// `ceil(e b_j / (t N)) <= count <= floor(t e b_j / N)`.
pub fn quota_bounds(e: usize, b_j: usize, n: usize, t: u32) -> (usize, usize) {
    let t = t as usize;
    let lower = (e * b_j).div_ceil(t * n);
    let upper = t * e * b_j / n;
    (lower, upper)
}

/// Per-class, per-bucket record counts meeting the quota bounds, with row sums equal to
/// the class sizes and column sums equal to the bucket sizes.
///
/// Every class first takes its lower quota from every bucket and the remainder from its
/// emphasized bucket. When rounding leaves a bucket over- or under-subscribed the
/// remainder is re-routed along augmenting paths that keep every count inside its bounds.
pub fn allocate_counts(
    class_sizes: &[usize],
    emphasis: &[usize],
    bucket_sizes: &[usize],
    t: u32,
) -> Result<Vec<Vec<usize>>, ConstructError> {
    let n: usize = bucket_sizes.iter().sum();
    let nb = bucket_sizes.len();
    let mut lower = vec![vec![0; nb]; class_sizes.len()];
    let mut upper = vec![vec![0; nb]; class_sizes.len()];
    for (i, &e) in class_sizes.iter().enumerate() {
        for (j, &b) in bucket_sizes.iter().enumerate() {
            let (lo, hi) = quota_bounds(e, b, n, t);
            if lo > hi {
                return Err(ConstructError::Infeasible { class: i, bucket: j });
            }
            lower[i][j] = lo;
            upper[i][j] = hi;
        }
    }
    let mut counts = lower.clone();
    let mut row_left: Vec<isize> = class_sizes
        .iter()
        .zip(&lower)
        .map(|(&e, lo)| e as isize - lo.iter().sum::<usize>() as isize)
        .collect();
    let mut col_left: Vec<isize> = (0..nb)
        .map(|j| bucket_sizes[j] as isize - lower.iter().map(|r| r[j]).sum::<usize>() as isize)
        .collect();
    if let Some(i) = row_left.iter().position(|&r| r < 0) {
        return Err(ConstructError::Infeasible {
            class: i,
            bucket: emphasis[i],
        });
    }
    if let Some(j) = col_left.iter().position(|&c| c < 0) {
        return Err(ConstructError::Infeasible { class: 0, bucket: j });
    }

    for (i, &j) in emphasis.iter().enumerate() {
        let take = row_left[i]
            .min((upper[i][j] - counts[i][j]) as isize)
            .min(col_left[j])
            .max(0);
        counts[i][j] += take as usize;
        row_left[i] -= take;
        col_left[j] -= take;
    }

    for i in 0..class_sizes.len() {
        while row_left[i] > 0 {
            let path = augmenting_path(i, &counts, &lower, &upper, &col_left).ok_or_else(|| {
                let bucket = (0..nb).find(|&j| col_left[j] > 0).unwrap_or(emphasis[i]);
                ConstructError::Infeasible { class: i, bucket }
            })?;
            // path alternates (class, bucket, class, bucket, ...) ending at a bucket with spare supply.
            for step in path.windows(2).step_by(2) {
                counts[step[0]][step[1]] += 1;
            }
            for step in path[1..].windows(2).step_by(2) {
                counts[step[1]][step[0]] -= 1;
            }
            row_left[i] -= 1;
            col_left[*path.last().unwrap()] -= 1;
        }
    }
    Ok(counts)
}

fn augmenting_path(
    start: usize,
    counts: &[Vec<usize>],
    lower: &[Vec<usize>],
    upper: &[Vec<usize>],
    col_left: &[isize],
) -> Option<Vec<usize>> {
    let (nc, nb) = (counts.len(), col_left.len());
    let mut class_prev: Vec<Option<usize>> = vec![None; nc];
    let mut bucket_prev: Vec<Option<usize>> = vec![None; nb];
    let mut seen_class = vec![false; nc];
    seen_class[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for j in 0..nb {
            if bucket_prev[j].is_some() || counts[i][j] >= upper[i][j] {
                continue;
            }
            bucket_prev[j] = Some(i);
            if col_left[j] > 0 {
                let mut path = vec![j];
                let mut bj = j;
                loop {
                    let ci = bucket_prev[bj].unwrap();
                    path.push(ci);
                    match class_prev[ci] {
                        Some(prev_bucket) => {
                            path.push(prev_bucket);
                            bj = prev_bucket;
                        }
                        None => break,
                    }
                }
                path.reverse();
                return Some(path);
            }
            for i2 in 0..nc {
                if !seen_class[i2] && counts[i2][j] > lower[i2][j] {
                    seen_class[i2] = true;
                    class_prev[i2] = Some(j);
                    queue.push_back(i2);
                }
            }
        }
    }
    None
}

/// Partition records into `(t+1) l` classes; class `i` emphasizes bucket `i mod (t+1)`.
pub fn build_partition(
    data: &Microdata,
    buckets: &Bucketization,
    t: u32,
    l: usize,
    strategy: QiStrategy,
) -> Result<Partition, ConstructError> {
    let n = data.len();
    if buckets.n != n {
        return Err(ConstructError::BucketMismatch);
    }
    let b = buckets.len();
    if b != t as usize + 1 {
        return Err(ConstructError::BucketMismatch);
    }
    let sizes = class_sizes(n, t, l)?;
    let emphasis: Vec<usize> = (0..sizes.len()).map(|i| i % b).collect();
    let bucket_sizes = buckets.sizes();
    if let Some(j) = bucket_sizes.iter().position(|&s| s < sizes.len()) {
        return Err(ConstructError::Infeasible { class: 0, bucket: j });
    }
    let counts = allocate_counts(&sizes, &emphasis, &bucket_sizes, t)?;

    let qi = QiSpace::new(data);
    let groups = match strategy {
        QiStrategy::GreedySeed => greedy_seed(&qi, buckets, &counts),
        QiStrategy::SortedScan => sorted_scan(&qi, buckets, &counts),
    };
    let partition = Partition::from_groups(groups, Some(emphasis), Some(l));
    verify_quotas(&partition, buckets, t)?;
    Ok(partition)
}

fn greedy_seed(qi: &QiSpace, buckets: &Bucketization, counts: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = buckets.n;
    let bucket_of = buckets.assignment();
    let order = qi.sorted((0..n).collect());
    let mut taken = vec![false; n];
    let mut cursor = 0;
    counts
        .iter()
        .map(|need| {
            let mut need = need.clone();
            while taken[order[cursor]] {
                cursor += 1;
            }
            let seed = order[cursor..]
                .iter()
                .copied()
                .find(|&r| !taken[r] && need[bucket_of[r]] > 0)
                .expect("remaining supply covers every quota");
            taken[seed] = true;
            need[bucket_of[seed]] -= 1;
            let mut members = vec![seed];
            for (j, bucket) in buckets.buckets.iter().enumerate() {
                if need[j] == 0 {
                    continue;
                }
                let mut candidates: Vec<(f64, usize)> = bucket
                    .records
                    .iter()
                    .filter(|&&r| !taken[r])
                    .map(|&r| (qi.distance(seed, r), r))
                    .collect();
                candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(_, r) in candidates.iter().take(need[j]) {
                    taken[r] = true;
                    members.push(r);
                }
            }
            members
        })
        .collect()
}

fn sorted_scan(qi: &QiSpace, buckets: &Bucketization, counts: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut lists: Vec<std::vec::IntoIter<usize>> = buckets
        .buckets
        .iter()
        .map(|b| qi.sorted(b.records.clone()).into_iter())
        .collect();
    counts
        .iter()
        .map(|need| {
            need.iter()
                .enumerate()
                .flat_map(|(j, &c)| {
                    (0..c)
                        .map(|_| lists[j].next().expect("bucket supply"))
                        .collect::<Vec<_>>()
                })
                .collect()
        })
        .collect()
}

/// Independent re-check of a partition against the bucket quotas: every class must hold
/// between `ceil(e p_j / t)` and `floor(e p_j t)` records of every bucket, and its bucket
/// distribution must be within ratio distance `t` of the table's.
pub fn verify_quotas(partition: &Partition, buckets: &Bucketization, t: u32) -> Result<(), ConstructError> {
    let n = buckets.n;
    let mut seen = vec![false; n];
    for c in &partition.classes {
        for &r in &c.records {
            if r >= n || std::mem::replace(&mut seen[r], true) {
                return Err(ConstructError::NotAPartition);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(ConstructError::NotAPartition);
    }
    let labels: Vec<String> = buckets.buckets.iter().map(|b| b.label.clone()).collect();
    let global = DiscreteDistribution::from_counts(labels.clone(), &buckets.sizes())?;
    for (class, row) in partition.classes.iter().zip(partition.bucket_counts(buckets)) {
        let e = class.size();
        for (j, &count) in row.iter().enumerate() {
            let mass = buckets.buckets[j].size() as f64 / n as f64;
            let lower = (e as f64 * mass / t as f64 - 1e-9).ceil().max(0.0) as usize;
            let upper = (e as f64 * mass * t as f64 + 1e-9).floor() as usize;
            if count < lower || count > upper {
                return Err(ConstructError::QuotaViolation {
                    class: class.class_id,
                    bucket: j,
                    count,
                    lower,
                    upper,
                });
            }
        }
        let local = DiscreteDistribution::from_counts(labels.clone(), &row)?;
        let d = ratio_distance(&global, &local)?;
        if !d.within(t as f64) {
            return Err(ConstructError::NotClose {
                class: class.class_id,
                distance: d,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_cumulative_rounding() {
        assert_eq!(class_sizes(12, 2, 1).unwrap(), vec![4, 4, 4]);
        assert_eq!(class_sizes(13, 2, 1).unwrap(), vec![4, 5, 4]);
        assert_eq!(class_sizes(18, 2, 2).unwrap(), vec![3; 6]);
        assert_eq!(class_sizes(18, 2, 3), Err(ConstructError::BadL { l: 3, max: 2 }));
        assert_eq!(class_sizes(18, 2, 0), Err(ConstructError::BadL { l: 0, max: 2 }));
    }

    #[test]
    fn sizes_sum_to_n() {
        for n in 4..200 {
            for t in 1..4u32 {
                let b = t as usize + 1;
                for l in 1..=n / (b * b) {
                    let sizes = class_sizes(n, t, l).unwrap();
                    assert_eq!(sizes.iter().sum::<usize>(), n);
                    let ideal = n as f64 / (b * l) as f64;
                    assert!(sizes.iter().all(|&e| (e as f64 - ideal).abs() < 1.0));
                }
            }
        }
    }

    #[test]
    fn quota_arithmetic() {
        // N = 48, t = 3: classes of 12, buckets of 12.
        assert_eq!(quota_bounds(12, 12, 48, 3), (1, 9));
        // N = 12, t = 2.
        assert_eq!(quota_bounds(4, 4, 12, 2), (1, 2));
    }

    #[test]
    fn default_allocation_uses_cumulative_rounding() {
        let counts = allocate_counts(&[4, 4, 4], &[0, 1, 2], &[4, 4, 4], 2).unwrap();
        assert_eq!(counts, vec![vec![2, 1, 1], vec![1, 2, 1], vec![1, 1, 2]]);
        let counts = allocate_counts(&[6, 6, 6], &[0, 1, 2], &[6, 6, 6], 2).unwrap();
        assert_eq!(counts, vec![vec![4, 1, 1], vec![1, 4, 1], vec![1, 1, 4]]);
    }

    #[test]
    fn allocation_rebalances_uneven_supply() {
        // N = 10, t = 2: buckets (3, 4, 3), classes (3, 4, 3).
        let counts = allocate_counts(&[3, 4, 3], &[0, 1, 2], &[3, 4, 3], 2).unwrap();
        for (i, row) in counts.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), [3, 4, 3][i]);
        }
        for j in 0..3 {
            assert_eq!(counts.iter().map(|r| r[j]).sum::<usize>(), [3, 4, 3][j]);
        }
        for (i, row) in counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let (lo, hi) = quota_bounds([3, 4, 3][i], [3, 4, 3][j], 10, 2);
                assert!(lo <= c && c <= hi);
            }
        }
    }

    #[test]
    fn strategy_names() {
        assert_eq!("greedy-seed".parse::<QiStrategy>().unwrap(), QiStrategy::GreedySeed);
        assert_eq!("sorted-scan".parse::<QiStrategy>().unwrap(), QiStrategy::SortedScan);
        assert_eq!(
            "random".parse::<QiStrategy>(),
            Err(ConstructError::UnknownStrategy("random".into()))
        );
    }
}
