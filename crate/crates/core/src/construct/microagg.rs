//! k-anonymous microaggregation (maximum distance to average vector).

use std::collections::BTreeMap;

use super::partition::Partition;
use super::qispace::QiSpace;
use super::ConstructError;
use crate::model::Microdata;

/// Group records into classes of at least `k` records.
///
/// Records are first grouped by exact match on categorical quasi-identifiers; groups
/// smaller than `k` are pooled. Each group is then split by MDAV over standardized
/// numeric and ordinal quasi-identifiers, giving classes of size `k..=2k-1`. Without
/// numeric quasi-identifiers the exact-match groups are the classes.
pub fn kanon_microaggregate(data: &Microdata, k: usize) -> Result<Partition, ConstructError> {
    let n = data.len();
    if k == 0 {
        return Err(ConstructError::BadK(k));
    }
    if k > n {
        return Err(ConstructError::KTooLarge { k, n });
    }
    let qi = QiSpace::new(data);

    let mut by_category: BTreeMap<&[String], Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        by_category.entry(qi.categorical[r].as_slice()).or_default().push(r);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    for (_, members) in by_category {
        if members.len() >= k {
            groups.push(members);
        } else {
            pool.extend(members);
        }
    }
    if !pool.is_empty() {
        pool.sort_unstable();
        if pool.len() >= k || groups.is_empty() {
            groups.push(pool);
        } else {
            let last = groups.last_mut().unwrap();
            last.extend(pool);
            last.sort_unstable();
        }
    }

    let classes = if qi.has_numeric() {
        groups.into_iter().flat_map(|g| mdav(&qi, g, k)).collect()
    } else {
        groups
    };
    Ok(Partition::from_groups(classes, None, None))
}

/// MDAV on `records`. Ties are broken by the lowest record index.
fn mdav(qi: &QiSpace, mut remaining: Vec<usize>, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    while remaining.len() >= 3 * k {
        let centroid = qi.centroid(&remaining);
        let r = farthest(&remaining, |x| qi.distance_to(x, &centroid));
        let group_r = nearest_k(&remaining, r, k, qi);
        remaining.retain(|x| !group_r.contains(x));
        let s = farthest(&remaining, |x| qi.distance(x, r));
        let group_s = nearest_k(&remaining, s, k, qi);
        remaining.retain(|x| !group_s.contains(x));
        out.push(group_r);
        out.push(group_s);
    }
    if remaining.len() >= 2 * k {
        let centroid = qi.centroid(&remaining);
        let r = farthest(&remaining, |x| qi.distance_to(x, &centroid));
        let group_r = nearest_k(&remaining, r, k, qi);
        remaining.retain(|x| !group_r.contains(x));
        out.push(group_r);
    }
    if !remaining.is_empty() {
        out.push(remaining);
    }
    out
}

fn farthest(records: &[usize], dist: impl Fn(usize) -> f64) -> usize {
    let mut best = records[0];
    let mut best_d = dist(best);
    for &r in &records[1..] {
        let d = dist(r);
        if d > best_d || (d == best_d && r < best) {
            best = r;
            best_d = d;
        }
    }
    best
}

/// `anchor` and its `k - 1` nearest neighbours among `records`.
fn nearest_k(records: &[usize], anchor: usize, k: usize, qi: &QiSpace) -> Vec<usize> {
    let mut by_distance: Vec<(f64, usize)> = records.iter().map(|&r| (qi.distance(anchor, r), r)).collect();
    by_distance.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then((a.1 != anchor).cmp(&(b.1 != anchor)))
            .then(a.1.cmp(&b.1))
    });
    let mut group: Vec<usize> = by_distance.into_iter().take(k).map(|(_, r)| r).collect();
    group.sort_unstable();
    group
}
