//! The multiplicative ratio distance between probability distributions.
//!
//! `d(P, Q) = max_S max(P(S)/Q(S), Q(S)/P(S))` over events `S`, where `0/0` is
//! ignored and `y/0` with `y > 0` is infinite. For discrete distributions the
//! maximum is attained on a singleton, so [`ratio_distance`] only scans the
//! alphabet; [`ratio_distance_brute`] enumerates every subset and serves as the
//! oracle for that shortcut. Continuous distributions are handled on a grid of
//! density values by [`density_ratio_sup`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest alphabet accepted by the exhaustive subset oracle.
pub const MAX_BRUTE_ALPHABET: usize = 20;

/// Number of grid points used for density evaluation unless told otherwise.
pub const DEFAULT_GRID_RESOLUTION: usize = 10_001;

/// Half-width of the Laplace mixture grid beyond the extreme centers, in scales.
pub const GRID_TAIL_SCALES: f64 = 10.0;

const MASS_TOLERANCE: f64 = 1e-12;
const DENSITY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("alphabet and mass have different lengths ({alphabet} vs {mass})")]
    LengthMismatch { alphabet: usize, mass: usize },
    #[error("mass {0} is negative or not finite")]
    BadMass(f64),
    #[error("masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("label `{0}` appears twice in the alphabet")]
    DuplicateLabel(String),
    #[error("label `{0}` is not in the alphabet")]
    UnknownLabel(String),
    #[error("no values to build a distribution from")]
    EmptyInput,
    #[error("distributions are over different alphabets")]
    AlphabetMismatch,
    #[error("alphabet of size {0} exceeds the brute-force limit of {MAX_BRUTE_ALPHABET}")]
    AlphabetTooLarge(usize),
    #[error("densities are evaluated on different grids")]
    GridMismatch,
    #[error("density integrates to {0}, not 1 within 1%")]
    DensityNotNormalized(f64),
    #[error("invalid grid: {0}")]
    BadGrid(String),
}

/// A distance value that is either a finite real `>= 1` or infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedDistance {
    Finite(f64),
    Infinite,
}

impl ExtendedDistance {
    pub const ONE: ExtendedDistance = ExtendedDistance::Finite(1.0);

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedDistance::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            ExtendedDistance::Finite(x) => Some(*x),
            ExtendedDistance::Infinite => None,
        }
    }

    /// True when the distance is finite and at most `t`.
    pub fn within(&self, t: f64) -> bool {
        matches!(self, ExtendedDistance::Finite(x) if *x <= t)
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl PartialOrd for ExtendedDistance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtendedDistance::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), Infinite) => Some(Ordering::Less),
            (Infinite, Finite(_)) => Some(Ordering::Greater),
            (Infinite, Infinite) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtendedDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedDistance::Finite(x) => write!(f, "{x}"),
            ExtendedDistance::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtendedDistance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedDistance::Finite(x) => s.serialize_f64(*x),
            ExtendedDistance::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedDistance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(ExtendedDistance::Finite(x)),
            Repr::Text(s) if s == "inf" => Ok(ExtendedDistance::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got `{s}`"
            ))),
        }
    }
}

/// Probability mass over a finite, ordered alphabet of distinct labels.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    alphabet: Vec<String>,
    mass: Vec<f64>,
    /// Source counts, kept so that ratios between empirical distributions can be
    /// formed with a single rounding.
    counts: Option<Vec<u64>>,
}

impl PartialEq for DiscreteDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.mass == other.mass
    }
}

impl DiscreteDistribution {
    pub fn new(alphabet: Vec<String>, mass: Vec<f64>) -> Result<Self, DistanceError> {
        if alphabet.len() != mass.len() {
            return Err(DistanceError::LengthMismatch {
                alphabet: alphabet.len(),
                mass: mass.len(),
            });
        }
        if alphabet.is_empty() {
            return Err(DistanceError::EmptyInput);
        }
        if let Some(&m) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(DistanceError::BadMass(m));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistanceError::NotNormalized(total));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = alphabet.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(DistanceError::DuplicateLabel(dup.clone()));
        }
        Ok(Self {
            alphabet,
            mass,
            counts: None,
        })
    }

    /// Build from raw counts aligned with `alphabet`.
    pub fn from_counts(alphabet: Vec<String>, counts: &[usize]) -> Result<Self, DistanceError> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(DistanceError::EmptyInput);
        }
        let mass = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let mut d = Self::new(alphabet, mass)?;
        d.counts = Some(counts.iter().map(|&c| c as u64).collect());
        Ok(d)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        self.alphabet.iter().position(|l| l == label).map(|i| self.mass[i])
    }
}

/// Empirical distribution of `values` over `alphabet`: `mass(x) = count(x) / len(values)`.
pub fn empirical_distribution<S: AsRef<str>>(
    values: &[S],
    alphabet: &[String],
) -> Result<DiscreteDistribution, DistanceError> {
    if values.is_empty() {
        return Err(DistanceError::EmptyInput);
    }
    let index: HashMap<&str, usize> = alphabet.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut counts = vec![0usize; alphabet.len()];
    for v in values {
        let v = v.as_ref();
        let i = *index.get(v).ok_or_else(|| DistanceError::UnknownLabel(v.to_string()))?;
        counts[i] += 1;
    }
    DiscreteDistribution::from_counts(alphabet.to_vec(), &counts)
}

/// Two-sided ratio of two probabilities under the zero conventions. `None` means
/// both are zero and the pair does not take part in the maximum.
fn pair_ratio(a: f64, b: f64) -> Option<ExtendedDistance> {
    match (a == 0.0, b == 0.0) {
        (true, true) => None,
        (true, false) | (false, true) => Some(ExtendedDistance::Infinite),
        (false, false) => Some(ExtendedDistance::Finite((a / b).max(b / a))),
    }
}

fn same_alphabet(d1: &DiscreteDistribution, d2: &DiscreteDistribution) -> Result<(), DistanceError> {
    if d1.alphabet != d2.alphabet {
        return Err(DistanceError::AlphabetMismatch);
    }
    Ok(())
}

/// Ratio distance between two discrete distributions, maximised over single labels.
pub fn ratio_distance(d1: &DiscreteDistribution, d2: &DiscreteDistribution) -> Result<ExtendedDistance, DistanceError> {
    same_alphabet(d1, d2)?;
    if let (Some(c1), Some(c2)) = (&d1.counts, &d2.counts) {
        if let Some(d) = count_ratio_distance(c1, c2) {
            return Ok(d);
        }
    }
    Ok(d1
        .mass
        .iter()
        .zip(&d2.mass)
        .filter_map(|(&a, &b)| pair_ratio(a, b))
        .fold(ExtendedDistance::ONE, ExtendedDistance::max))
}

/// `(a / n1) / (b / n2)` as `(a n2) / (b n1)`, so exact ratios stay exact. `None` when
/// the products do not fit a double exactly.
fn count_ratio_distance(c1: &[u64], c2: &[u64]) -> Option<ExtendedDistance> {
    const EXACT: u128 = 1 << f64::MANTISSA_DIGITS;
    let n1: u128 = c1.iter().map(|&c| c as u128).sum();
    let n2: u128 = c2.iter().map(|&c| c as u128).sum();
    let mut best = ExtendedDistance::ONE;
    for (&a, &b) in c1.iter().zip(c2) {
        let (x, y) = (a as u128 * n2, b as u128 * n1);
        if x > EXACT || y > EXACT {
            return None;
        }
        let r = match (x == 0, y == 0) {
            (true, true) => continue,
            (true, false) | (false, true) => ExtendedDistance::Infinite,
            (false, false) => ExtendedDistance::Finite((x as f64 / y as f64).max(y as f64 / x as f64)),
        };
        best = best.max(r);
    }
    Some(best)
}

/// Ratio distance maximised over every nonempty subset of the alphabet.
pub fn ratio_distance_brute(
    d1: &DiscreteDistribution,
    d2: &DiscreteDistribution,
) -> Result<ExtendedDistance, DistanceError> {
    same_alphabet(d1, d2)?;
    let n = d1.len();
    if n > MAX_BRUTE_ALPHABET {
        return Err(DistanceError::AlphabetTooLarge(n));
    }
    let mut best = ExtendedDistance::ONE;
    for subset in 1u32..(1u32 << n) {
        let (mut p1, mut p2) = (0.0, 0.0);
        for i in 0..n {
            if subset & (1 << i) != 0 {
                p1 += d1.mass[i];
                p2 += d2.mass[i];
            }
        }
        if let Some(r) = pair_ratio(p1, p2) {
            best = best.max(r);
        }
    }
    Ok(best)
}

/// Strictly increasing evaluation points for densities.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    points: Vec<f64>,
}

impl DensityGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, DistanceError> {
        if points.len() < 2 {
            return Err(DistanceError::BadGrid("need at least two points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DistanceError::BadGrid(
                "points must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// `resolution` evenly spaced points covering `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, resolution: usize) -> Result<Self, DistanceError> {
        if resolution < 2 || !(lo < hi) {
            return Err(DistanceError::BadGrid(format!(
                "cannot place {resolution} points on [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (resolution - 1) as f64;
        let mut points: Vec<f64> = (0..resolution).map(|i| lo + step * i as f64).collect();
        points[resolution - 1] = hi;
        Self::new(points)
    }

    /// Grid for Laplace mixtures: from `GRID_TAIL_SCALES` scales below the smallest
    /// center to as many above the largest.
    pub fn for_laplace(centers: &[f64], scale: f64, resolution: usize) -> Result<Self, DistanceError> {
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if centers.is_empty() || !(scale > 0.0) {
            return Err(DistanceError::BadGrid("need centers and a positive scale".into()));
        }
        Self::uniform(lo - GRID_TAIL_SCALES * scale, hi + GRID_TAIL_SCALES * scale, resolution)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid-rule integral of `values` over the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.points
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// A nonnegative density sampled at the points of a [`DensityGrid`].
#[derive(Debug, Clone)]
pub struct GridDensity<'g> {
    grid: &'g DensityGrid,
    values: Vec<f64>,
}

impl<'g> GridDensity<'g> {
    pub fn new(grid: &'g DensityGrid, values: Vec<f64>) -> Result<Self, DistanceError> {
        if values.len() != grid.len() {
            return Err(DistanceError::GridMismatch);
        }
        if let Some(&v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(DistanceError::BadMass(v));
        }
        Ok(Self { grid, values })
    }

    /// Equal-weight mixture of Laplace densities with the given centers and scale.
    pub fn laplace_mixture(grid: &'g DensityGrid, centers: &[f64], scale: f64) -> Result<Self, DistanceError> {
        if centers.is_empty() {
            return Err(DistanceError::EmptyInput);
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(DistanceError::BadGrid(format!(
                "scale {scale} must be positive and finite"
            )));
        }
        let norm = 1.0 / (2.0 * scale * centers.len() as f64);
        let values = grid
            .points()
            .iter()
            .map(|&x| norm * centers.iter().map(|&c| (-(x - c).abs() / scale).exp()).sum::<f64>())
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &DensityGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

/// Grid approximation of the ratio distance between two absolutely continuous
/// distributions: the largest two-sided density ratio over the grid points.
pub fn density_ratio_sup(g1: &GridDensity<'_>, g2: &GridDensity<'_>) -> Result<ExtendedDistance, DistanceError> {
    if !std::ptr::eq(g1.grid, g2.grid) && g1.grid != g2.grid {
        return Err(DistanceError::GridMismatch);
    }
    for g in [g1, g2] {
        let integral = g.integral();
        if (integral - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(DistanceError::DensityNotNormalized(integral));
        }
    }
    Ok(g1
        .values
        .iter()
        .zip(&g2.values)
        .filter_map(|(&a, &b)| pair_ratio(a, b))
        .fold(ExtendedDistance::ONE, ExtendedDistance::max))
}
