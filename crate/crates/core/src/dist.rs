//! Domain types shared by every other module: points, finitely supported
//! distributions, ground-cost matrices and transport plans.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a weight vector before renormalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-8;

/// A point in `R^d`, `d >= 1`, with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Point(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.squared_distance(other).sqrt()
    }

    pub fn squared_distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    // Exact-equality key; -0.0 and 0.0 collapse to the same bits.
    fn key(&self) -> Vec<u64> {
        self.0
            .iter()
            .map(|&c| if c == 0.0 { 0u64 } else { c.to_bits() })
            .collect()
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::scalar(x)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Ground-cost exponent `p`: costs are `‖x - y‖^p` and distances are
/// recovered as `value^(1/p)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Exponent {
    #[default]
    One,
    Two,
}

impl Exponent {
    pub fn as_u8(self) -> u8 {
        match self {
            Exponent::One => 1,
            Exponent::Two => 2,
        }
    }

    /// Cost of moving unit mass across Euclidean distance `d`.
    pub fn cost(self, d: f64) -> f64 {
        match self {
            Exponent::One => d,
            Exponent::Two => d * d,
        }
    }

    pub(crate) fn cost_between(self, a: &Point, b: &Point) -> f64 {
        match self {
            Exponent::One => a.distance(b),
            Exponent::Two => a.squared_distance(b),
        }
    }

    /// Turns a transport cost into a distance.
    pub fn root(self, value: f64) -> f64 {
        match self {
            Exponent::One => value,
            Exponent::Two => value.max(0.0).sqrt(),
        }
    }
}

impl TryFrom<u8> for Exponent {
    type Error = Error;

    fn try_from(p: u8) -> Result<Self> {
        match p {
            1 => Ok(Exponent::One),
            2 => Ok(Exponent::Two),
            other => Err(Error::InvalidParameter(format!(
                "cost exponent must be 1 or 2, got {other}"
            ))),
        }
    }
}

impl From<Exponent> for u8 {
    fn from(p: Exponent) -> u8 {
        p.as_u8()
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Weighted point cloud on a finite support of pairwise distinct points.
///
/// Weights are nonnegative and sum to one. Zero-mass atoms are legal and are
/// kept, so a distribution can live on a support shared with others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        validate_distribution(support, weights)
    }

    pub fn uniform(support: Vec<Point>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        validate_distribution(support, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Point) -> Self {
        DiscreteDistribution {
            support: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    /// Atoms carrying positive mass, as `(index, weight)`.
    pub fn atoms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
    }

    pub fn into_parts(self) -> (Vec<Point>, Vec<f64>) {
        (self.support, self.weights)
    }
}

/// Validates a support/weight pair: consistent dimension, finite
/// coordinates, nonnegative weights summing to one within
/// [`WEIGHT_SUM_TOLERANCE`]. Weights are renormalized by their sum and
/// duplicate points are merged (first occurrence keeps its position).
pub fn validate_distribution(support: Vec<Point>, weights: Vec<f64>) -> Result<DiscreteDistribution> {
    if support.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: support.len(),
            found: weights.len(),
        });
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let dim = support[0].dim();
    for (index, p) in support.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if p.0.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
    }
    for (index, &weight) in weights.iter().enumerate() {
        if weight.is_nan() || weight < 0.0 {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    let sum: f64 = weights.iter().sum();
    if !((sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE) {
        return Err(Error::WeightSumOutOfTolerance {
            sum,
            tolerance: WEIGHT_SUM_TOLERANCE,
        });
    }

    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(support.len());
    let mut merged_support = Vec::with_capacity(support.len());
    let mut merged_weights: Vec<f64> = Vec::with_capacity(support.len());
    for (p, w) in support.into_iter().zip(weights) {
        match seen.get(&p.key()) {
            Some(&slot) => merged_weights[slot] += w,
            None => {
                seen.insert(p.key(), merged_support.len());
                merged_support.push(p);
                merged_weights.push(w);
            }
        }
    }
    // Sums already equal to one up to rounding are left alone, which keeps
    // validation idempotent bit for bit.
    if (sum - 1.0).abs() > merged_weights.len() as f64 * f64::EPSILON {
        merged_weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(DiscreteDistribution {
        support: merged_support,
        weights: merged_weights,
    })
}

/// Union support of several distributions together with each input
/// re-expressed on it.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledSupport {
    pub support: Vec<Point>,
    /// One weight vector per input, each of length `support.len()`.
    pub weights: Vec<Vec<f64>>,
    /// `index_maps[k][i]` is the pooled index of atom `i` of input `k`.
    pub index_maps: Vec<Vec<usize>>,
}

impl PooledSupport {
    pub fn distribution(&self, k: usize) -> DiscreteDistribution {
        DiscreteDistribution {
            support: self.support.clone(),
            weights: self.weights[k].clone(),
        }
    }
}

/// Pools the supports of `dists` (order of first appearance) and re-expresses
/// each input on the union, with zeros off its own support.
pub fn pooled_support(dists: &[&DiscreteDistribution]) -> Result<PooledSupport> {
    let Some(first) = dists.first() else {
        return Err(Error::EmptySupport);
    };
    let dim = first.dim();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut support = Vec::new();
    let mut index_maps = Vec::with_capacity(dists.len());
    for d in dists {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: d.dim(),
            });
        }
        let map = d
            .support
            .iter()
            .map(|p| {
                *seen.entry(p.key()).or_insert_with(|| {
                    support.push(p.clone());
                    support.len() - 1
                })
            })
            .collect::<Vec<_>>();
        index_maps.push(map);
    }
    let weights = dists
        .iter()
        .zip(&index_maps)
        .map(|(d, map)| {
            let mut w = vec![0.0; support.len()];
            for (i, &slot) in map.iter().enumerate() {
                w[slot] += d.weights[i];
            }
            w
        })
        .collect();
    Ok(PooledSupport {
        support,
        weights,
        index_maps,
    })
}

/// Dense `rows x cols` matrix of ground costs `‖x_l - y_m‖^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    exponent: Exponent,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub(crate) fn from_entries(rows: usize, cols: usize, exponent: Exponent, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), rows * cols);
        CostMatrix {
            rows,
            cols,
            exponent,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Median entry (lower median for even counts).
    pub fn median(&self) -> f64 {
        let mut sorted = self.entries.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[(sorted.len() - 1) / 2]
    }

    /// Same costs with the sign flipped; used to maximize transport cost.
    pub(crate) fn negated(&self) -> CostMatrix {
        CostMatrix {
            entries: self.entries.iter().map(|c| -c).collect(),
            ..self.clone()
        }
    }
}

/// A transport plan together with the marginals it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols` plan.
    pub plan: Vec<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl Coupling {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.plan[row * self.cols + col]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.plan.chunks(self.cols) {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums
    }

    /// `⟨cost, plan⟩`.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.plan.iter().zip(cost.entries()).map(|(g, c)| g * c).sum()
    }

    /// Largest deviation of the plan's sums from the stored marginals.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    pub fn min_entry(&self) -> f64 {
        self.plan.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
