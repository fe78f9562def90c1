//! Target-domain prediction: a weighted k-NN vote over the least-favorable
//! log-ratios, and plain majority-vote k-NN as a baseline.

use serde::{Deserialize, Serialize};

use crate::dist::Point;
use crate::error::{Error, Result};
use crate::lfd::{log_ratio, LfdSolution};
use crate::par::{self, Execution};

/// Guard on neighbor distances so an exact match dominates without dividing
/// by zero.
pub const DISTANCE_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<Point>,
    /// Each label is 1 or 2.
    pub labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(points: Vec<Point>, labels: Vec<u8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|l| !matches!(l, 1 | 2)) {
            return Err(Error::InvalidParameter(format!("label {bad} is not 1 or 2")));
        }
        if let Some(first) = points.first() {
            if let Some(p) = points.iter().find(|p| p.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: p.dim(),
                });
            }
        }
        Ok(Self {
            points,
            labels,
            domains: None,
        })
    }

    pub fn with_domains(mut self, domains: Vec<String>) -> Result<Self> {
        if domains.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                found: domains.len(),
            });
        }
        self.domains = Some(domains);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points carrying `label`.
    pub fn class_points(&self, label: u8) -> Vec<Point> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Concatenation of several datasets; domain ids are kept only if every
    /// part has them.
    pub fn concat(parts: &[&LabeledDataset]) -> LabeledDataset {
        let mut out = LabeledDataset::default();
        let mut domains = Some(Vec::new());
        for part in parts {
            out.points.extend(part.points.iter().cloned());
            out.labels.extend(&part.labels);
            domains = match (domains, &part.domains) {
                (Some(mut d), Some(p)) => {
                    d.extend(p.iter().cloned());
                    Some(d)
                }
                _ => None,
            };
        }
        out.domains = domains;
        out
    }
}

/// Indices of the `k` nearest points to `x`, nearest first; equal distances
/// go to the lower index.
fn nearest(points: &[Point], x: &Point, k: usize) -> Result<Vec<(usize, f64)>> {
    if points.len() < k || k == 0 {
        return Err(Error::SupportTooSmall {
            k,
            available: points.len(),
        });
    }
    if let Some(p) = points.first() {
        if p.dim() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: x.dim(),
            });
        }
    }
    let mut d: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.squared_distance(x), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    Ok(d.into_iter().map(|(sq, i)| (i, sq.sqrt())).collect())
}

/// Weighted k-NN over a least-favorable pair: with the `k` nearest support
/// points `x_i` and weights `w_i = 1 / ‖x_i - x‖`,
///
/// ```text
/// S = (1/k) Σ w_i log(p1(x_i) / p2(x_i))
/// ```
///
/// and the label is 1 when `S >= 0`, else 2. The weights are not normalized,
/// which cannot change the sign.
#[derive(Clone, Debug)]
pub struct LfdClassifier {
    support: Vec<Point>,
    log_ratios: Vec<f64>,
    k: usize,
}

impl LfdClassifier {
    pub fn new(solution: &LfdSolution, k: usize) -> Result<Self> {
        if solution.support.len() < k || k == 0 {
            return Err(Error::SupportTooSmall {
                k,
                available: solution.support.len(),
            });
        }
        let log_ratios = solution
            .p1
            .iter()
            .zip(&solution.p2)
            .map(|(&a, &b)| 2.0 * log_ratio(a, b))
            .collect();
        Ok(Self {
            support: solution.support.clone(),
            log_ratios,
            k,
        })
    }

    pub fn score(&self, x: &Point) -> Result<f64> {
        let neighbors = nearest(&self.support, x, self.k)?;
        let sum: f64 = neighbors
            .iter()
            .map(|&(i, d)| self.log_ratios[i] / d.max(DISTANCE_FLOOR))
            .sum();
        Ok(sum / self.k as f64)
    }

    pub fn predict(&self, x: &Point) -> Result<u8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { 2 })
    }
}

pub fn knn_detect(x: &Point, solution: &LfdSolution, k: usize) -> Result<u8> {
    LfdClassifier::new(solution, k)?.predict(x)
}

/// Majority vote among the `k` nearest training points; a tie goes to 1.
pub fn knn_baseline(x: &Point, train: &LabeledDataset, k: usize) -> Result<u8> {
    let neighbors = nearest(&train.points, x, k)?;
    let ones = neighbors.iter().filter(|&&(i, _)| train.labels[i] == 1).count();
    Ok(if 2 * ones >= k { 1 } else { 2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Recall of each class; `NaN` (null in JSON) for a class absent from
    /// the test set.
    pub per_class: [f64; 2],
    /// `confusion[true - 1][predicted - 1]`.
    pub confusion: [[usize; 2]; 2],
}

/// Scores `classifier` on `test`, predicting points independently.
pub fn evaluate<F>(classifier: F, test: &LabeledDataset, exec: Execution) -> Result<Evaluation>
where
    F: Fn(&Point) -> Result<u8> + Sync,
{
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = par::try_map(exec, &test.points, |p| classifier(p))?;
    let mut confusion = [[0usize; 2]; 2];
    for (&truth, &pred) in test.labels.iter().zip(&predictions) {
        if !matches!(pred, 1 | 2) {
            return Err(Error::InvalidParameter(format!("classifier returned label {pred}")));
        }
        confusion[truth as usize - 1][pred as usize - 1] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let per_class = [0, 1].map(|c| {
        let total = confusion[c][0] + confusion[c][1];
        if total == 0 {
            f64::NAN
        } else {
            confusion[c][c] as f64 / total as f64
        }
    });
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        per_class,
        confusion,
    })
}
