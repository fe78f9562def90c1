//! Discrete optimal transport.
//!
//! Exact transport costs come from a network simplex that returns an optimal
//! coupling together with Kantorovich potentials; [`sinkhorn`] provides an
//! entropic approximation and [`barycenter`] the fixed-support Wasserstein
//! barycenter used to center uncertainty sets.

mod barycenter;
mod simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};

pub use barycenter::{barycenter, barycenter_objective, barycenter_with, union_support, BarycenterOptions, BarycenterResult};
pub use sinkhorn::sinkhorn;

use crate::dist::{Coupling, CostMatrix, DiscreteDistribution, Exponent, Point};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OtStatus {
    Optimal,
    Converged,
    IterationLimit,
}

/// Transport cost, plan and dual potentials.
///
/// For exact solves `value = ⟨cost, coupling⟩`, `u_l + v_m <= cost[l][m]`
/// and `⟨u, μ⟩ + ⟨v, ν⟩ = value`, all up to floating-point rounding.
#[derive(Clone, Debug)]
pub struct OtResult {
    pub value: f64,
    pub coupling: Coupling,
    pub dual_u: Vec<f64>,
    pub dual_v: Vec<f64>,
    pub status: OtStatus,
    pub iterations: usize,
}

impl OtResult {
    pub fn dual_value(&self) -> f64 {
        dot(&self.dual_u, &self.coupling.row_marginal) + dot(&self.dual_v, &self.coupling.col_marginal)
    }

    /// Largest violation of `u_l + v_m <= cost[l][m]`.
    pub fn dual_infeasibility(&self, cost: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (l, u) in self.dual_u.iter().enumerate() {
            for (m, v) in self.dual_v.iter().enumerate() {
                worst = worst.max(u + v - cost.get(l, m));
            }
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise costs `‖x - y‖^p` between two point lists.
pub fn cost_matrix(x: &[Point], y: &[Point], exponent: Exponent) -> Result<CostMatrix> {
    if let (Some(a), Some(b)) = (x.first(), y.first()) {
        let dim = a.dim();
        if let Some(bad) = x.iter().chain(y).find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        debug_assert_eq!(b.dim(), dim);
    }
    let exec = if x.len() * y.len() >= 1 << 16 {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let rows = par::map(exec, x, |a| {
        y.iter().map(|b| exponent.cost_between(a, b)).collect::<Vec<_>>()
    });
    Ok(CostMatrix::from_entries(x.len(), y.len(), exponent, rows.concat()))
}

fn check_shape(a: &[f64], b: &[f64], cost: &CostMatrix) -> Result<()> {
    if cost.rows() != a.len() {
        return Err(Error::LengthMismatch {
            expected: cost.rows(),
            found: a.len(),
        });
    }
    if cost.cols() != b.len() {
        return Err(Error::LengthMismatch {
            expected: cost.cols(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Exact optimal transport between `mu` and `nu` under `cost`, whose rows
/// index `mu`'s support and columns `nu`'s.
pub fn exact_ot(mu: &DiscreteDistribution, nu: &DiscreteDistribution, cost: &CostMatrix) -> Result<OtResult> {
    exact_ot_weights(mu.weights(), nu.weights(), cost)
}

/// [`exact_ot`] on raw weight vectors (each nonnegative, summing to one).
pub fn exact_ot_weights(a: &[f64], b: &[f64], cost: &CostMatrix) -> Result<OtResult> {
    check_shape(a, b, cost)?;
    let sol = simplex::solve(a, b, cost)?;
    Ok(OtResult {
        value: sol.value,
        coupling: Coupling {
            rows: a.len(),
            cols: b.len(),
            plan: sol.plan,
            row_marginal: a.to_vec(),
            col_marginal: b.to_vec(),
        },
        dual_u: sol.u,
        dual_v: sol.v,
        status: OtStatus::Optimal,
        iterations: sol.pivots,
    })
}

/// `W_p(mu, nu)` with Euclidean ground metric.
pub fn wasserstein(mu: &DiscreteDistribution, nu: &DiscreteDistribution, exponent: Exponent) -> Result<f64> {
    let cost = cost_matrix(mu.support(), nu.support(), exponent)?;
    Ok(exponent.root(exact_ot(mu, nu, &cost)?.value))
}

/// Coupling of `p1` and `p2` with the largest total cost.
///
/// A coupling with cost at least `γ` exists iff this value is at least `γ`,
/// which is why it certifies feasibility of a separation constraint stated
/// on some coupling rather than on the optimal one.
pub fn max_cost_coupling(p1: &[f64], p2: &[f64], cost: &CostMatrix) -> Result<(f64, Coupling)> {
    check_shape(p1, p2, cost)?;
    let sol = simplex::solve(p1, p2, &cost.negated())?;
    Ok((
        -sol.value,
        Coupling {
            rows: p1.len(),
            cols: p2.len(),
            plan: sol.plan,
            row_marginal: p1.to_vec(),
            col_marginal: p2.to_vec(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::scalar(x)).collect()
    }

    fn p2(x: f64, y: f64) -> Point {
        Point::new(vec![x, y]).unwrap()
    }

    #[test]
    fn cost_matrix_examples() {
        let c = cost_matrix(&line(&[0.0, 3.0]), &line(&[0.0, 3.0]), Exponent::One).unwrap();
        assert_eq!(c.entries(), &[0.0, 3.0, 3.0, 0.0]);
        let c = cost_matrix(&[p2(0.0, 0.0)], &[p2(3.0, 4.0)], Exponent::Two).unwrap();
        assert_eq!(c.entries(), &[25.0]);
        for e in [Exponent::One, Exponent::Two] {
            let c = cost_matrix(&line(&[0.0]), &line(&[0.0]), e).unwrap();
            assert_eq!(c.entries(), &[0.0]);
        }
    }

    #[test]
    fn cost_matrix_dimension_mismatch() {
        let err = cost_matrix(&line(&[0.0]), &[p2(0.0, 0.0)], Exponent::One).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn dirac_to_dirac() {
        let mu = DiscreteDistribution::dirac(Point::scalar(0.0));
        let nu = DiscreteDistribution::dirac(Point::scalar(1.0));
        let cost = cost_matrix(mu.support(), nu.support(), Exponent::One).unwrap();
        let r = exact_ot(&mu, &nu, &cost).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.coupling.plan, vec![1.0]);
    }

    #[test]
    fn split_mass_to_one_point() {
        // The only feasible coupling sends both halves to 1: cost 0.5 * 1.
        let mu = DiscreteDistribution::uniform(line(&[0.0, 1.0])).unwrap();
        let nu = DiscreteDistribution::dirac(Point::scalar(1.0));
        let cost = cost_matrix(mu.support(), nu.support(), Exponent::One).unwrap();
        let r = exact_ot(&mu, &nu, &cost).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        let mu = DiscreteDistribution::uniform(vec![p2(0.0, 0.0), p2(1.0, 2.0)]).unwrap();
        assert!(wasserstein(&mu, &mu, Exponent::Two).unwrap().abs() < 1e-12);
        let a = DiscreteDistribution::dirac(p2(0.0, 0.0));
        let b = DiscreteDistribution::dirac(p2(3.0, 4.0));
        assert!((wasserstein(&a, &b, Exponent::Two).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_rows_get_potentials() {
        let support = line(&[0.0, 1.0, 5.0]);
        let cost = cost_matrix(&support, &support, Exponent::One).unwrap();
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 0.5, 0.5];
        let r = exact_ot_weights(&a, &b, &cost).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
        assert!(r.dual_u.iter().chain(&r.dual_v).all(|x| x.is_finite()));
        assert!(r.dual_infeasibility(&cost) < 1e-9);
        assert!((r.dual_value() - r.value).abs() < 1e-9);
    }

    #[test]
    fn max_cost_examples() {
        let support = line(&[0.0, 1.0]);
        let cost = cost_matrix(&support, &support, Exponent::One).unwrap();
        let (v, _) = max_cost_coupling(&[1.0, 0.0], &[0.0, 1.0], &cost).unwrap();
        assert_eq!(v, 1.0);
        let (v, plan) = max_cost_coupling(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!((plan.get(0, 1) - 0.5).abs() < 1e-12);
        let (v, _) = max_cost_coupling(&[1.0, 0.0], &[1.0, 0.0], &cost).unwrap();
        assert_eq!(v, 0.0);
    }
}
