//! Least-favorable distributions for Wasserstein-robust binary testing.
//!
//! Both hypotheses are balls `{P : W_p(P, Q_k) <= θ_k}` restricted to the
//! pooled support of `Q1` and `Q2`. With the exponential surrogate the best
//! detector is available in closed form, `φ* = ½ log(p1/p2)`, and the
//! remaining maximization over the balls is
//!
//! ```text
//! max Σ_l 2√(p1_l p2_l)
//! ```
//!
//! which is solved as a second-order cone program: each term is replaced by
//! a hypograph variable `s_l` with `s_l² <= p1_l p2_l` (a rotated cone), and
//! ball membership is stated through couplings `γ_k` with a cost budget
//! `⟨C, γ_k⟩ <= θ_k^p`.
//!
//! The separated variant additionally asks for a coupling `γ_3` of `(p1, p2)`
//! with cost at least `γ^p`. That only says *some* coupling is expensive, not
//! the optimal one, so it is weaker than `W_p(p1, p2) >= γ`;
//! [`solve_lfd_separated`] therefore always measures the exact distance
//! afterwards and records whether the requirement really holds.

mod program;
mod risk;

use serde::{Deserialize, Serialize};

pub use risk::{log_ratio, pointwise_risk, risk_at, surrogate_risk, DETECTOR_EPSILON};

use crate::dist::{pooled_support, validate_distribution, Coupling, CostMatrix, DiscreteDistribution, Exponent, Point};
use crate::error::{Error, Result};
use crate::transport::{cost_matrix, dot, exact_ot_weights, max_cost_coupling, wasserstein};
use program::{Flows, Program, ProgramOptions, ProgramSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LfdStatus {
    Optimal,
    IterationLimit,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfdCouplings {
    pub gamma1: Coupling,
    pub gamma2: Coupling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma3: Option<Coupling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfdSolution {
    pub support: Vec<Point>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub theta1: f64,
    pub theta2: f64,
    pub exponent: Exponent,
    pub gamma_sep: Option<f64>,
    pub lambda_pen: Option<f64>,
    /// Surrogate risk `Σ 2√(p1 p2)` of the returned pair.
    pub objective: f64,
    /// `objective + λ W_p^p(p1, p2)` for the penalized variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalized_objective: Option<f64>,
    /// `W_p(p1, p2)` computed exactly after the solve.
    pub exact_separation: f64,
    /// Whether `exact_separation >= gamma_sep`, when a separation was asked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_satisfied: Option<bool>,
    pub status: LfdStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<LfdCouplings>,
    /// Penalized objective after each accepted outer step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ccp_history: Vec<f64>,
}

impl LfdSolution {
    pub fn lfd1(&self) -> Result<DiscreteDistribution> {
        validate_distribution(self.support.clone(), self.p1.clone())
    }

    pub fn lfd2(&self) -> Result<DiscreteDistribution> {
        validate_distribution(self.support.clone(), self.p2.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct LfdOptions {
    /// Return dense `γ` matrices in the solution.
    pub keep_couplings: bool,
    /// Interior-point feasibility and gap tolerance.
    pub tolerance: f64,
    /// Coupling blocks up to this many arcs are built in full; larger ones
    /// are priced in.
    pub full_arc_limit: usize,
    pub initial_neighbors: usize,
    pub arcs_per_round: usize,
    pub max_pricing_rounds: usize,
    /// An excluded arc enters when its reduced cost is below `-pricing_tolerance`.
    /// Each coupling carries unit mass, so the objective lost to arcs left
    /// out is at most about this much per coupling.
    pub pricing_tolerance: f64,
}

impl Default for LfdOptions {
    fn default() -> Self {
        Self {
            keep_couplings: true,
            tolerance: 1e-9,
            full_arc_limit: 20_000,
            initial_neighbors: 8,
            arcs_per_round: 4_000,
            max_pricing_rounds: 200,
            pricing_tolerance: 1e-7,
        }
    }
}

impl LfdOptions {
    fn program(&self) -> ProgramOptions {
        ProgramOptions {
            pricing_tolerance: self.pricing_tolerance,
            full_arc_limit: self.full_arc_limit,
            initial_neighbors: self.initial_neighbors,
            arcs_per_round: self.arcs_per_round,
            max_rounds: self.max_pricing_rounds,
        }
    }
}

struct Setup {
    support: Vec<Point>,
    q: [Vec<f64>; 2],
    cost: CostMatrix,
}

fn check_radii(theta: [f64; 2]) -> Result<()> {
    for t in theta {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidRadius(t));
        }
    }
    Ok(())
}

fn dense(flows: &Flows, n: usize, rows: &[f64], cols: &[f64]) -> Coupling {
    let mut plan = vec![0.0; n * n];
    for &(i, j, v) in flows {
        plan[i * n + j] += v;
    }
    Coupling {
        rows: n,
        cols: n,
        plan,
        row_marginal: rows.to_vec(),
        col_marginal: cols.to_vec(),
    }
}

/// Supports up to this size get the extra directional starts of the
/// penalized solve.
const DIRECTIONAL_START_LIMIT: usize = 12;

/// Repeated least-favorable solves for one pair of centers.
///
/// The pooled support and its cost matrix are built once, and every priced
/// solve starts from the arcs the previous one ended with. Results do not
/// depend on the warm start beyond solver tolerance.
pub struct LfdSession {
    setup: Setup,
    exponent: Exponent,
    options: LfdOptions,
    arcs: Option<[Vec<(usize, usize)>; 2]>,
}

impl LfdSession {
    pub fn new(q1: &DiscreteDistribution, q2: &DiscreteDistribution, exponent: Exponent, options: LfdOptions) -> Result<Self> {
        let pooled = pooled_support(&[q1, q2])?;
        let cost = cost_matrix(&pooled.support, &pooled.support, exponent)?;
        let mut weights = pooled.weights.into_iter();
        let q = [weights.next().unwrap_or_default(), weights.next().unwrap_or_default()];
        Ok(Self {
            setup: Setup {
                support: pooled.support,
                q,
                cost,
            },
            exponent,
            options,
            arcs: None,
        })
    }

    pub fn support(&self) -> &[Point] {
        &self.setup.support
    }

    fn run(&mut self, theta: [f64; 2], separation: Option<f64>, reward: Option<[&[f64]; 2]>) -> Result<ProgramSolution> {
        let s = &self.setup;
        let sol = Program {
            cost: &s.cost,
            q: [&s.q[0], &s.q[1]],
            budget: theta.map(|t| self.exponent.cost(t)),
            separation,
            reward,
            tolerance: self.options.tolerance,
            warm: self.arcs.as_ref(),
        }
        .solve(&self.options.program())?;
        self.arcs = Some(sol.arcs.clone());
        Ok(sol)
    }

    fn finish(&self, sol: &ProgramSolution, theta: [f64; 2]) -> Result<LfdSolution> {
        let s = &self.setup;
        let n = s.support.len();
        let [p1, p2] = sol.p.clone();
        let objective = surrogate_risk(&p1, &p2)?.min(2.0);
        let exact_separation = self.exponent.root(exact_ot_weights(&p1, &p2, &s.cost)?.value.max(0.0));
        let couplings = self.options.keep_couplings.then(|| LfdCouplings {
            gamma1: dense(&sol.gamma[0], n, &s.q[0], &p1),
            gamma2: dense(&sol.gamma[1], n, &s.q[1], &p2),
            gamma3: sol.gamma3.as_ref().map(|g| dense(g, n, &p1, &p2)),
        });
        Ok(LfdSolution {
            support: s.support.clone(),
            p1,
            p2,
            theta1: theta[0],
            theta2: theta[1],
            exponent: self.exponent,
            gamma_sep: None,
            lambda_pen: None,
            objective,
            penalized_objective: None,
            exact_separation,
            separation_satisfied: None,
            status: LfdStatus::Optimal,
            couplings,
            ccp_history: Vec::new(),
        })
    }

    /// See [`solve_lfd`].
    pub fn solve(&mut self, theta1: f64, theta2: f64) -> Result<LfdSolution> {
        let theta = [theta1, theta2];
        check_radii(theta)?;
        let sol = self.run(theta, None, None)?;
        self.finish(&sol, theta)
    }

    /// See [`solve_lfd_separated`].
    pub fn solve_separated(&mut self, theta1: f64, theta2: f64, gamma_sep: f64) -> Result<LfdSolution> {
        if !(gamma_sep >= 0.0 && gamma_sep.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "separation must be nonnegative, got {gamma_sep}"
            )));
        }
        let theta = [theta1, theta2];
        check_radii(theta)?;
        let mut solution = if gamma_sep == 0.0 {
            // Any coupling qualifies; report the most expensive one.
            let sol = self.run(theta, None, None)?;
            let mut out = self.finish(&sol, theta)?;
            if let Some(c) = out.couplings.as_mut() {
                c.gamma3 = Some(max_cost_coupling(&out.p1, &out.p2, &self.setup.cost)?.1);
            }
            out
        } else {
            let sol = self.run(theta, Some(self.exponent.cost(gamma_sep)), None)?;
            self.finish(&sol, theta)?
        };
        solution.gamma_sep = Some(gamma_sep);
        let check = verify_separation(&solution)?;
        solution.separation_satisfied = Some(check.satisfied);
        Ok(solution)
    }

    /// See [`solve_lfd_penalized`].
    pub fn solve_penalized(
        &mut self,
        theta1: f64,
        theta2: f64,
        lambda_pen: f64,
        max_outer: usize,
        tol: f64,
    ) -> Result<LfdSolution> {
        if !(lambda_pen >= 0.0 && lambda_pen.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty weight must be nonnegative, got {lambda_pen}"
            )));
        }
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
        }
        let theta = [theta1, theta2];
        check_radii(theta)?;
        let base = self.run(theta, None, None)?;
        if lambda_pen == 0.0 {
            let mut out = self.finish(&base, theta)?;
            out.lambda_pen = Some(0.0);
            out.penalized_objective = Some(out.objective);
            out.ccp_history = vec![out.objective];
            return Ok(out);
        }

        let mut starts = vec![base, self.run([0.0, 0.0], None, None)?];
        let n = self.setup.support.len();
        if n <= DIRECTIONAL_START_LIMIT {
            // The penalty has one basin per direction of separation; push the
            // two distributions apart along each atom, both ways.
            for l in 0..n {
                let toward: Vec<f64> = (0..n).map(|j| lambda_pen * self.setup.cost.get(l, j)).collect();
                let away: Vec<f64> = toward.iter().map(|x| -x).collect();
                starts.push(self.run(theta, None, Some([&toward, &away]))?);
                starts.push(self.run(theta, None, Some([&away, &toward]))?);
            }
        }
        let mut best: Option<(ProgramSolution, Vec<f64>, bool)> = None;
        for start in starts {
            let (sol, history, limited) = self.ccp(start, theta, lambda_pen, max_outer, tol)?;
            let value = *history.last().unwrap_or(&f64::NEG_INFINITY);
            let better = best
                .as_ref()
                .map_or(true, |(_, h, _)| value > *h.last().unwrap_or(&f64::NEG_INFINITY));
            if better {
                best = Some((sol, history, limited));
            }
        }
        let (sol, history, limited) = best.expect("at least one start");
        let mut out = self.finish(&sol, theta)?;
        out.lambda_pen = Some(lambda_pen);
        out.penalized_objective = history.last().copied();
        out.ccp_history = history;
        if limited {
            out.status = LfdStatus::IterationLimit;
        }
        Ok(out)
    }

    fn penalized_value(&self, p: &[Vec<f64>; 2], lambda: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let ot = exact_ot_weights(&p[0], &p[1], &self.setup.cost)?;
        let value = surrogate_risk(&p[0], &p[1])? + lambda * ot.value;
        Ok((value, ot.dual_u, ot.dual_v))
    }

    fn ccp(
        &mut self,
        start: ProgramSolution,
        theta: [f64; 2],
        lambda: f64,
        max_outer: usize,
        tol: f64,
    ) -> Result<(ProgramSolution, Vec<f64>, bool)> {
        let mut current = start;
        let (mut value, mut u, mut v) = self.penalized_value(&current.p, lambda)?;
        let mut history = vec![value];
        for _ in 0..max_outer {
            let reward_u: Vec<f64> = u.iter().map(|x| lambda * x).collect();
            let reward_v: Vec<f64> = v.iter().map(|x| lambda * x).collect();
            let next = self.run(theta, None, Some([&reward_u, &reward_v]))?;
            let (next_value, next_u, next_v) = self.penalized_value(&next.p, lambda)?;
            let gain = next_value - value;
            if gain >= 0.0 {
                current = next;
                value = next_value;
                u = next_u;
                v = next_v;
                history.push(value);
            }
            if gain < tol {
                return Ok((current, history, false));
            }
        }
        Ok((current, history, true))
    }
}

/// Least-favorable pair for radii `θ1, θ2` in `W_p`, `p = exponent`.
pub fn solve_lfd(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    exponent: Exponent,
) -> Result<LfdSolution> {
    solve_lfd_with(q1, q2, theta1, theta2, exponent, &LfdOptions::default())
}

pub fn solve_lfd_with(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    exponent: Exponent,
    options: &LfdOptions,
) -> Result<LfdSolution> {
    check_radii([theta1, theta2])?;
    LfdSession::new(q1, q2, exponent, options.clone())?.solve(theta1, theta2)
}

/// [`solve_lfd`] with the extra requirement that some coupling of `(p1, p2)`
/// costs at least `gamma_sep^p`.
///
/// Returns [`Error::Infeasible`] when no pair in the balls admits such a
/// coupling. The exact distance of the result is checked with
/// [`verify_separation`] and stored in `separation_satisfied`.
pub fn solve_lfd_separated(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    gamma_sep: f64,
    exponent: Exponent,
) -> Result<LfdSolution> {
    solve_lfd_separated_with(q1, q2, theta1, theta2, gamma_sep, exponent, &LfdOptions::default())
}

pub fn solve_lfd_separated_with(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    gamma_sep: f64,
    exponent: Exponent,
    options: &LfdOptions,
) -> Result<LfdSolution> {
    check_radii([theta1, theta2])?;
    LfdSession::new(q1, q2, exponent, options.clone())?.solve_separated(theta1, theta2, gamma_sep)
}

/// Convex–concave iteration for `max Σ 2√(p1 p2) + λ W_p^p(p1, p2)` over
/// the two balls.
///
/// The transport term is convex in `(p1, p2)`; each outer step replaces it
/// by its linear minorant from the Kantorovich potentials at the current
/// pair and solves the resulting concave program. Every accepted step
/// raises the penalized objective, and the loop stops once the gain falls
/// below `tol`. Two starts are tried, the unpenalized solution and the
/// centers, and the better end point is kept. Only stationarity is claimed.
#[allow(clippy::too_many_arguments)]
pub fn solve_lfd_penalized(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    lambda_pen: f64,
    exponent: Exponent,
    max_outer: usize,
    tol: f64,
) -> Result<LfdSolution> {
    solve_lfd_penalized_with(q1, q2, theta1, theta2, lambda_pen, exponent, max_outer, tol, &LfdOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn solve_lfd_penalized_with(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    lambda_pen: f64,
    exponent: Exponent,
    max_outer: usize,
    tol: f64,
    options: &LfdOptions,
) -> Result<LfdSolution> {
    check_radii([theta1, theta2])?;
    LfdSession::new(q1, q2, exponent, options.clone())?.solve_penalized(theta1, theta2, lambda_pen, max_outer, tol)
}

/// Detector values `φ*_l = ½ log(p1_l / p2_l)` on the solution's support.
pub fn detector(solution: &LfdSolution) -> Vec<f64> {
    solution
        .p1
        .iter()
        .zip(&solution.p2)
        .map(|(&a, &b)| log_ratio(a, b))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub exact_w: f64,
    pub satisfied: bool,
}

/// Exact `W_p(p1, p2)` compared against the requested separation (taken
/// as zero when the solution has none).
pub fn verify_separation(solution: &LfdSolution) -> Result<SeparationCheck> {
    let cost = cost_matrix(&solution.support, &solution.support, solution.exponent)?;
    let t = exact_ot_weights(&solution.p1, &solution.p2, &cost)?.value.max(0.0);
    let exact_w = solution.exponent.root(t);
    let gamma = solution.gamma_sep.unwrap_or(0.0);
    Ok(SeparationCheck {
        exact_w,
        satisfied: exact_w >= gamma - 1e-6,
    })
}

/// `W_p(Q1, Q2) - θ1 - θ2 >= γ`: by the triangle inequality every pair in
/// the two balls is then at least `γ` apart.
pub fn triangle_feasible(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta1: f64,
    theta2: f64,
    gamma_sep: f64,
    exponent: Exponent,
) -> Result<bool> {
    Ok(wasserstein(q1, q2, exponent)? - theta1 - theta2 >= gamma_sep)
}

/// `⟨f, p1⟩ - ⟨f, p2⟩` for a witness `f` on `support`. When `f` is
/// 1-Lipschitz this is a lower bound on `W_1(p1, p2)`, tight at an optimal
/// Kantorovich potential.
pub fn kr_dual_bound(support: &[Point], p1: &[f64], p2: &[f64], witness: &[f64], lipschitz_check: bool) -> Result<f64> {
    for len in [p1.len(), p2.len(), witness.len()] {
        if len != support.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                found: len,
            });
        }
    }
    if lipschitz_check {
        for a in 0..support.len() {
            for b in a + 1..support.len() {
                let d = support[a].distance(&support[b]);
                let gap = (witness[a] - witness[b]).abs();
                if gap > d + 1e-9 * (1.0 + d) {
                    return Err(Error::LipschitzViolation { a, b, slope: gap / d });
                }
            }
        }
    }
    Ok(dot(witness, p1) - dot(witness, p2))
}
