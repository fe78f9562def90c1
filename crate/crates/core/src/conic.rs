//! Thin model builder over the Clarabel interior-point solver.
//!
//! Models are stated as `min c'x` subject to linear equalities, linear `<=`
//! rows, nonnegativity of selected variables and rotated quadratic cones
//! `z² <= x·y` (x, y >= 0). Duals are reported in the usual LP sign
//! convention: the reduced cost of a column `a` with cost `c` is
//! `c - Σ_r a_r · y_r`, and it is nonnegative for every column at an optimum.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Row {
    Eq(usize),
    Le(usize),
}

#[derive(Default)]
pub(crate) struct ConicModel {
    cost: Vec<f64>,
    nonneg: Vec<bool>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    le: Vec<(Vec<(usize, f64)>, f64)>,
    rotated: Vec<[usize; 3]>,
}

pub(crate) struct ConicSolution {
    pub x: Vec<f64>,
    eq_duals: Vec<f64>,
    le_duals: Vec<f64>,
    pub objective: f64,
}

impl ConicSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, row: Row) -> f64 {
        match row {
            Row::Eq(i) => self.eq_duals[i],
            Row::Le(i) => self.le_duals[i],
        }
    }
}

impl ConicModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, nonneg: bool) -> Var {
        self.cost.push(cost);
        self.nonneg.push(nonneg);
        Var(self.cost.len() - 1)
    }

    pub fn add_eq(&mut self, terms: Vec<(Var, f64)>, rhs: f64) -> Row {
        self.eq.push((terms.into_iter().map(|(v, a)| (v.0, a)).collect(), rhs));
        Row::Eq(self.eq.len() - 1)
    }

    pub fn add_le(&mut self, terms: Vec<(Var, f64)>, rhs: f64) -> Row {
        self.le.push((terms.into_iter().map(|(v, a)| (v.0, a)).collect(), rhs));
        Row::Le(self.le.len() - 1)
    }

    /// Adds the constraint `z² <= x·y` with `x, y >= 0`.
    pub fn add_rotated_cone(&mut self, x: Var, y: Var, z: Var) {
        self.rotated.push([x.0, y.0, z.0]);
    }

    pub fn solve(&self, tolerance: f64) -> Result<ConicSolution> {
        let n = self.cost.len();
        let n_eq = self.eq.len();
        let nonneg_vars: Vec<usize> = (0..n).filter(|&v| self.nonneg[v]).collect();
        let n_lin = self.le.len() + nonneg_vars.len();
        let m = n_eq + n_lin + 3 * self.rotated.len();

        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut row = 0;
        for (terms, rhs) in self.eq.iter().chain(&self.le) {
            triplets.extend(terms.iter().map(|&(v, a)| (row, v, a)));
            b.push(*rhs);
            row += 1;
        }
        for &v in &nonneg_vars {
            triplets.push((row, v, -1.0));
            b.push(0.0);
            row += 1;
        }
        // (x + y, x - y, 2z) in the second-order cone  <=>  z² <= x·y.
        for &[x, y, z] in &self.rotated {
            triplets.push((row, x, -1.0));
            triplets.push((row, y, -1.0));
            triplets.push((row + 1, x, -1.0));
            triplets.push((row + 1, y, 1.0));
            triplets.push((row + 2, z, -2.0));
            b.extend([0.0, 0.0, 0.0]);
            row += 3;
        }
        debug_assert_eq!(row, m);

        let a = csc(m, n, triplets);
        let p = CscMatrix::zeros((n, n));
        let mut cones = Vec::with_capacity(2 + self.rotated.len());
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        if n_lin > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_lin));
        }
        cones.extend(self.rotated.iter().map(|_| SupportedConeT::SecondOrderConeT(3)));

        let settings = DefaultSettings {
            verbose: false,
            max_iter: 200,
            tol_gap_abs: tolerance,
            tol_gap_rel: tolerance,
            tol_feas: tolerance,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &self.cost, &a, &b, &cones, settings);
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(Error::Infeasible(format!(
                    "conic program reported {:?}",
                    sol.status
                )))
            }
            other => {
                return Err(Error::SolverFailure(format!(
                    "interior-point solver stopped with status {other:?} after {} iterations",
                    sol.iterations
                )))
            }
        };
        let y: Vec<f64> = sol.z.iter().map(|z| -z).collect();
        Ok(ConicSolution {
            x: sol.x.clone(),
            eq_duals: y[..n_eq].to_vec(),
            le_duals: y[n_eq..n_eq + self.le.len()].to_vec(),
            objective: sol.obj_val,
        })
    }
}

fn csc(m: usize, n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        last = Some((r, c));
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
