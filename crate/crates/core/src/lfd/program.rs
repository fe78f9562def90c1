//! The least-favorable-distribution program on a pooled support of size `n`:
//!
//! ```text
//! max  Σ_l 2 s_l + ⟨r1, p1⟩ + ⟨r2, p2⟩
//! s.t. s_l² <= p1_l · p2_l
//!      γ_k 1 = Q_k,  γ_kᵀ 1 = p_k,  ⟨C, γ_k⟩ <= θ_k^p       (k = 1, 2)
//!      γ_3 1 = p1,   γ_3ᵀ 1 = p2,   ⟨C, γ_3⟩ >= γ^p          (optional)
//! ```
//!
//! Rows of `γ_k` where `Q_k` has no mass are identically zero and are left
//! out. When the coupling blocks are large they are generated by pricing:
//! each block starts from a few cheap arcs and an arc is added whenever its
//! reduced cost under the current duals is negative, so the restricted
//! optimum is the full optimum once no arc prices out.

use crate::conic::{ConicModel, Row, Var};
use crate::dist::CostMatrix;
use crate::error::{Error, Result};
use crate::transport::max_cost_coupling;

#[derive(Clone, Debug)]
pub(crate) struct ProgramOptions {
    pub pricing_tolerance: f64,
    pub full_arc_limit: usize,
    pub initial_neighbors: usize,
    pub arcs_per_round: usize,
    pub max_rounds: usize,
}

pub(crate) struct Program<'a> {
    pub cost: &'a CostMatrix,
    pub q: [&'a [f64]; 2],
    /// `θ_k^p`. Zero pins `p_k` to `Q_k`.
    pub budget: [f64; 2],
    /// `γ^p` for the `γ_3` block; `None` leaves the block out.
    pub separation: Option<f64>,
    /// Linear reward on `(p1, p2)`.
    pub reward: Option<[&'a [f64]; 2]>,
    pub tolerance: f64,
    /// Arcs `(row, col)` of an earlier solve to include from the start.
    pub warm: Option<&'a [Vec<(usize, usize)>; 2]>,
}

/// Sparse coupling: `(row, col, mass)` in pooled indexing.
pub(crate) type Flows = Vec<(usize, usize, f64)>;

pub(crate) struct ProgramSolution {
    pub p: [Vec<f64>; 2],
    pub gamma: [Flows; 2],
    pub gamma3: Option<Flows>,
    /// Final arc sets of the two coupling blocks, for warm starts.
    pub arcs: [Vec<(usize, usize)>; 2],
}

const NONE: usize = usize::MAX;

struct Arcs {
    n: usize,
    /// Pooled index of each row slot.
    rows: Vec<usize>,
    included: Vec<bool>,
    list: Vec<(usize, usize)>,
    /// No further arcs can be added.
    closed: bool,
}

impl Arcs {
    fn new(rows: Vec<usize>, n: usize) -> Self {
        Arcs {
            n,
            included: vec![false; rows.len() * n],
            rows,
            list: Vec::new(),
            closed: false,
        }
    }

    fn all(rows: Vec<usize>, n: usize) -> Self {
        let mut arcs = Arcs::new(rows, n);
        for slot in 0..arcs.rows.len() {
            for j in 0..n {
                arcs.insert(slot, j);
            }
        }
        arcs.closed = true;
        arcs
    }

    fn insert(&mut self, slot: usize, j: usize) -> bool {
        let e = slot * self.n + j;
        if self.included[e] {
            return false;
        }
        self.included[e] = true;
        self.list.push((slot, j));
        true
    }

    /// Adds the most negative reduced-cost arc of every row and every column.
    fn price(&mut self, rc: impl Fn(usize, usize) -> f64, tolerance: f64, limit: usize) -> usize {
        if self.closed {
            return 0;
        }
        let slots = self.rows.len();
        let mut by_row = vec![(-tolerance, NONE); slots];
        let mut by_col = vec![(-tolerance, NONE); self.n];
        for (slot, best) in by_row.iter_mut().enumerate() {
            for (j, col_best) in by_col.iter_mut().enumerate() {
                if self.included[slot * self.n + j] {
                    continue;
                }
                let r = rc(slot, j);
                if r < best.0 {
                    *best = (r, j);
                }
                if r < col_best.0 {
                    *col_best = (r, slot);
                }
            }
        }
        let mut candidates: Vec<(f64, usize, usize)> = by_row
            .iter()
            .enumerate()
            .filter(|(_, b)| b.1 != NONE)
            .map(|(slot, b)| (b.0, slot, b.1))
            .chain(
                by_col
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.1 != NONE)
                    .map(|(j, b)| (b.0, b.1, j)),
            )
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut added = 0;
        for (_, slot, j) in candidates {
            if added >= limit {
                break;
            }
            if self.insert(slot, j) {
                added += 1;
            }
        }
        added
    }

    fn flows(&self, values: &[f64]) -> Flows {
        self.list
            .iter()
            .zip(values)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&(slot, j), &v)| (self.rows[slot], j, v))
            .collect()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        self.list.iter().map(|&(slot, j)| (self.rows[slot], j)).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Risk,
    /// Largest attainable `⟨C, γ_3⟩`, used to decide feasibility of the
    /// separation row before the main solve.
    MaxSeparation,
}

struct Restricted {
    objective: f64,
    p: [Vec<f64>; 2],
    flows: [Vec<f64>; 3],
    row_duals: [Vec<f64>; 2],
    link_duals: [Vec<f64>; 2],
    budget_duals: [f64; 2],
    /// `γ_3` duals: row links, column links and the separation row.
    sep_duals: (Vec<f64>, Vec<f64>, f64),
}

impl Program<'_> {
    fn n(&self) -> usize {
        self.cost.rows()
    }

    fn coupling_arcs(&self, k: usize, options: &ProgramOptions) -> Arcs {
        let n = self.n();
        let rows: Vec<usize> = (0..n).filter(|&i| self.q[k][i] > 0.0).collect();
        if self.budget[k] <= 0.0 {
            let mut arcs = Arcs::new(rows, n);
            for slot in 0..arcs.rows.len() {
                let i = arcs.rows[slot];
                arcs.insert(slot, i);
            }
            arcs.closed = true;
            return arcs;
        }
        if rows.len() * n <= options.full_arc_limit {
            return Arcs::all(rows, n);
        }
        let mut arcs = Arcs::new(rows, n);
        let keep = options.initial_neighbors.clamp(1, n);
        for slot in 0..arcs.rows.len() {
            let i = arcs.rows[slot];
            let row = self.cost.row(i);
            let mut order: Vec<usize> = (0..n).collect();
            order.select_nth_unstable_by(keep - 1, |&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            arcs.insert(slot, i);
            for &j in &order[..keep] {
                arcs.insert(slot, j);
            }
        }
        if let Some(warm) = self.warm {
            let mut slot_of = vec![NONE; n];
            for (slot, &i) in arcs.rows.iter().enumerate() {
                slot_of[i] = slot;
            }
            for &(i, j) in &warm[k] {
                if i < n && j < n && slot_of[i] != NONE {
                    arcs.insert(slot_of[i], j);
                }
            }
        }
        arcs
    }

    /// Starting arcs for `γ_3`: the diagonal plus the support of the most
    /// expensive coupling of the centers, which makes `p_k = Q_k` feasible.
    fn separation_arcs(&self, options: &ProgramOptions) -> Result<Arcs> {
        let n = self.n();
        if n * n <= options.full_arc_limit {
            return Ok(Arcs::all((0..n).collect(), n));
        }
        let mut arcs = Arcs::new((0..n).collect(), n);
        for i in 0..n {
            arcs.insert(i, i);
        }
        let (_, plan) = max_cost_coupling(self.q[0], self.q[1], self.cost)?;
        for i in 0..n {
            for j in 0..n {
                if plan.get(i, j) > 0.0 {
                    arcs.insert(i, j);
                }
            }
        }
        Ok(arcs)
    }

    pub fn solve(&self, options: &ProgramOptions) -> Result<ProgramSolution> {
        let mut arcs = [self.coupling_arcs(0, options), self.coupling_arcs(1, options)];
        let Some(target) = self.separation else {
            let r = self.price_loop(Mode::Risk, &mut arcs, None, None, options)?;
            return Ok(self.extract(&r, &arcs, None));
        };

        let mut sep_arcs = self.separation_arcs(options)?;
        let first = self.price_loop(Mode::MaxSeparation, &mut arcs, Some(&mut sep_arcs), None, options)?;
        let attainable = -first.objective;
        let slack = self.tolerance.sqrt() * (1.0 + target);
        if attainable < target - slack {
            return Err(Error::Infeasible(format!(
                "no coupling of distributions in the two balls costs {target}; the largest attainable is {attainable}"
            )));
        }
        let rhs = target.min(attainable);
        let r = self.price_loop(Mode::Risk, &mut arcs, Some(&mut sep_arcs), Some(rhs), options)?;
        Ok(self.extract(&r, &arcs, Some(&sep_arcs)))
    }

    fn extract(&self, r: &Restricted, arcs: &[Arcs; 2], sep: Option<&Arcs>) -> ProgramSolution {
        // Interior-point iterates leave dust of the order of the tolerance on
        // atoms that should be empty; it would otherwise dominate log-ratios.
        let dust = 10.0 * self.tolerance;
        let clean = |p: &[f64]| {
            let mut p: Vec<f64> = p.iter().map(|&x| if x > dust { x } else { 0.0 }).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            p
        };
        ProgramSolution {
            p: [clean(&r.p[0]), clean(&r.p[1])],
            gamma: [arcs[0].flows(&r.flows[0]), arcs[1].flows(&r.flows[1])],
            gamma3: sep.map(|a| a.flows(&r.flows[2])),
            arcs: [arcs[0].pairs(), arcs[1].pairs()],
        }
    }

    fn price_loop(
        &self,
        mode: Mode,
        arcs: &mut [Arcs; 2],
        mut sep: Option<&mut Arcs>,
        sep_rhs: Option<f64>,
        options: &ProgramOptions,
    ) -> Result<Restricted> {
        let tol = options.pricing_tolerance;
        let limit = options.arcs_per_round.max(1);
        for _ in 0..options.max_rounds {
            let r = self.solve_restricted(mode, arcs, sep.as_deref(), sep_rhs)?;
            let mut added = 0;
            for k in 0..2 {
                let block = &mut arcs[k];
                let rows = block.rows.clone();
                let (yr, yl, yb) = (&r.row_duals[k], &r.link_duals[k], r.budget_duals[k]);
                added += block.price(|slot, j| -yr[slot] - yl[j] - self.cost.get(rows[slot], j) * yb, tol, limit);
            }
            if let Some(block) = sep.as_deref_mut() {
                let (ya, yb, ys) = (&r.sep_duals.0, &r.sep_duals.1, r.sep_duals.2);
                added += match mode {
                    Mode::Risk => block.price(|i, j| -ya[i] - yb[j] + self.cost.get(i, j) * ys, tol, limit),
                    Mode::MaxSeparation => block.price(|i, j| -self.cost.get(i, j) - ya[i] - yb[j], tol, limit),
                };
            }
            if added == 0 {
                return Ok(r);
            }
        }
        Err(Error::SolverFailure(format!(
            "arc pricing did not settle within {} rounds",
            options.max_rounds
        )))
    }

    fn solve_restricted(
        &self,
        mode: Mode,
        arcs: &[Arcs; 2],
        sep: Option<&Arcs>,
        sep_rhs: Option<f64>,
    ) -> Result<Restricted> {
        let n = self.n();
        let mut model = ConicModel::new();
        let mut p: [Vec<Var>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for (k, pk) in p.iter_mut().enumerate() {
            for j in 0..n {
                let reward = match (mode, self.reward) {
                    (Mode::Risk, Some(r)) => r[k][j],
                    _ => 0.0,
                };
                pk.push(model.add_var(-reward, true));
            }
        }
        if mode == Mode::Risk {
            for j in 0..n {
                let s = model.add_var(-2.0, false);
                model.add_rotated_cone(p[0][j], p[1][j], s);
            }
        }

        let mut flow_vars: [Vec<Var>; 3] = Default::default();
        let mut row_rows: [Vec<Row>; 2] = Default::default();
        let mut link_rows: [Vec<Row>; 2] = Default::default();
        let mut budget_rows: [Option<Row>; 2] = [None, None];
        for k in 0..2 {
            let block = &arcs[k];
            let mut row_terms: Vec<Vec<(Var, f64)>> = vec![Vec::new(); block.rows.len()];
            let mut link_terms: Vec<Vec<(Var, f64)>> = (0..n).map(|j| vec![(p[k][j], -1.0)]).collect();
            let mut budget_terms = Vec::new();
            for &(slot, j) in &block.list {
                let v = model.add_var(0.0, true);
                flow_vars[k].push(v);
                row_terms[slot].push((v, 1.0));
                link_terms[j].push((v, 1.0));
                let c = self.cost.get(block.rows[slot], j);
                if c != 0.0 {
                    budget_terms.push((v, c));
                }
            }
            row_rows[k] = row_terms
                .into_iter()
                .zip(&block.rows)
                .map(|(terms, &i)| model.add_eq(terms, self.q[k][i]))
                .collect();
            link_rows[k] = link_terms.into_iter().map(|t| model.add_eq(t, 0.0)).collect();
            if self.budget[k] > 0.0 {
                budget_rows[k] = Some(model.add_le(budget_terms, self.budget[k]));
            }
        }

        let mut sep_rows: Option<(Vec<Row>, Vec<Row>, Option<Row>)> = None;
        if let Some(block) = sep {
            let mut a_terms: Vec<Vec<(Var, f64)>> = (0..n).map(|i| vec![(p[0][i], -1.0)]).collect();
            let mut b_terms: Vec<Vec<(Var, f64)>> = (0..n).map(|j| vec![(p[1][j], -1.0)]).collect();
            let mut sep_terms = Vec::new();
            for &(i, j) in &block.list {
                let c = self.cost.get(i, j);
                let v = model.add_var(if mode == Mode::MaxSeparation { -c } else { 0.0 }, true);
                flow_vars[2].push(v);
                a_terms[i].push((v, 1.0));
                b_terms[j].push((v, 1.0));
                if c != 0.0 {
                    sep_terms.push((v, -c));
                }
            }
            let a_rows = a_terms.into_iter().map(|t| model.add_eq(t, 0.0)).collect();
            let b_rows = b_terms.into_iter().map(|t| model.add_eq(t, 0.0)).collect();
            let sep_row = match (mode, sep_rhs) {
                (Mode::Risk, Some(rhs)) => Some(model.add_le(sep_terms, -rhs)),
                _ => None,
            };
            sep_rows = Some((a_rows, b_rows, sep_row));
        }

        let sol = model.solve(self.tolerance)?;
        let values = |vars: &[Var]| vars.iter().map(|&v| sol.value(v)).collect::<Vec<_>>();
        let duals = |rows: &[Row]| rows.iter().map(|&r| sol.dual(r)).collect::<Vec<_>>();
        let sep_duals = match &sep_rows {
            Some((a, b, s)) => (duals(a), duals(b), s.map_or(0.0, |r| sol.dual(r))),
            None => (Vec::new(), Vec::new(), 0.0),
        };
        Ok(Restricted {
            objective: sol.objective,
            p: [values(&p[0]), values(&p[1])],
            flows: [values(&flow_vars[0]), values(&flow_vars[1]), values(&flow_vars[2])],
            row_duals: [duals(&row_rows[0]), duals(&row_rows[1])],
            link_duals: [duals(&link_rows[0]), duals(&link_rows[1])],
            budget_duals: [
                budget_rows[0].map_or(0.0, |r| sol.dual(r)),
                budget_rows[1].map_or(0.0, |r| sol.dual(r)),
            ],
            sep_duals,
        })
    }
}
