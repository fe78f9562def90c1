//! Fixed-support Wasserstein barycenter.
//!
//! Minimizes `Σ_m w_m W₂²(C, S_m)` over weights `C` on a fixed support by
//! solving one linear program in the weights and the `M` couplings. Large
//! programs are handled by pricing transport arcs: the program starts from
//! arcs between nearby atoms and grows until no excluded arc has negative
//! reduced cost, which makes the restricted optimum optimal for the full
//! program.

use crate::conic::{ConicModel, Row, Var};
use crate::dist::{validate_distribution, DiscreteDistribution, Exponent, Point};
use crate::error::{Error, Result};

use super::{cost_matrix, exact_ot};

#[derive(Clone, Debug)]
pub struct BarycenterOptions {
    /// Per-source weights; uniform `1/M` when `None`.
    pub source_weights: Option<Vec<f64>>,
    /// Programs with at most this many transport arcs are solved in one shot.
    pub full_arc_limit: usize,
    /// Nearest source atoms linked to each support atom in the first program.
    pub initial_neighbors: usize,
    /// Arcs added per pricing round.
    pub arcs_per_round: usize,
    pub max_rounds: usize,
    pub tolerance: f64,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self {
            source_weights: None,
            full_arc_limit: 20_000,
            initial_neighbors: 4,
            arcs_per_round: 4000,
            max_rounds: 200,
            tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BarycenterResult {
    pub distribution: DiscreteDistribution,
    /// `Σ_m w_m W₂²(C, S_m)` at the returned weights.
    pub objective: f64,
    pub pricing_rounds: usize,
}

/// Union of the source supports in order of first appearance.
pub fn union_support(sources: &[DiscreteDistribution]) -> Vec<Point> {
    let refs: Vec<&DiscreteDistribution> = sources.iter().collect();
    match crate::dist::pooled_support(&refs) {
        Ok(pooled) => pooled.support,
        Err(_) => Vec::new(),
    }
}

/// Barycenter with uniform source weights on `support`.
pub fn barycenter(sources: &[DiscreteDistribution], support: &[Point]) -> Result<DiscreteDistribution> {
    Ok(barycenter_with(sources, support, &BarycenterOptions::default())?.distribution)
}

/// `Σ_m w_m W₂²(candidate, S_m)` evaluated with exact transport.
pub fn barycenter_objective(
    candidate: &DiscreteDistribution,
    sources: &[DiscreteDistribution],
    source_weights: Option<&[f64]>,
) -> Result<f64> {
    let m = sources.len();
    let mut total = 0.0;
    for (k, s) in sources.iter().enumerate() {
        let w = source_weights.map_or(1.0 / m as f64, |w| w[k]);
        let cost = cost_matrix(candidate.support(), s.support(), Exponent::Two)?;
        total += w * exact_ot(candidate, s, &cost)?.value;
    }
    Ok(total)
}

const ARCS_PER_ROW: usize = 3;

struct Source {
    weight: f64,
    /// Masses of the atoms with positive mass.
    masses: Vec<f64>,
    /// Squared distances, `support.len() x masses.len()`.
    costs: Vec<f64>,
    /// `arcs[i]` lists the source atoms linked to support atom `i`.
    arcs: Vec<Vec<usize>>,
    present: Vec<bool>,
}

impl Source {
    fn k(&self) -> usize {
        self.masses.len()
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        self.weight * self.costs[i * self.k() + j]
    }

    fn insert(&mut self, i: usize, j: usize) -> bool {
        let at = i * self.k() + j;
        if self.present[at] {
            return false;
        }
        self.present[at] = true;
        self.arcs[i].push(j);
        true
    }

    fn arc_count(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }
}

fn source_weights(options: &BarycenterOptions, m: usize) -> Result<Vec<f64>> {
    match &options.source_weights {
        Some(w) if w.len() != m => Err(Error::LengthMismatch {
            expected: m,
            found: w.len(),
        }),
        Some(w) => {
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| !(*x >= 0.0)) || !(total > 0.0) {
                return Err(Error::InvalidParameter("source weights must be nonnegative with positive sum".into()));
            }
            Ok(w.iter().map(|x| x / total).collect())
        }
        None => Ok(vec![1.0 / m as f64; m]),
    }
}

pub fn barycenter_with(
    sources: &[DiscreteDistribution],
    support: &[Point],
    options: &BarycenterOptions,
) -> Result<BarycenterResult> {
    if sources.is_empty() || support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let weights = source_weights(options, sources.len())?;
    let n = support.len();
    let mut prepared: Vec<Source> = sources
        .iter()
        .zip(&weights)
        .map(|(s, &weight)| {
            let atoms: Vec<(usize, f64)> = s.atoms().collect();
            let pts: Vec<Point> = atoms.iter().map(|&(i, _)| s.support()[i].clone()).collect();
            let costs = cost_matrix(support, &pts, Exponent::Two)?;
            Ok(Source {
                weight,
                masses: atoms.iter().map(|a| a.1).collect(),
                costs: costs.entries().to_vec(),
                arcs: vec![Vec::new(); n],
                present: vec![false; n * atoms.len()],
            })
        })
        .collect::<Result<_>>()?;

    let total_arcs: usize = prepared.iter().map(|s| n * s.k()).sum();
    if total_arcs <= options.full_arc_limit {
        for s in prepared.iter_mut() {
            for i in 0..n {
                for j in 0..s.k() {
                    s.insert(i, j);
                }
            }
        }
    } else {
        seed_arcs(&mut prepared, n, options.initial_neighbors);
    }

    for round in 0..options.max_rounds {
        let solved = solve_restricted(&prepared, n, options.tolerance)?;
        let threshold = -options.tolerance * (1.0 + solved.objective.abs());
        let added = price(&mut prepared, &solved, threshold, options.arcs_per_round.max(1));
        if added == 0 {
            let w: Vec<f64> = solved.weights.iter().map(|x| x.max(0.0)).collect();
            let total: f64 = w.iter().sum();
            let distribution = validate_distribution(support.to_vec(), w.iter().map(|x| x / total).collect())?;
            return Ok(BarycenterResult {
                distribution,
                objective: solved.objective,
                pricing_rounds: round,
            });
        }
    }
    Err(Error::SolverFailure(format!(
        "barycenter pricing did not settle within {} rounds",
        options.max_rounds
    )))
}

/// First arc set: every support atom to its nearest atoms of each source,
/// every source atom to its nearest support atom, and one hub atom linked to
/// everything so that the restricted program is feasible.
fn seed_arcs(sources: &mut [Source], n: usize, neighbors: usize) {
    let hub = (0..n)
        .map(|i| {
            let score: f64 = sources
                .iter()
                .map(|s| (0..s.k()).map(|j| s.cost(i, j) * s.masses[j]).sum::<f64>())
                .sum();
            (score, i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map_or(0, |h| h.1);
    for s in sources.iter_mut() {
        let k = s.k();
        for j in 0..k {
            s.insert(hub, j);
            let nearest = (0..n).min_by(|&a, &b| s.cost(a, j).total_cmp(&s.cost(b, j))).unwrap_or(0);
            s.insert(nearest, j);
        }
        for i in 0..n {
            let mut order: Vec<usize> = (0..k).collect();
            let take = neighbors.min(k);
            if take == 0 {
                continue;
            }
            order.select_nth_unstable_by(take - 1, |&a, &b| s.cost(i, a).total_cmp(&s.cost(i, b)).then(a.cmp(&b)));
            for &j in &order[..take] {
                s.insert(i, j);
            }
        }
    }
}

/// Adds the `ARCS_PER_ROW` most negative reduced-cost arcs of every row and
/// the most negative one of every column, keeping the best `limit` overall.
/// Returns the number of arcs added.
fn price(sources: &mut [Source], solved: &Restricted, threshold: f64, limit: usize) -> usize {
    let mut candidates: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (m, s) in sources.iter().enumerate() {
        let (y, g) = (&solved.row_duals[m], &solved.column_duals[m]);
        let k = s.k();
        let mut best_col: Vec<Option<(f64, usize)>> = vec![None; k];
        let mut row: Vec<(f64, usize)> = Vec::with_capacity(k);
        for i in 0..solved.weights.len() {
            row.clear();
            for j in 0..k {
                if s.present[i * k + j] {
                    continue;
                }
                let rc = s.cost(i, j) - y[i] - g[j];
                if rc >= threshold {
                    continue;
                }
                row.push((rc, j));
                if best_col[j].map_or(true, |b| rc < b.0) {
                    best_col[j] = Some((rc, i));
                }
            }
            if row.len() > ARCS_PER_ROW {
                row.select_nth_unstable_by(ARCS_PER_ROW - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                row.truncate(ARCS_PER_ROW);
            }
            candidates.extend(row.iter().map(|&(rc, j)| (rc, m, i, j)));
        }
        candidates.extend(best_col.iter().enumerate().filter_map(|(j, b)| b.map(|(rc, i)| (rc, m, i, j))));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let mut added = 0;
    for &(_, m, i, j) in &candidates {
        if added == limit {
            break;
        }
        if sources[m].insert(i, j) {
            added += 1;
        }
    }
    added
}

struct Restricted {
    weights: Vec<f64>,
    objective: f64,
    /// Duals of the rows tying each source's coupling to the weights.
    row_duals: Vec<Vec<f64>>,
    /// Duals of the source-marginal rows, one vector per source.
    column_duals: Vec<Vec<f64>>,
}

fn solve_restricted(sources: &[Source], n: usize, tolerance: f64) -> Result<Restricted> {
    let mut model = ConicModel::new();
    let mass: Vec<Var> = (0..n).map(|_| model.add_var(0.0, true)).collect();
    let mut row_ids: Vec<Vec<Row>> = Vec::with_capacity(sources.len());
    let mut column_ids: Vec<Vec<Row>> = Vec::with_capacity(sources.len());
    for s in sources {
        let mut col_terms: Vec<Vec<(Var, f64)>> = vec![Vec::new(); s.k()];
        let mut rows = Vec::with_capacity(n);
        for (i, arcs) in s.arcs.iter().enumerate() {
            let mut row_terms = Vec::with_capacity(arcs.len() + 1);
            for &j in arcs {
                let v = model.add_var(s.cost(i, j), true);
                row_terms.push((v, 1.0));
                col_terms[j].push((v, 1.0));
            }
            row_terms.push((mass[i], -1.0));
            rows.push(model.add_eq(row_terms, 0.0));
        }
        row_ids.push(rows);
        column_ids.push(
            col_terms
                .into_iter()
                .zip(&s.masses)
                .map(|(terms, &w)| model.add_eq(terms, w))
                .collect(),
        );
    }
    debug_assert!(sources.iter().all(|s| s.arc_count() > 0));
    let sol = model.solve(tolerance)?;
    let duals = |ids: &Vec<Vec<Row>>| ids.iter().map(|rows| rows.iter().map(|&r| sol.dual(r)).collect()).collect();
    Ok(Restricted {
        weights: mass.iter().map(|&v| sol.value(v)).collect(),
        objective: sol.objective,
        row_duals: duals(&row_ids),
        column_duals: duals(&column_ids),
    })
}
