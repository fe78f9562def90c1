//! Primal network simplex for the balanced transportation problem.
//!
//! Supply nodes are the rows with positive mass, demand nodes the columns
//! with positive mass; every supply/demand pair is joined by an uncapacitated
//! arc. An artificial root with big-M arcs gives the initial strongly
//! feasible spanning tree, and leaving arcs are chosen by the strongly
//! feasible (Cunningham) rule, which rules out cycling on degenerate pivots.

use crate::dist::CostMatrix;
use crate::error::{Error, Result};

pub(crate) struct TransportSolution {
    pub value: f64,
    /// Dense `n x m` plan in the caller's indexing.
    pub plan: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

const NONE: usize = usize::MAX;

struct Network {
    nr: usize,
    nc: usize,
    root: usize,
    n_real: usize,
    /// Active `nr x nc` block of the cost matrix.
    costs: Vec<f64>,
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `up[u]` means the arc `pred[u]` points from `u` to its parent.
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Network {
    #[inline]
    fn ends(&self, e: usize) -> (usize, usize) {
        if e < self.n_real {
            (e / self.nc, self.nr + e % self.nc)
        } else {
            let u = e - self.n_real;
            if u < self.nr {
                (u, self.root)
            } else {
                (self.root, u)
            }
        }
    }

    #[inline]
    fn cost(&self, e: usize) -> f64 {
        if e < self.n_real {
            self.costs[e]
        } else if e - self.n_real < self.nr {
            0.0
        } else {
            self.art_cost
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        let (s, t) = self.ends(e);
        self.cost(e) + self.pi[s] - self.pi[t]
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] > self.depth[b] {
                a = self.parent[a];
            } else if self.depth[b] > self.depth[a] {
                b = self.parent[b];
            } else {
                a = self.parent[a];
                b = self.parent[b];
            }
        }
        a
    }

    fn detach_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list.iter().position(|&c| c == child).expect("tree child");
        list.swap_remove(pos);
    }

    fn pivot(&mut self, entering: usize) {
        let (first, second) = self.ends(entering);
        let join = self.join(first, second);

        // Strongly feasible leaving-arc rule: strict on the first path,
        // non-strict on the second.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    on_first = true;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    on_first = false;
                }
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != NONE, "uncapacitated cycle without a blocking arc");
        let delta = delta.max(0.0);

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            u = second;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }

        let leaving = self.pred[u_out];
        self.in_tree[leaving] = false;
        self.in_tree[entering] = true;

        // The subtree hanging below `u_out` is re-rooted at the endpoint of
        // the entering arc that lies inside it.
        let (u_in, v_in) = if on_first { (first, second) } else { (second, first) };
        let mut path = vec![u_in];
        while *path.last().unwrap() != u_out {
            let w = *path.last().unwrap();
            path.push(self.parent[w]);
        }
        let old_parent = self.parent[u_out];
        self.detach_child(old_parent, u_out);
        let old: Vec<(usize, bool)> = path.iter().map(|&w| (self.pred[w], self.up[w])).collect();
        for i in 0..path.len() - 1 {
            let (child, parent) = (path[i + 1], path[i]);
            self.detach_child(child, parent);
            self.children[parent].push(child);
            self.parent[child] = parent;
            self.pred[child] = old[i].0;
            self.up[child] = !old[i].1;
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = entering;
        self.up[u_in] = on_first;
        self.children[v_in].push(u_in);

        let mut stack = vec![u_in];
        while let Some(w) = stack.pop() {
            let p = self.parent[w];
            let c = self.cost(self.pred[w]);
            self.depth[w] = self.depth[p] + 1;
            self.pi[w] = if self.up[w] { self.pi[p] - c } else { self.pi[p] + c };
            stack.extend_from_slice(&self.children[w]);
        }
    }
}

pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &CostMatrix) -> Result<TransportSolution> {
    let (n, m) = (supply.len(), demand.len());
    if cost.rows() != n || cost.cols() != m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            found: cost.rows() * cost.cols(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| demand[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::EmptySupport);
    }
    let (nr, nc) = (rows.len(), cols.len());
    let root = nr + nc;
    let n_real = nr * nc;
    let n_arcs = n_real + root;

    let mut costs = Vec::with_capacity(n_real);
    for &i in &rows {
        let row = cost.row(i);
        costs.extend(cols.iter().map(|&j| row[j]));
    }
    let max_abs = costs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let art_cost = (max_abs + 1.0) * (root + 1) as f64;
    let eps = 1e-12 * max_abs.max(1e-300);

    // Balance demand against supply so the root carries no residual mass.
    let total_supply: f64 = rows.iter().map(|&i| supply[i]).sum();
    let total_demand: f64 = cols.iter().map(|&j| demand[j]).sum();
    let scale = total_supply / total_demand;

    let mut net = Network {
        nr,
        nc,
        root,
        n_real,
        costs,
        art_cost,
        flow: vec![0.0; n_arcs],
        in_tree: vec![false; n_arcs],
        parent: vec![root; root + 1],
        pred: vec![NONE; root + 1],
        up: vec![false; root + 1],
        depth: vec![1; root + 1],
        pi: vec![0.0; root + 1],
        children: vec![Vec::new(); root + 1],
    };
    net.parent[root] = NONE;
    net.depth[root] = 0;
    net.children[root] = (0..root).collect();
    for u in 0..root {
        let e = n_real + u;
        net.pred[u] = e;
        net.in_tree[e] = true;
        if u < nr {
            net.up[u] = true;
            net.flow[e] = supply[rows[u]];
        } else {
            net.flow[e] = demand[cols[u - nr]] * scale;
            net.pi[u] = art_cost;
        }
    }

    let block = ((n_arcs as f64).sqrt() as usize).max(10).min(n_arcs);
    let max_pivots = 200 * n_arcs + 10_000;
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut left = block;
        let mut scanned = 0;
        while scanned < n_arcs {
            let e = next;
            next = if next + 1 == n_arcs { 0 } else { next + 1 };
            scanned += 1;
            if !net.in_tree[e] {
                let rc = net.reduced_cost(e);
                if rc < best_rc {
                    best_rc = rc;
                    best = e;
                }
            }
            left -= 1;
            if left == 0 {
                if best != NONE {
                    break;
                }
                left = block;
            }
        }
        if best == NONE {
            break;
        }
        net.pivot(best);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverFailure(format!(
                "network simplex exceeded {max_pivots} pivots on a {nr}x{nc} instance"
            )));
        }
    }

    let mut plan = vec![0.0; n * m];
    let mut value = 0.0;
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            let f = net.flow[r * nc + c];
            if f > 0.0 {
                plan[i * m + j] = f;
                value += f * net.costs[r * nc + c];
            }
        }
    }

    // Double c-transform: extends the duals to zero-mass rows and columns and
    // removes the big-M offsets that degenerate artificial arcs can leave.
    let u_active: Vec<f64> = (0..nr).map(|r| -net.pi[r]).collect();
    let mut v = vec![f64::INFINITY; m];
    for (r, &i) in rows.iter().enumerate() {
        let row = cost.row(i);
        for (vj, &c) in v.iter_mut().zip(row) {
            *vj = vj.min(c - u_active[r]);
        }
    }
    let u: Vec<f64> = (0..n)
        .map(|i| {
            cost.row(i)
                .iter()
                .zip(&v)
                .map(|(c, vj)| c - vj)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    Ok(TransportSolution {
        value,
        plan,
        u,
        v,
        pivots,
    })
}
