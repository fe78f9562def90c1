use crate::dist::{Coupling, CostMatrix, DiscreteDistribution};
use crate::error::{Error, Result};

use super::{check_shape, OtResult, OtStatus};

/// Marginal violation at which the final-ε iterations stop.
const TOLERANCE: f64 = 1e-10;

/// Entropically regularized transport, solved in the log domain with
/// ε-scaling, then rounded onto the transport polytope so the returned
/// plan has the exact marginals.
///
/// Reaching `max_iter` is not an error: the best iterate is returned with
/// [`OtStatus::IterationLimit`].
pub fn sinkhorn(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
    epsilon: f64,
    max_iter: usize,
) -> Result<OtResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sinkhorn regularization must be positive, got {epsilon}"
        )));
    }
    let (a, b) = (mu.weights(), nu.weights());
    check_shape(a, b, cost)?;
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let (nr, nc) = (rows.len(), cols.len());
    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j)))
        .collect();
    let log_a: Vec<f64> = rows.iter().map(|&i| a[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| b[j].ln()).collect();

    let mut f = vec![0.0; nr];
    let mut g = vec![0.0; nc];
    let mut scratch = vec![0.0; nr.max(nc)];

    let update_f = |f: &mut [f64], g: &[f64], eps: f64, scratch: &mut [f64]| {
        for r in 0..nr {
            let row = &c[r * nc..(r + 1) * nc];
            for (s, (gj, cj)) in scratch.iter_mut().zip(g.iter().zip(row)) {
                *s = (gj - cj) / eps;
            }
            f[r] = eps * (log_a[r] - log_sum_exp(&scratch[..nc]));
        }
    };
    let update_g = |f: &[f64], g: &mut [f64], eps: f64, scratch: &mut [f64]| {
        for k in 0..nc {
            for (r, s) in scratch[..nr].iter_mut().enumerate() {
                *s = (f[r] - c[r * nc + k]) / eps;
            }
            g[k] = eps * (log_b[k] - log_sum_exp(&scratch[..nr]));
        }
    };
    // After a g-update the column marginals are exact; measure the rows.
    let row_violation = |f: &[f64], g: &[f64], eps: f64| -> f64 {
        (0..nr)
            .map(|r| {
                let s: f64 = (0..nc).map(|k| ((f[r] + g[k] - c[r * nc + k]) / eps).exp()).sum();
                (s - a[rows[r]]).abs()
            })
            .sum()
    };

    let max_cost = c.iter().copied().fold(0.0f64, f64::max);
    let mut eps = max_cost.max(epsilon);
    let mut iterations = 0usize;
    let mut converged = false;
    'outer: loop {
        let last_stage = eps <= epsilon;
        let stage_tol = if last_stage { TOLERANCE } else { 1e-4 };
        let mut stage_iters = 0;
        loop {
            update_f(&mut f, &g, eps, &mut scratch);
            update_g(&f, &mut g, eps, &mut scratch);
            iterations += 1;
            stage_iters += 1;
            if iterations % 10 == 0 || stage_iters == 1 {
                let err = row_violation(&f, &g, eps);
                if err <= stage_tol {
                    if last_stage {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            if iterations >= max_iter {
                break 'outer;
            }
            if !last_stage && stage_iters >= 500 {
                break;
            }
        }
        eps = (eps * 0.5).max(epsilon);
    }

    let mut plan_active: Vec<f64> = (0..nr * nc)
        .map(|e| ((f[e / nc] + g[e % nc] - c[e]) / eps).exp())
        .collect();
    round_to_polytope(&mut plan_active, nr, nc, &rows.iter().map(|&i| a[i]).collect::<Vec<_>>(), &cols.iter().map(|&j| b[j]).collect::<Vec<_>>());

    let (n, m) = (a.len(), b.len());
    let mut plan = vec![0.0; n * m];
    let mut value = 0.0;
    for (r, &i) in rows.iter().enumerate() {
        for (k, &j) in cols.iter().enumerate() {
            let v = plan_active[r * nc + k];
            plan[i * m + j] = v;
            value += v * c[r * nc + k];
        }
    }

    let mut dual_v = vec![f64::INFINITY; m];
    for (k, &j) in cols.iter().enumerate() {
        dual_v[j] = g[k];
    }
    for (j, vj) in dual_v.iter_mut().enumerate() {
        if b[j] == 0.0 {
            *vj = rows
                .iter()
                .zip(&f)
                .map(|(&i, fi)| cost.get(i, j) - fi)
                .fold(f64::INFINITY, f64::min);
        }
    }
    let mut dual_u = vec![0.0; n];
    for (r, &i) in rows.iter().enumerate() {
        dual_u[i] = f[r];
    }
    for (i, ui) in dual_u.iter_mut().enumerate() {
        if a[i] == 0.0 {
            *ui = (0..m).map(|j| cost.get(i, j) - dual_v[j]).fold(f64::INFINITY, f64::min);
        }
    }

    Ok(OtResult {
        value,
        coupling: Coupling {
            rows: n,
            cols: m,
            plan,
            row_marginal: a.to_vec(),
            col_marginal: b.to_vec(),
        },
        dual_u,
        dual_v,
        status: if converged {
            OtStatus::Converged
        } else {
            OtStatus::IterationLimit
        },
        iterations,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Rescales rows and columns down to their targets, then spreads the
/// remaining deficit as a rank-one correction (Altschuler et al. rounding).
fn round_to_polytope(plan: &mut [f64], nr: usize, nc: usize, a: &[f64], b: &[f64]) {
    for r in 0..nr {
        let row = &mut plan[r * nc..(r + 1) * nc];
        let s: f64 = row.iter().sum();
        if s > a[r] {
            let x = a[r] / s;
            row.iter_mut().for_each(|v| *v *= x);
        }
    }
    let mut col = vec![0.0; nc];
    for r in 0..nr {
        for k in 0..nc {
            col[k] += plan[r * nc + k];
        }
    }
    for k in 0..nc {
        if col[k] > b[k] {
            let y = b[k] / col[k];
            for r in 0..nr {
                plan[r * nc + k] *= y;
            }
        }
    }
    let err_a: Vec<f64> = (0..nr)
        .map(|r| (a[r] - plan[r * nc..(r + 1) * nc].iter().sum::<f64>()).max(0.0))
        .collect();
    let err_b: Vec<f64> = (0..nc)
        .map(|k| (b[k] - (0..nr).map(|r| plan[r * nc + k]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for r in 0..nr {
            for k in 0..nc {
                plan[r * nc + k] += err_a[r] * err_b[k] / total;
            }
        }
    }
}
