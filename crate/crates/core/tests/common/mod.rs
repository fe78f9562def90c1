//! Reference computations that share no code with the library solvers.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use wdro::dist::{DiscreteDistribution, Point};

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.gen_range(-spread..spread)).collect()).unwrap())
        .collect()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> DiscreteDistribution {
    let pts = random_cloud(rng, n, dim, spread);
    let w = random_weights(rng, n);
    DiscreteDistribution::new(pts, w).unwrap()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Heap's algorithm over all permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    out.push(a.clone());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Optimal cost between two uniform clouds of equal size, by enumerating
/// matchings. For uniform equal-size marginals some optimal plan is a
/// permutation, so this is the exact transport cost.
pub fn matching_cost(x: &[Point], y: &[Point], power: i32) -> f64 {
    let n = x.len();
    assert_eq!(n, y.len());
    permutations(n)
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| euclid(x[i].coords(), y[j].coords()).powi(power))
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// W1 between two weightings of the same sorted 1-D support: the integral
/// of the absolute difference of the CDFs.
pub fn w1_line(xs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    let (mut fa, mut fb) = (0.0, 0.0);
    for i in 0..xs.len().saturating_sub(1) {
        fa += a[i];
        fb += b[i];
        total += (fa - fb).abs() * (xs[i + 1] - xs[i]);
    }
    total
}

/// W1 between two weighted sets of reals, by merging their supports.
pub fn w1_reals(x: &[f64], a: &[f64], y: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = x.iter().chain(y).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mass = |src: &[f64], w: &[f64]| -> Vec<f64> {
        pts.iter()
            .map(|p| src.iter().zip(w).filter(|(s, _)| *s == p).map(|(_, w)| w).sum())
            .collect()
    };
    w1_line(&pts, &mass(x, a), &mass(y, b))
}

/// Points of the probability simplex in `n` coordinates whose entries are
/// multiples of `1/steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Grid points within `radius` of `center` (1-D sorted support, W1), with a
/// tolerance that only admits points that are feasible up to rounding.
fn ball(grid: &[Vec<f64>], xs: &[f64], center: &[f64], radius: f64) -> Vec<Vec<f64>> {
    grid.iter().filter(|p| w1_line(xs, p, center) <= radius + 1e-12).cloned().collect()
}

fn affinity(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| 2.0 * (a * b).sqrt()).sum()
}

/// Refines around `best` on a finer grid: coordinates move by multiples of
/// `1/fine` within `window` of the coarse point.
fn local_grid(best: &[f64], fine: usize, window: usize) -> Vec<Vec<f64>> {
    let n = best.len();
    let base: Vec<i64> = best.iter().map(|&x| (x * fine as f64).round() as i64).collect();
    let w = window as i64;
    let mut out = Vec::new();
    let mut offsets = vec![-w; n - 1];
    loop {
        let mut p: Vec<i64> = (0..n - 1).map(|i| base[i] + offsets[i]).collect();
        let last = fine as i64 - p.iter().sum::<i64>();
        p.push(last);
        if p.iter().all(|&k| k >= 0) {
            out.push(p.iter().map(|&k| k as f64 / fine as f64).collect());
        }
        let mut i = 0;
        loop {
            if i == n - 1 {
                return out;
            }
            offsets[i] += 1;
            if offsets[i] <= w {
                break;
            }
            offsets[i] = -w;
            i += 1;
        }
    }
}

/// Best value of `objective(p1, p2)` over grid pairs inside the two W1
/// balls on a sorted 1-D support: a 0.01 grid, then a 0.001 grid around the
/// best coarse pair. Every candidate is feasible, so this is a lower bound
/// on the true maximum.
pub fn grid_max<F>(xs: &[f64], q1: &[f64], q2: &[f64], theta: [f64; 2], objective: F) -> (f64, Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = xs.len();
    let coarse = simplex_grid(n, 100);
    let b1 = ball(&coarse, xs, q1, theta[0]);
    let b2 = ball(&coarse, xs, q2, theta[1]);
    let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
    for p1 in &b1 {
        for p2 in &b2 {
            let v = objective(p1, p2);
            if v > best.0 {
                best = (v, p1.clone(), p2.clone());
            }
        }
    }
    let f1 = ball(&local_grid(&best.1, 1000, 10), xs, q1, theta[0]);
    let f2 = ball(&local_grid(&best.2, 1000, 10), xs, q2, theta[1]);
    for p1 in &f1 {
        for p2 in &f2 {
            let v = objective(p1, p2);
            if v > best.0 {
                best = (v, p1.clone(), p2.clone());
            }
        }
    }
    best
}

/// Grid oracle for the least-favorable objective `Σ 2√(p1 p2)`.
pub fn lfd_grid(xs: &[f64], q1: &[f64], q2: &[f64], theta: [f64; 2]) -> f64 {
    grid_max(xs, q1, q2, theta, affinity).0
}

/// Grid oracle for `Σ 2√(p1 p2) + λ W1(p1, p2)`.
pub fn penalized_grid(xs: &[f64], q1: &[f64], q2: &[f64], theta: [f64; 2], lambda: f64) -> f64 {
    grid_max(xs, q1, q2, theta, |p1, p2| affinity(p1, p2) + lambda * w1_line(xs, p1, p2)).0
}

/// Random sorted 1-D support of size `n` with two weightings on it.
pub fn line_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = Vec::new();
    while xs.len() < n {
        let x = (rng.gen_range(0.0..3.0) * 100.0f64).round() / 100.0;
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    xs.sort_by(f64::total_cmp);
    (xs, random_weights(rng, n), random_weights(rng, n))
}

pub fn on_line(xs: &[f64], w: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::new(xs.iter().map(|&x| Point::scalar(x)).collect(), w.to_vec()).unwrap()
}
