//! Barycenter-centred uncertainty sets and the radius shrink loop.
//!
//! Each class gets a center, the W₂ barycenter of its source distributions,
//! and an initial radius, the largest W₂ distance from a source to that
//! center. The loop then solves for the least-favorable pair at the current
//! radii and shrinks both radii by `Δ` until a chi-squared test finds the
//! pair significantly different.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::{DiscreteDistribution, Exponent};
use crate::error::{Error, Result};
use crate::lfd::{LfdOptions, LfdSession, LfdSolution, LfdStatus};
use crate::transport::{barycenter, union_support, wasserstein};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassUncertaintyModel {
    pub class_label: u8,
    pub center: DiscreteDistribution,
    pub radius: f64,
    /// `W₂(S_m, center)` per source.
    pub source_distances: Vec<f64>,
}

/// Center at the barycenter of `sources` over their union support, radius
/// `max_m W₂(center, S_m)`.
pub fn initialize_model(sources: &[DiscreteDistribution], class_label: u8) -> Result<ClassUncertaintyModel> {
    if !matches!(class_label, 1 | 2) {
        return Err(Error::InvalidParameter(format!("class label must be 1 or 2, got {class_label}")));
    }
    if sources.is_empty() {
        return Err(Error::EmptySupport);
    }
    let support = union_support(sources);
    let center = barycenter(sources, &support)?;
    let source_distances = sources
        .iter()
        .map(|s| wasserstein(&center, s, Exponent::Two))
        .collect::<Result<Vec<_>>>()?;
    let radius = source_distances.iter().copied().fold(0.0, f64::max);
    Ok(ClassUncertaintyModel {
        class_label,
        center,
        radius,
        source_distances,
    })
}

/// Two-sample Pearson test on a shared support.
///
/// `T = n Σ (p1 - p2)² / (p1 + p2)` over atoms with positive total mass,
/// referred to a chi-squared law with one fewer degree of freedom than the
/// number of such atoms (at least one).
pub fn chi2_pvalue(p1: &[f64], p2: &[f64], effective_n: usize) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            found: p2.len(),
        });
    }
    let mut statistic = 0.0;
    let mut terms = 0usize;
    for (&a, &b) in p1.iter().zip(p2) {
        if a + b > 0.0 {
            statistic += (a - b) * (a - b) / (a + b);
            terms += 1;
        }
    }
    statistic *= effective_n as f64;
    if statistic <= 0.0 {
        return Ok(1.0);
    }
    let dof = terms.saturating_sub(1).max(1) as f64;
    let law = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(law.sf(statistic).clamp(0.0, 1.0))
}

/// Which least-favorable program the loop solves at each radius pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LfdVariant {
    Base,
    Separated { gamma_sep: f64 },
    Penalized { lambda_pen: f64, max_outer: usize, tol: f64 },
}

#[derive(Clone, Debug)]
pub struct RadiusOptions {
    pub delta: f64,
    /// Separate step for class 2; `delta` is used for both when `None`.
    pub class2_delta: Option<f64>,
    pub significance: f64,
    pub effective_n: usize,
    pub theta_floor: f64,
    pub max_iter: usize,
    pub exponent: Exponent,
    pub variant: LfdVariant,
    pub lfd: LfdOptions,
}

impl RadiusOptions {
    pub fn new(delta: f64, effective_n: usize) -> Self {
        Self {
            delta,
            class2_delta: None,
            significance: 0.05,
            effective_n,
            theta_floor: 0.0,
            max_iter: usize::MAX,
            exponent: Exponent::One,
            variant: LfdVariant::Base,
            lfd: LfdOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusIteration {
    pub theta1: f64,
    pub theta2: f64,
    pub objective: f64,
    pub p_value: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusTrace {
    pub delta: f64,
    pub significance: f64,
    pub iterations: Vec<RadiusIteration>,
    pub accepted: bool,
    pub status: LfdStatus,
    #[serde(rename = "final")]
    pub final_solution: LfdSolution,
    /// Solution at the starting radii.
    #[serde(skip)]
    pub initial_solution: Option<LfdSolution>,
}

impl RadiusTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn solve_variant(session: &mut LfdSession, theta: [f64; 2], variant: LfdVariant) -> Result<LfdSolution> {
    let [t1, t2] = theta;
    match variant {
        LfdVariant::Base => session.solve(t1, t2),
        LfdVariant::Separated { gamma_sep } => session.solve_separated(t1, t2, gamma_sep),
        LfdVariant::Penalized { lambda_pen, max_outer, tol } => session.solve_penalized(t1, t2, lambda_pen, max_outer, tol),
    }
}

/// Upper bound on the number of loop iterations for the given start.
pub fn iteration_bound(theta0: [f64; 2], options: &RadiusOptions) -> usize {
    let deltas = [options.delta, options.class2_delta.unwrap_or(options.delta)];
    let steps = (0..2)
        .map(|k| ((theta0[k] - options.theta_floor).max(0.0) / deltas[k]).ceil() as usize)
        .max()
        .unwrap_or(0);
    (steps + 1).min(options.max_iter)
}

/// Shrinks `(θ1, θ2)` from `theta0` until the least-favorable pair passes the
/// chi-squared test at `options.significance`.
///
/// Each iteration solves at the current radii, records the p-value, and
/// stops if it is below the significance level; otherwise both radii drop
/// by their step, clamped at the floor. Ending at the floor without
/// acceptance gives status `Degenerate`, and running out of `max_iter`
/// first gives `IterationLimit`.
pub fn learn_radii(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    theta0: [f64; 2],
    options: &RadiusOptions,
) -> Result<RadiusTrace> {
    let deltas = [options.delta, options.class2_delta.unwrap_or(options.delta)];
    for d in deltas {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius step must be positive, got {d}")));
        }
    }
    if !(options.significance > 0.0 && options.significance < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "significance must lie in (0, 1), got {}",
            options.significance
        )));
    }
    if !(options.theta_floor >= 0.0) {
        return Err(Error::InvalidRadius(options.theta_floor));
    }
    if options.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let mut theta = theta0.map(|t| t.max(options.theta_floor));
    let mut session = LfdSession::new(q1, q2, options.exponent, options.lfd.clone())?;
    let mut iterations = Vec::new();
    let mut initial = None;
    loop {
        let solution = solve_variant(&mut session, theta, options.variant)?;
        let p_value = chi2_pvalue(&solution.p1, &solution.p2, options.effective_n)?;
        let accepted = p_value < options.significance;
        iterations.push(RadiusIteration {
            theta1: theta[0],
            theta2: theta[1],
            objective: solution.objective,
            p_value,
            accepted,
        });
        if initial.is_none() {
            initial = Some(solution.clone());
        }
        let at_floor = theta.iter().all(|&t| t <= options.theta_floor);
        let status = if accepted {
            Some(LfdStatus::Optimal)
        } else if at_floor {
            Some(LfdStatus::Degenerate)
        } else if iterations.len() >= options.max_iter {
            Some(LfdStatus::IterationLimit)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(RadiusTrace {
                delta: options.delta,
                significance: options.significance,
                iterations,
                accepted,
                status,
                final_solution: solution,
                initial_solution: initial,
            });
        }
        for k in 0..2 {
            theta[k] = (theta[k] - deltas[k]).max(options.theta_floor);
        }
    }
}

/// [`learn_radii`] started from two class models.
pub fn learn_radii_from_models(
    class1: &ClassUncertaintyModel,
    class2: &ClassUncertaintyModel,
    options: &RadiusOptions,
) -> Result<RadiusTrace> {
    learn_radii(&class1.center, &class2.center, [class1.radius, class2.radius], options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Point;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::scalar(x)).collect()
    }

    fn dirac(x: f64) -> DiscreteDistribution {
        DiscreteDistribution::dirac(Point::scalar(x))
    }

    #[test]
    fn single_source_model() {
        let s = DiscreteDistribution::new(line(&[0.0, 1.0]), vec![0.3, 0.7]).unwrap();
        let m = initialize_model(std::slice::from_ref(&s), 1).unwrap();
        assert!(m.radius < 1e-6);
        assert_eq!(m.source_distances.len(), 1);
    }

    #[test]
    fn midpoint_model() {
        let support = line(&[0.0, 1.0, 2.0]);
        let a = DiscreteDistribution::new(support.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let b = DiscreteDistribution::new(support, vec![0.0, 0.0, 1.0]).unwrap();
        let m = initialize_model(&[a, b], 2).unwrap();
        assert!((m.center.weights()[1] - 1.0).abs() < 1e-6);
        assert!((m.radius - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_sources_have_zero_radius() {
        let s = DiscreteDistribution::uniform(line(&[0.0, 3.0])).unwrap();
        let m = initialize_model(&[s.clone(), s.clone(), s], 1).unwrap();
        assert!(m.radius < 1e-6);
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2_pvalue(&[0.5, 0.5], &[0.5, 0.5], 100).unwrap(), 1.0);
        let p = chi2_pvalue(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.5], 100).unwrap();
        assert!(p < 1e-30);
        let a = chi2_pvalue(&[0.6, 0.4], &[0.4, 0.6], 50).unwrap();
        let b = chi2_pvalue(&[0.6, 0.4], &[0.4, 0.6], 100).unwrap();
        assert!(b <= a);
    }

    #[test]
    fn separated_diracs_accept_immediately() {
        let trace = learn_radii(&dirac(0.0), &dirac(10.0), [1.0, 1.0], &RadiusOptions::new(0.5, 100)).unwrap();
        assert_eq!(trace.iterations.len(), 1);
        assert!(trace.accepted);
        assert!(trace.iterations[0].p_value < 0.05);
    }

    #[test]
    fn equal_centers_reach_floor() {
        let q = DiscreteDistribution::uniform(line(&[0.0, 1.0, 2.0])).unwrap();
        let options = RadiusOptions::new(0.3, 100);
        let trace = learn_radii(&q, &q, [1.0, 1.0], &options).unwrap();
        assert!(!trace.accepted);
        assert_eq!(trace.status, LfdStatus::Degenerate);
        assert!(trace.iterations.len() <= iteration_bound([1.0, 1.0], &options));
        let last = trace.iterations.last().unwrap();
        assert_eq!((last.theta1, last.theta2), (0.0, 0.0));
        assert!(trace
            .iterations
            .windows(2)
            .all(|w| w[1].theta1 + w[1].theta2 < w[0].theta1 + w[0].theta2));
    }

    #[test]
    fn large_step_takes_two_iterations() {
        let q = DiscreteDistribution::uniform(line(&[0.0, 1.0])).unwrap();
        let trace = learn_radii(&q, &q, [0.4, 0.4], &RadiusOptions::new(1.0, 10)).unwrap();
        assert_eq!(trace.iterations.len(), 2);
    }

    #[test]
    fn trace_json_has_final_solution() {
        let trace = learn_radii(&dirac(0.0), &dirac(10.0), [1.0, 1.0], &RadiusOptions::new(0.5, 100)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&trace.to_json().unwrap()).unwrap();
        assert_eq!(value["delta"], 0.5);
        assert!(value["final"]["p1"].is_array());
        assert_eq!(value["iterations"].as_array().unwrap().len(), 1);
    }
}
