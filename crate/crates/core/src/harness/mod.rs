//! End-to-end experiments: data generation or loading, barycenter models,
//! radius learning, target-domain evaluation against k-NN baselines, and
//! result files.

mod config;
mod io;
mod synth;

pub use config::{Covariance, DomainSpec, ExperimentConfig, FileInputs, GaussianSpec, Mode, OutputPaths};
pub use io::{emit_results, load_csv, load_distribution_csv, summarize, write_distribution_csv, SummaryRow, TrialRecord};
pub use synth::{generate_synthetic, splitmix64, trial_seed, SyntheticData};

use crate::classify::{evaluate, knn_baseline, LabeledDataset, LfdClassifier};
use crate::dist::{validate_distribution, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::lfd::{LfdOptions, LfdSolution};
use crate::par::{self, Execution};
use crate::radius::{initialize_model, learn_radii_from_models, ClassUncertaintyModel, LfdVariant, RadiusOptions, RadiusTrace};

/// Interior-point tolerance of the radius loop's solves. Looser than the
/// library default; accuracies only depend on the signs of log-ratios.
pub const HARNESS_TOLERANCE: f64 = 1e-8;

pub const METHOD_OURS: &str = "ours";
pub const METHOD_TRUNCATED: &str = "ours_truncated";
pub const METHOD_MIXED: &str = "mixed_knn";
pub const METHOD_TARGET: &str = "target_only";

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub our_accuracy: f64,
    /// Same classifier at the initial radii, without the shrink loop.
    pub our_truncated_accuracy: f64,
    pub baseline_mixed_accuracy: f64,
    pub target_only_accuracy: Option<f64>,
    pub models: [ClassUncertaintyModel; 2],
    pub radius_trace: RadiusTrace,
    pub solution: LfdSolution,
}

/// Per-class empirical distributions of each source domain, uniform over
/// that class's points. Domains without points of the class are skipped.
pub fn class_sources(sources: &[LabeledDataset], label: u8) -> Result<Vec<DiscreteDistribution>> {
    let mut out = Vec::new();
    for s in sources {
        let pts = s.class_points(label);
        if pts.is_empty() {
            continue;
        }
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        out.push(validate_distribution(pts, w)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter(format!("no source samples of class {label}")));
    }
    Ok(out)
}

pub fn class_models(sources: &[LabeledDataset]) -> Result<[ClassUncertaintyModel; 2]> {
    let m1 = initialize_model(&class_sources(sources, 1)?, 1)?;
    let m2 = initialize_model(&class_sources(sources, 2)?, 2)?;
    Ok([m1, m2])
}

/// Radius-loop settings for one trial; `pooled_n` is the number of source
/// samples of both classes.
pub fn radius_options(config: &ExperimentConfig, models: &[ClassUncertaintyModel; 2], pooled_n: usize) -> RadiusOptions {
    let widest = models[0].radius.max(models[1].radius);
    let delta = config.delta.unwrap_or(if widest > 0.0 {
        widest / config.radius_steps as f64
    } else {
        1.0
    });
    let mut options = RadiusOptions::new(delta, config.effective_n.unwrap_or(pooled_n).max(1));
    options.significance = config.significance;
    options.exponent = config.exponent;
    if let Some(m) = config.max_iter {
        options.max_iter = m;
    }
    options.variant = match (config.gamma_sep, config.lambda_pen) {
        (Some(gamma_sep), _) => LfdVariant::Separated { gamma_sep },
        (None, Some(lambda_pen)) => LfdVariant::Penalized {
            lambda_pen,
            max_outer: 50,
            tol: 1e-8,
        },
        (None, None) => LfdVariant::Base,
    };
    options.lfd = LfdOptions {
        keep_couplings: false,
        tolerance: HARNESS_TOLERANCE,
        ..LfdOptions::default()
    };
    options
}

/// Models and radius trace for a set of labeled source domains.
pub fn learn(config: &ExperimentConfig, sources: &[LabeledDataset]) -> Result<([ClassUncertaintyModel; 2], RadiusTrace)> {
    let models = class_models(sources)?;
    let pooled_n = sources.iter().map(|s| s.len()).sum();
    let options = radius_options(config, &models, pooled_n);
    let trace = learn_radii_from_models(&models[0], &models[1], &options)?;
    Ok((models, trace))
}

fn lfd_accuracy(solution: &LfdSolution, k: usize, test: &LabeledDataset) -> Result<f64> {
    let clf = LfdClassifier::new(solution, k)?;
    Ok(evaluate(|x| clf.predict(x), test, Execution::Sequential)?.accuracy)
}

fn knn_accuracy(train: &LabeledDataset, k: usize, test: &LabeledDataset) -> Result<f64> {
    Ok(evaluate(|x| knn_baseline(x, train, k), test, Execution::Sequential)?.accuracy)
}

/// Runs every method on one set of domains.
pub fn run_on_data(config: &ExperimentConfig, data: &SyntheticData) -> Result<PipelineOutput> {
    let (models, trace) = learn(config, &data.sources)?;
    let initial = trace
        .initial_solution
        .as_ref()
        .expect("the radius loop records its first solve");
    let our_truncated_accuracy = lfd_accuracy(initial, config.k, &data.target_test)?;
    let our_accuracy = lfd_accuracy(&trace.final_solution, config.k, &data.target_test)?;
    let parts: Vec<&LabeledDataset> = data.sources.iter().collect();
    let mixed = LabeledDataset::concat(&parts);
    let baseline_mixed_accuracy = knn_accuracy(&mixed, config.k, &data.target_test)?;
    let target_only_accuracy = if data.target_train.is_empty() {
        None
    } else {
        Some(knn_accuracy(&data.target_train, config.k, &data.target_test)?)
    };
    Ok(PipelineOutput {
        our_accuracy,
        our_truncated_accuracy,
        baseline_mixed_accuracy,
        target_only_accuracy,
        models,
        solution: trace.final_solution.clone(),
        radius_trace: trace,
    })
}

/// One synthetic trial.
pub fn run_pipeline(config: &ExperimentConfig, source_size: usize, seed: u64) -> Result<PipelineOutput> {
    run_on_data(config, &generate_synthetic(config, source_size, seed)?)
}

/// Splits a loaded file into domains by its `domain` column, if present.
fn split_domains(data: LabeledDataset) -> Vec<LabeledDataset> {
    let Some(domains) = data.domains.clone() else {
        return vec![data];
    };
    let mut names: Vec<&String> = Vec::new();
    for d in &domains {
        if !names.contains(&d) {
            names.push(d);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| &domains[i] == name).collect();
            LabeledDataset {
                points: idx.iter().map(|&i| data.points[i].clone()).collect(),
                labels: idx.iter().map(|&i| data.labels[i]).collect(),
                domains: Some(vec![name.clone(); idx.len()]),
            }
        })
        .collect()
}

/// Source domains and target sets named by a files-mode config.
pub fn load_files(files: &FileInputs) -> Result<SyntheticData> {
    let mut sources = Vec::new();
    for path in &files.sources {
        sources.extend(split_domains(load_csv(path)?));
    }
    let target_test = load_csv(&files.target_test)?;
    let target_train = match &files.target_train {
        Some(p) => load_csv(p)?,
        None => LabeledDataset::default(),
    };
    Ok(SyntheticData {
        sources,
        target_train,
        target_test,
    })
}

/// The data a config describes for one trial.
pub fn trial_data(config: &ExperimentConfig, source_size: usize, trial: usize) -> Result<SyntheticData> {
    match config.mode {
        Mode::Synthetic => generate_synthetic(config, source_size, trial_seed(config.seed, source_size, trial)),
        Mode::Files => load_files(config.files.as_ref().ok_or_else(|| Error::Config("missing [files]".into()))?),
    }
}

fn records(size: usize, trial: usize, out: &PipelineOutput) -> Vec<TrialRecord> {
    let mut rows = vec![
        (METHOD_OURS, out.our_accuracy),
        (METHOD_TRUNCATED, out.our_truncated_accuracy),
        (METHOD_MIXED, out.baseline_mixed_accuracy),
    ];
    if let Some(a) = out.target_only_accuracy {
        rows.push((METHOD_TARGET, a));
    }
    rows.into_iter()
        .map(|(method, accuracy)| TrialRecord {
            source_size: size,
            trial,
            method: method.to_string(),
            accuracy,
        })
        .collect()
}

/// All `(source_size, trial)` runs of a config, sorted by size then trial.
///
/// Each trial draws from its own seed, so the records do not depend on the
/// execution mode or on the order in which trials finish.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    if config.mode == Mode::Files {
        let data = trial_data(config, 0, 0)?;
        let size = data.sources.iter().map(|s| s.len()).sum();
        return Ok(records(size, 0, &run_on_data(config, &data)?));
    }
    let jobs: Vec<(usize, usize)> = config
        .source_sizes
        .iter()
        .flat_map(|&size| (0..config.trials).map(move |t| (size, t)))
        .collect();
    let outputs = par::try_map(exec, &jobs, |&(size, trial)| {
        let data = trial_data(config, size, trial)?;
        Ok::<_, Error>(records(size, trial, &run_on_data(config, &data)?))
    })?;
    let mut all: Vec<TrialRecord> = outputs.into_iter().flatten().collect();
    all.sort_by_key(|r| (r.source_size, r.trial));
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            trials: 2,
            source_sizes: vec![20],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn pipeline_runs_and_is_deterministic() {
        let c = small_config();
        let a = run_experiment(&c, Execution::Sequential).unwrap();
        let b = run_experiment(&c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    }

    #[test]
    fn truncated_uses_first_radii() {
        let c = small_config();
        let out = run_pipeline(&c, 20, 3).unwrap();
        let first = &out.radius_trace.iterations[0];
        assert_eq!(first.theta1, out.models[0].radius);
        assert_eq!(first.theta2, out.models[1].radius);
        let init = out.radius_trace.initial_solution.as_ref().unwrap();
        assert_eq!(init.theta1, first.theta1);
    }

    #[test]
    fn single_matching_source() {
        // One source drawn from the target law, no shrinking room.
        let mut c = small_config();
        c.sources = vec![DomainSpec {
            name: "same".into(),
            ..c.target.clone()
        }];
        c.delta = Some(10.0);
        let out = run_pipeline(&c, 40, 11).unwrap();
        assert!(out.models[0].radius < 1e-3 && out.models[1].radius < 1e-3);
        assert!((out.our_accuracy - out.baseline_mixed_accuracy).abs() <= 0.2);
    }
}
