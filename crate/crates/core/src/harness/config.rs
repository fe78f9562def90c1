use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dist::Exponent;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Synthetic,
    Files,
}

/// Either the diagonal of a covariance matrix or the full matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl GaussianSpec {
    fn isotropic(mean: [f64; 2], var: f64) -> Self {
        GaussianSpec {
            mean: mean.to_vec(),
            cov: Covariance::Diagonal(vec![var; 2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub class1: GaussianSpec,
    pub class2: GaussianSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileInputs {
    /// One CSV per source domain; a file with a `domain` column is split by
    /// that column.
    pub sources: Vec<PathBuf>,
    pub target_test: PathBuf,
    #[serde(default)]
    pub target_train: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    /// Samples per source domain, split evenly between the two classes.
    #[serde(default = "defaults::source_sizes")]
    pub source_sizes: Vec<usize>,
    /// Target test samples, split evenly between the classes.
    #[serde(default = "defaults::target_test_size")]
    pub target_test_size: usize,
    /// Labeled target samples for the target-only baseline; 0 disables it.
    #[serde(default)]
    pub target_train_size: usize,
    #[serde(default = "defaults::k")]
    pub k: usize,
    /// Radius step; defaults to the larger initial radius over `radius_steps`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "defaults::radius_steps")]
    pub radius_steps: usize,
    #[serde(default = "defaults::significance")]
    pub significance: f64,
    /// Sample count for the chi-squared test; defaults to the pooled source
    /// sample count of the trial.
    #[serde(default)]
    pub effective_n: Option<usize>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "defaults::exponent")]
    pub exponent: Exponent,
    #[serde(default)]
    pub lambda_pen: Option<f64>,
    #[serde(default)]
    pub gamma_sep: Option<f64>,
    #[serde(default = "defaults::sources")]
    pub sources: Vec<DomainSpec>,
    #[serde(default = "defaults::target")]
    pub target: DomainSpec,
    #[serde(default)]
    pub files: Option<FileInputs>,
    #[serde(default)]
    pub output: OutputPaths,
}

mod defaults {
    use super::*;

    pub fn seed() -> u64 {
        20_240_601
    }
    pub fn trials() -> usize {
        20
    }
    pub fn source_sizes() -> Vec<usize> {
        vec![20, 60, 100, 200]
    }
    pub fn target_test_size() -> usize {
        60
    }
    pub fn k() -> usize {
        3
    }
    pub fn radius_steps() -> usize {
        10
    }
    pub fn significance() -> f64 {
        0.05
    }
    pub fn exponent() -> Exponent {
        Exponent::One
    }

    /// Four sources whose class-1 and class-2 means are arranged so that the
    /// target's class-1 mean sits closer to a class-2 source mean than to
    /// any class-1 source mean.
    pub fn sources() -> Vec<DomainSpec> {
        let var = 0.5;
        [
            ("a", [-1.5, 1.6], [1.5, 1.6]),
            ("b", [-1.5, -1.6], [1.5, -1.6]),
            ("c", [-3.2, 0.0], [-0.6, 0.0]),
            ("d", [0.6, 0.0], [3.2, 0.0]),
        ]
        .into_iter()
        .map(|(name, m1, m2)| DomainSpec {
            name: name.into(),
            class1: GaussianSpec::isotropic(m1, var),
            class2: GaussianSpec::isotropic(m2, var),
        })
        .collect()
    }

    pub fn target() -> DomainSpec {
        DomainSpec {
            name: "target".into(),
            class1: GaussianSpec::isotropic([-1.5, 0.0], 0.5),
            class2: GaussianSpec::isotropic([1.5, 0.0], 0.5),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(files), Some(dir)) = (config.files.as_mut(), path.parent()) {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            files.sources.iter_mut().for_each(fix);
            fix(&mut files.target_test);
            if let Some(p) = files.target_train.as_mut() {
                fix(p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.radius_steps == 0 {
            return fail("radius_steps must be at least 1".into());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return fail(format!("significance must lie in (0, 1), got {}", self.significance));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return fail(format!("delta must be positive, got {d}"));
            }
        }
        if let Some(l) = self.lambda_pen {
            if !(l >= 0.0 && l.is_finite()) {
                return fail(format!("lambda_pen must be nonnegative, got {l}"));
            }
        }
        if let Some(g) = self.gamma_sep {
            if !(g >= 0.0 && g.is_finite()) {
                return fail(format!("gamma_sep must be nonnegative, got {g}"));
            }
        }
        if self.lambda_pen.is_some() && self.gamma_sep.is_some() {
            return fail("lambda_pen and gamma_sep select different programs; set at most one".into());
        }
        if self.effective_n == Some(0) || self.max_iter == Some(0) {
            return fail("effective_n and max_iter must be positive".into());
        }
        match self.mode {
            Mode::Synthetic => {
                if self.source_sizes.is_empty() {
                    return fail("source_sizes is empty".into());
                }
                if let Some(s) = self.source_sizes.iter().find(|&&s| s < 2) {
                    return fail(format!("source size {s} leaves a class without samples"));
                }
                if self.target_test_size < 2 {
                    return fail("target_test_size must be at least 2".into());
                }
                if self.target_train_size == 1 {
                    return fail("target_train_size must be 0 or at least 2".into());
                }
                if self.sources.is_empty() {
                    return fail("no source domains".into());
                }
                let dim = self.target.class1.mean.len();
                for spec in self.sources.iter().chain(std::iter::once(&self.target)) {
                    for g in [&spec.class1, &spec.class2] {
                        if g.mean.len() != dim || dim == 0 {
                            return fail(format!("domain {}: every mean must have dimension {dim}", spec.name));
                        }
                    }
                }
            }
            Mode::Files => {
                let Some(files) = &self.files else {
                    return fail("mode = \"files\" needs a [files] table".into());
                };
                if files.sources.is_empty() {
                    return fail("[files] sources is empty".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.trials, 20);
        assert_eq!(c.source_sizes, vec![20, 60, 100, 200]);
        assert_eq!(c.sources.len(), 4);
        assert_eq!(c.exponent, Exponent::One);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(ExperimentConfig::from_toml("trails = 3"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml("[output]\ncsvv = \"x\""),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn covariance_forms() {
        let text = r#"
            [[sources]]
            name = "s"
            class1 = { mean = [0.0, 0.0], cov = [1.0, 2.0] }
            class2 = { mean = [1.0, 0.0], cov = [[1.0, 0.2], [0.2, 1.0]] }
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert!(matches!(c.sources[0].class1.cov, Covariance::Diagonal(_)));
        assert!(matches!(c.sources[0].class2.cov, Covariance::Full(_)));
    }

    #[test]
    fn invalid_values() {
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml("exponent = 3").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"files\"").is_err());
        assert!(ExperimentConfig::from_toml("lambda_pen = 1.0\ngamma_sep = 1.0").is_err());
    }
}
