use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Covariance, DomainSpec, ExperimentConfig, GaussianSpec};
use crate::classify::LabeledDataset;
use crate::dist::Point;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub sources: Vec<LabeledDataset>,
    pub target_train: LabeledDataset,
    pub target_test: LabeledDataset,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: a hash of the master seed, the source size and the
/// trial index, so trials can run in any order.
pub fn trial_seed(master: u64, source_size: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ source_size as u64) ^ trial as u64)
}

struct Sampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Sampler {
    fn new(spec: &GaussianSpec, domain: &str) -> Result<Self> {
        let d = spec.mean.len();
        let cov = match &spec.cov {
            Covariance::Diagonal(diag) => {
                if diag.len() != d {
                    return Err(Error::BadCovariance(format!(
                        "domain {domain}: diagonal has {} entries for dimension {d}",
                        diag.len()
                    )));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
            Covariance::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::BadCovariance(format!("domain {domain}: matrix is not {d}x{d}")));
                }
                DMatrix::from_fn(d, d, |i, j| rows[i][j])
            }
        };
        if (0..d).any(|i| (0..i).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()))) {
            return Err(Error::BadCovariance(format!("domain {domain}: matrix is not symmetric")));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::BadCovariance(format!("domain {domain}: Cholesky factorization failed")))?;
        Ok(Sampler {
            mean: DVector::from_column_slice(&spec.mean),
            factor: chol.l(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Point {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        let x = &self.mean + &self.factor * z;
        Point::new(x.as_slice().to_vec()).expect("finite Gaussian draw")
    }
}

fn draw_domain(spec: &DomainSpec, total: usize, rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
    let samplers = [Sampler::new(&spec.class1, &spec.name)?, Sampler::new(&spec.class2, &spec.name)?];
    let counts = [total - total / 2, total / 2];
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (c, sampler) in samplers.iter().enumerate() {
        for _ in 0..counts[c] {
            points.push(sampler.draw(rng));
            labels.push(c as u8 + 1);
        }
    }
    LabeledDataset::new(points, labels)?.with_domains(vec![spec.name.clone(); total])
}

/// Draws every source domain with `source_size` samples (half per class,
/// class 1 taking the odd one), then the target train and test sets, all
/// from one ChaCha stream seeded with `seed`.
pub fn generate_synthetic(config: &ExperimentConfig, source_size: usize, seed: u64) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = config
        .sources
        .iter()
        .map(|spec| draw_domain(spec, source_size, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let target_train = draw_domain(&config.target, config.target_train_size, &mut rng)?;
    let target_test = draw_domain(&config.target, config.target_test_size, &mut rng)?;
    Ok(SyntheticData {
        sources,
        target_train,
        target_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let c = ExperimentConfig::default();
        let a = generate_synthetic(&c, 20, 5).unwrap();
        let b = generate_synthetic(&c, 20, 5).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic(&c, 20, 6).unwrap();
        assert_ne!(a.sources[0].points, other.sources[0].points);
    }

    #[test]
    fn sizes_match() {
        let c = ExperimentConfig::default();
        let d = generate_synthetic(&c, 21, 1).unwrap();
        assert_eq!(d.sources.len(), 4);
        for s in &d.sources {
            assert_eq!(s.len(), 21);
            assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 11);
        }
        assert_eq!(d.target_test.len(), 60);
        assert!(d.target_train.is_empty());
    }

    #[test]
    fn default_layout_crosses_classes() {
        let c = ExperimentConfig::default();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let t1 = &c.target.class1.mean;
        let to_other = c.sources.iter().map(|s| dist(t1, &s.class2.mean)).fold(f64::INFINITY, f64::min);
        let to_same = c.sources.iter().map(|s| dist(t1, &s.class1.mean)).fold(f64::INFINITY, f64::min);
        assert!(to_other < to_same);
    }

    #[test]
    fn bad_covariance() {
        let mut c = ExperimentConfig::default();
        c.sources[0].class1.cov = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(generate_synthetic(&c, 4, 0), Err(Error::BadCovariance(_))));
        c.sources[0].class1.cov = Covariance::Diagonal(vec![1.0]);
        assert!(matches!(generate_synthetic(&c, 4, 0), Err(Error::BadCovariance(_))));
    }

    #[test]
    fn trial_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|t| trial_seed(1, 20, t)).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_ne!(trial_seed(1, 20, 0), trial_seed(1, 60, 0));
    }
}
