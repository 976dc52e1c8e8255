//! Isotropic Gaussian clusters standing in for image classes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterRole {
    Known,
    Novel,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub mean: Vec<f64>,
    pub stddev: f64,
    pub count: usize,
    pub role: ClusterRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dimension: usize,
    pub clusters: Vec<ClusterSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("synthetic dimension must be positive".into()));
        }
        let mut names: Vec<&str> = Vec::new();
        for c in &self.clusters {
            if c.mean.len() != self.dimension {
                return Err(Error::Config(format!(
                    "cluster `{}` mean has {} coordinates, dimension is {}",
                    c.name,
                    c.mean.len(),
                    self.dimension
                )));
            }
            if !(c.stddev > 0.0 && c.stddev.is_finite()) {
                return Err(Error::Config(format!("cluster `{}` stddev must be > 0", c.name)));
            }
            if c.count == 0 {
                return Err(Error::Config(format!("cluster `{}` is empty", c.name)));
            }
            if names.contains(&c.name.as_str()) {
                return Err(Error::Config(format!("duplicate cluster name `{}`", c.name)));
            }
            names.push(&c.name);
        }
        let count = |r| self.clusters.iter().filter(|c| c.role == r).count();
        if count(ClusterRole::Known) < 2 {
            return Err(Error::Config("need at least 2 known clusters".into()));
        }
        if count(ClusterRole::Novel) < 1 {
            return Err(Error::Config("need at least 1 novel cluster".into()));
        }
        Ok(())
    }
}

/// Draws every cluster in spec order and routes it by role. Returns
/// `(known, novel, reference)`; the reference set is empty when the spec has
/// no reference clusters.
pub fn synth_gaussian(spec: &SyntheticSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed, 11);
    let mut parts: [(Vec<Sample>, Vec<String>); 3] = Default::default();
    for c in &spec.clusters {
        let slot = match c.role {
            ClusterRole::Known => 0,
            ClusterRole::Novel => 1,
            ClusterRole::Reference => 2,
        };
        let label = parts[slot].1.len();
        parts[slot].1.push(c.name.clone());
        for _ in 0..c.count {
            let x = c
                .mean
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + c.stddev * z
                })
                .collect();
            parts[slot].0.push(Sample {
                x: Tensor::vector(x),
                label,
            });
        }
    }
    let [(ks, kn), (ns, nn), (rs, rn)] = parts;
    let tag = format!("synthetic:seed={}", spec.seed);
    let reference = if rn.is_empty() {
        Dataset::empty(format!("{tag} [reference]"))
    } else {
        Dataset::new(rs, rn, format!("{tag} [reference]"))?
    };
    Ok((
        Dataset::new(ks, kn, format!("{tag} [known]"))?,
        Dataset::new(ns, nn, format!("{tag} [novel]"))?,
        reference,
    ))
}

/// Parametric cluster layout for the bundled novelty benchmark.
///
/// Known and novel centres sit on mutually orthogonal axes of a random
/// rotation, known ones at distance `known_radius` from the origin and novel
/// ones at `novel_radius`. Reference centres are drawn uniformly from the
/// much wider cube `[-reference_radius, reference_radius]^d`, modelling data
/// from a different domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkLayout {
    pub dimension: usize,
    pub known_clusters: usize,
    pub novel_clusters: usize,
    pub reference_clusters: usize,
    pub samples_per_cluster: usize,
    pub stddev: f64,
    pub known_radius: f64,
    pub novel_radius: f64,
    pub reference_radius: f64,
    pub seed: u64,
}

impl Default for BenchmarkLayout {
    fn default() -> Self {
        Self {
            dimension: 8,
            known_clusters: 4,
            novel_clusters: 4,
            reference_clusters: 8,
            samples_per_cluster: 200,
            stddev: 1.0,
            known_radius: 3.0,
            novel_radius: 5.0,
            reference_radius: 8.0,
            seed: 0,
        }
    }
}

/// `n` orthonormal vectors from Gram-Schmidt on standard normal draws.
fn random_orthonormal(rng: &mut impl Rng, dimension: usize, n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a draw (numerically) inside the span so far is simply redrawn
        if norm > 1e-8 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis
}

impl BenchmarkLayout {
    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        if self.known_clusters + self.novel_clusters > self.dimension {
            return Err(Error::Config(format!(
                "{} known + {} novel clusters need at least as many dimensions, got {}",
                self.known_clusters, self.novel_clusters, self.dimension
            )));
        }
        let mut rng = seeded_rng(self.seed, 13);
        let axes = random_orthonormal(&mut rng, self.dimension, self.known_clusters + self.novel_clusters);
        let cluster = |name: String, mean: Vec<f64>, role| ClusterSpec {
            name,
            mean,
            stddev: self.stddev,
            count: self.samples_per_cluster,
            role,
        };
        let mut clusters = Vec::new();
        for (i, axis) in axes.iter().enumerate() {
            let (prefix, j, role, radius) = if i < self.known_clusters {
                ("known", i, ClusterRole::Known, self.known_radius)
            } else {
                ("novel", i - self.known_clusters, ClusterRole::Novel, self.novel_radius)
            };
            let mean = axis.iter().map(|a| a * radius).collect();
            clusters.push(cluster(format!("{prefix}-{j:03}"), mean, role));
        }
        for i in 0..self.reference_clusters {
            let mean = (0..self.dimension)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * self.reference_radius)
                .collect();
            clusters.push(cluster(format!("reference-{i:03}"), mean, ClusterRole::Reference));
        }
        let spec = SyntheticSpec {
            dimension: self.dimension,
            clusters,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}
