use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_rng;

/// Row-major feature matrix with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} features for {} labels of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::ShapeMismatch(format!(
                "label {bad} >= {classes} classes"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices
                .iter()
                .flat_map(|&i| self.sample(i).iter().copied())
                .collect(),
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Shuffles then deals equal shards; the remainder is dropped.
    pub fn split_iid<R: Rng + ?Sized>(&self, clients: usize, rng: &mut R) -> Result<Vec<Dataset>> {
        let per = self.len() / clients.max(1);
        if clients == 0 || per == 0 {
            return Err(Error::EmptyDataset("not enough samples for one per client"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        Ok(order
            .chunks(per)
            .take(clients)
            .map(|c| self.subset(c))
            .collect())
    }
}

/// Gaussian blobs centred on a circle, one blob per class, in two dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticBlobs {
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub radius: f64,
    pub spread: f64,
}

impl Default for SyntheticBlobs {
    fn default() -> Self {
        Self {
            classes: 4,
            train: 2000,
            test: 500,
            radius: 3.0,
            spread: 0.6,
        }
    }
}

impl SyntheticBlobs {
    /// Returns `(train, test)`; labels cycle through the classes.
    pub fn generate(&self, seed: u64) -> (Dataset, Dataset) {
        let mut rng = derive_rng(seed, "blobs", &[]);
        let noise = Normal::new(0.0, self.spread).expect("spread is finite and non-negative");
        let centres: Vec<(f64, f64)> = (0..self.classes)
            .map(|c| {
                let angle = std::f64::consts::TAU * c as f64 / self.classes as f64;
                (self.radius * angle.cos(), self.radius * angle.sin())
            })
            .collect();
        let mut make = |count: usize| {
            let mut features = Vec::with_capacity(count * 2);
            let labels: Vec<usize> = (0..count).map(|i| i % self.classes).collect();
            for &label in &labels {
                let (cx, cy) = centres[label];
                features.push(cx + noise.sample(&mut rng));
                features.push(cy + noise.sample(&mut rng));
            }
            Dataset {
                features,
                dim: 2,
                labels,
                classes: self.classes,
            }
        };
        let train = make(self.train);
        let test = make(self.test);
        (train, test)
    }
}
