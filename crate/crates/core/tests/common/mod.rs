#![allow(dead_code)]

use copytag::copy_model::{copy_logits, copy_posterior, marginal_over_types, MarginalMatrix};
use copytag::corpus::Sentence;
use copytag::retrieval::{NeighborEntry, NeighborSet};
use copytag::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect()).unwrap()
}

/// Neighbor set over placeholder sentences.
pub fn neighbor_set(labels: &[Vec<usize>], embeddings: &[Matrix<f64>]) -> NeighborSet<f64> {
    let entries = labels
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(id, (l, e))| NeighborEntry {
            id,
            sentence: Sentence::new(id, (0..l.len()).map(|k| format!("n{id}t{k}")).collect()).unwrap(),
            labels: l.clone(),
            embeddings: e.clone(),
        })
        .collect();
    NeighborSet::from_entries(entries).unwrap()
}

/// Query embeddings, neighbor labels and neighbor embeddings drawn from a seed.
pub struct Instance {
    pub x: Matrix<f64>,
    pub labels: Vec<Vec<usize>>,
    pub embeddings: Vec<Matrix<f64>>,
}

impl Instance {
    pub fn random(seed: u64, max_t: usize, max_neighbors: usize, max_len: usize, types: usize, scale: f64) -> Self {
        let mut r = rng(seed);
        let dim = r.random_range(1..=6);
        let t = r.random_range(1..=max_t);
        let m = r.random_range(1..=max_neighbors);
        let labels: Vec<Vec<usize>> =
            (0..m).map(|_| (0..r.random_range(1..=max_len)).map(|_| r.random_range(0..types)).collect()).collect();
        let embeddings = labels.iter().map(|l| uniform(&mut r, l.len(), dim, scale)).collect();
        let x = uniform(&mut r, t, dim, scale);
        Self { x, labels, embeddings }
    }

    pub fn set(&self) -> NeighborSet<f64> {
        neighbor_set(&self.labels, &self.embeddings)
    }

    pub fn mapped(&self, perm: &[usize]) -> NeighborSet<f64> {
        let labels: Vec<Vec<usize>> = self.labels.iter().map(|l| l.iter().map(|&y| perm[y]).collect()).collect();
        neighbor_set(&labels, &self.embeddings)
    }

    pub fn marginals(&self) -> MarginalMatrix<f64> {
        let ns = self.set();
        marginal_over_types(&copy_posterior(&copy_logits(&self.x, &ns).unwrap()).unwrap(), &ns).unwrap()
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[usize]> {
        self.labels.iter().map(Vec::as_slice)
    }
}
