//! Seeded sampling. Every stochastic draw outside weight initialization goes
//! through a ChaCha stream keyed by `(seed, purpose)`, so runs do not depend
//! on libtorch's global generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tch::{Kind, Tensor};

pub mod purpose {
    pub const BATCHES: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const CODES: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const NOISE: u64 = 5;
}

pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// `rows × dim` standard-normal latent codes.
pub fn latent(rng: &mut impl Rng, rows: usize, dim: usize) -> Tensor {
    let values: Vec<f32> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::from_slice(&values).view([rows as i64, dim as i64])
}

pub fn uniform_labels(rng: &mut impl Rng, rows: usize, classes: usize) -> Vec<usize> {
    (0..rows).map(|_| rng.gen_range(0..classes)).collect()
}

pub fn labels_tensor(labels: &[usize]) -> Tensor {
    let v: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    Tensor::from_slice(&v).to_kind(Kind::Int64)
}

/// Index order for one epoch; a pure function of `(n, seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = stream(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15), purpose::BATCHES);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Endless minibatch indices cycling through shuffled epochs.
#[derive(Debug)]
pub struct BatchStream {
    n: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        assert!(n > 0 && batch > 0, "batch stream needs data and a positive batch size");
        Self {
            n,
            batch: batch.min(n),
            seed,
            epoch: 0,
            order: epoch_permutation(n, seed, 0),
            pos: 0,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next batch; a batch never straddles two epochs.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.n {
            self.epoch += 1;
            self.order = epoch_permutation(self.n, self.seed, self.epoch);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        out
    }
}
