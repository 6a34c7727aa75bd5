#![allow(dead_code)]

use plr_core::config::{ArchSpec, DatasetId};
use plr_nn::data::{LabeledDataset, Split};
use tch::{Kind, Tensor};

pub fn tiny_arch() -> ArchSpec {
    ArchSpec {
        clf_conv1: 4,
        clf_conv2: 4,
        clf_fc: 16,
        gen_base: 8,
        disc_base: 4,
    }
}

/// Class `k` images are a constant level plus a little seeded noise.
pub fn synthetic(n: usize, classes: usize, channels: usize, seed: i64) -> LabeledDataset {
    tch::manual_seed(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let levels: Vec<f32> = labels
        .iter()
        .map(|&l| -0.9 + 1.8 * l as f32 / (classes - 1) as f32)
        .collect();
    let base = Tensor::from_slice(&levels).view([n as i64, 1, 1, 1]);
    let noise = Tensor::randn([n as i64, channels as i64, 32, 32], (Kind::Float, tch::Device::Cpu)) * 0.05;
    LabeledDataset {
        name: DatasetId::Mnist,
        split: Split::Train,
        images: (base + noise).clamp(-1.0, 1.0),
        labels,
        classes,
    }
}
